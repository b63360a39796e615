#include "semrelay/nn/graph.hpp"

#include <cmath>
#include <memory>
#include <limits>

namespace semrelay::nn {

namespace {

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
  }
}

}  // namespace

Var Graph::push(Matrix value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

void Graph::on_backward(Var v, std::function<void()> fn) {
  if (nodes_[v.id].needs_grad) nodes_[v.id].backward_fn = std::move(fn);
}

Var Graph::constant(Matrix value) { return push(std::move(value), false); }

Var Graph::param(const Parameter& p) {
  Var v = push(Matrix(), p.trainable);
  nodes_[v.id].ref = &p.value;
  on_backward(v, [this, v, &p] { p.grad += nodes_[v.id].grad; });
  return v;
}

Matrix& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Matrix& val = value(v);
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::backward(Var root, double seed) {
  if (value(root).size() != 1) throw Error("backward root must be a scalar");
  if (!needs_grad(root)) return;
  grad(root)(0, 0) += seed;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.grad.size() != 0 && n.backward_fn) n.backward_fn();
  }
}

Var add(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "add");
  Var out = g.push(g.value(a) + g.value(b), g.needs_grad(a) || g.needs_grad(b));
  g.on_backward(out, [&g, a, b, out] {
    const Matrix& d = g.grad(out);
    if (g.needs_grad(a)) g.grad(a) += d;
    if (g.needs_grad(b)) g.grad(b) += d;
  });
  return out;
}

Var add_row(Graph& g, Var a, Var row) {
  const Matrix& r = g.value(row);
  if (r.rows() != 1 || r.cols() != g.value(a).cols()) throw Error("add_row: shape mismatch");
  Matrix v = g.value(a);
  v.rowwise() += r.row(0);
  Var out = g.push(std::move(v), g.needs_grad(a) || g.needs_grad(row));
  g.on_backward(out, [&g, a, row, out] {
    const Matrix& d = g.grad(out);
    if (g.needs_grad(a)) g.grad(a) += d;
    if (g.needs_grad(row)) g.grad(row) += d.colwise().sum();
  });
  return out;
}

Var scale(Graph& g, Var a, double s) {
  Var out = g.push(g.value(a) * s, g.needs_grad(a));
  g.on_backward(out, [&g, a, out, s] { g.grad(a) += g.grad(out) * s; });
  return out;
}

Var matmul(Graph& g, Var a, Var b) {
  if (g.value(a).cols() != g.value(b).rows()) throw Error("matmul: inner dimension mismatch");
  Var out = g.push(g.value(a) * g.value(b), g.needs_grad(a) || g.needs_grad(b));
  g.on_backward(out, [&g, a, b, out] {
    const Matrix& d = g.grad(out);
    if (g.needs_grad(a)) g.grad(a).noalias() += d * g.value(b).transpose();
    if (g.needs_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * d;
  });
  return out;
}

Var matmul_nt(Graph& g, Var a, Var b) {
  if (g.value(a).cols() != g.value(b).cols()) throw Error("matmul_nt: inner dimension mismatch");
  Var out = g.push(g.value(a) * g.value(b).transpose(), g.needs_grad(a) || g.needs_grad(b));
  g.on_backward(out, [&g, a, b, out] {
    const Matrix& d = g.grad(out);
    if (g.needs_grad(a)) g.grad(a).noalias() += d * g.value(b);
    if (g.needs_grad(b)) g.grad(b).noalias() += d.transpose() * g.value(a);
  });
  return out;
}

Var rows(Graph& g, Var a, int start, int count) {
  const Matrix& v = g.value(a);
  if (start < 0 || count < 0 || start + count > v.rows()) throw Error("rows: range out of bounds");
  Var out = g.push(v.middleRows(start, count), g.needs_grad(a));
  g.on_backward(out, [&g, a, out, start, count] {
    g.grad(a).middleRows(start, count) += g.grad(out);
  });
  return out;
}

Var concat_cols(Graph& g, Var a, Var b) {
  const Matrix& va = g.value(a);
  const Matrix& vb = g.value(b);
  if (va.rows() != vb.rows()) throw Error("concat_cols: row mismatch");
  Matrix v(va.rows(), va.cols() + vb.cols());
  v << va, vb;
  const auto ca = va.cols();
  const auto cb = vb.cols();
  Var out = g.push(std::move(v), g.needs_grad(a) || g.needs_grad(b));
  g.on_backward(out, [&g, a, b, out, ca, cb] {
    const Matrix& d = g.grad(out);
    if (g.needs_grad(a)) g.grad(a) += d.leftCols(ca);
    if (g.needs_grad(b)) g.grad(b) += d.rightCols(cb);
  });
  return out;
}

Var gather_rows(Graph& g, Var table, const std::vector<int>& index) {
  const Matrix& t = g.value(table);
  Matrix v(static_cast<Eigen::Index>(index.size()), t.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= t.rows()) throw Error("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = t.row(index[i]);
  }
  Var out = g.push(std::move(v), g.needs_grad(table));
  g.on_backward(out, [&g, table, out, index] {
    const Matrix& d = g.grad(out);
    Matrix& dt = g.grad(table);
    for (std::size_t i = 0; i < index.size(); ++i) dt.row(index[i]) += d.row(static_cast<Eigen::Index>(i));
  });
  return out;
}

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

Var gelu(Graph& g, Var a) {
  Matrix v = g.value(a).unaryExpr([](double x) { return gelu_value(x); });
  Var out = g.push(std::move(v), g.needs_grad(a));
  g.on_backward(out, [&g, a, out] {
    const Matrix& x = g.value(a);
    const Matrix& d = g.grad(out);
    Matrix& da = g.grad(a);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double xi = x.data()[i];
      const double u = kGeluK * (xi + kGeluC * xi * xi * xi);
      const double t = std::tanh(u);
      const double du = kGeluK * (1.0 + 3.0 * kGeluC * xi * xi);
      da.data()[i] += d.data()[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du);
    }
  });
  return out;
}

Var prelu(Graph& g, Var a, Var slope) {
  const double s = g.value(slope)(0, 0);
  Matrix v = g.value(a).unaryExpr([s](double x) { return x > 0.0 ? x : s * x; });
  Var out = g.push(std::move(v), g.needs_grad(a) || g.needs_grad(slope));
  g.on_backward(out, [&g, a, slope, out] {
    const double s = g.value(slope)(0, 0);
    const Matrix& x = g.value(a);
    const Matrix& d = g.grad(out);
    if (g.needs_grad(a)) {
      Matrix& da = g.grad(a);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        da.data()[i] += d.data()[i] * (x.data()[i] > 0.0 ? 1.0 : s);
      }
    }
    if (g.needs_grad(slope)) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x.data()[i] <= 0.0) acc += d.data()[i] * x.data()[i];
      }
      g.grad(slope)(0, 0) += acc;
    }
  });
  return out;
}

void layer_norm_rows(const Matrix& x, const RowVector& gain, const RowVector& shift, double eps,
                     Matrix& out) {
  out.resize(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mean).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((x.row(r).array() - mean) * inv * gain.array() + shift.array()).matrix();
  }
}

Var layer_norm(Graph& g, Var a, Var gain, Var shift, double eps) {
  const Matrix& x = g.value(a);
  const Eigen::Index rows_n = x.rows();
  const Eigen::Index cols_n = x.cols();
  if (g.value(gain).cols() != cols_n || g.value(shift).cols() != cols_n) {
    throw Error("layer_norm: parameter width mismatch");
  }
  auto xhat = std::make_shared<Matrix>(rows_n, cols_n);
  auto inv_std = std::make_shared<Eigen::VectorXd>(rows_n);
  for (Eigen::Index r = 0; r < rows_n; ++r) {
    const double mean = x.row(r).sum() / static_cast<double>(cols_n);
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(cols_n);
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.row(r).array() - mean) * (*inv_std)(r);
  }
  Matrix v = *xhat;
  v.array().rowwise() *= g.value(gain).row(0).array();
  v.rowwise() += g.value(shift).row(0);
  Var out = g.push(std::move(v), g.needs_grad(a) || g.needs_grad(gain) || g.needs_grad(shift));
  g.on_backward(out, [&g, a, gain, shift, out, xhat, inv_std] {
    const Matrix& d = g.grad(out);
    if (g.needs_grad(gain)) g.grad(gain) += (d.array() * xhat->array()).colwise().sum().matrix();
    if (g.needs_grad(shift)) g.grad(shift) += d.colwise().sum();
    if (g.needs_grad(a)) {
      const double n = static_cast<double>(d.cols());
      Matrix dxhat = d;
      dxhat.array().rowwise() *= g.value(gain).row(0).array();
      Matrix& da = g.grad(a);
      for (Eigen::Index r = 0; r < d.rows(); ++r) {
        const double m1 = dxhat.row(r).sum() / n;
        const double m2 = dxhat.row(r).dot(xhat->row(r)) / n;
        da.row(r).array() +=
            (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
      }
    }
  });
  return out;
}

Var attention(Graph& g, Var q, Var k, Var v, int heads, bool causal) {
  const Matrix& Q = g.value(q);
  const Matrix& K = g.value(k);
  const Matrix& V = g.value(v);
  const Eigen::Index tq = Q.rows();
  const Eigen::Index tk = K.rows();
  const Eigen::Index width = Q.cols();
  if (K.cols() != width || V.cols() != width || V.rows() != tk || tk < tq) {
    throw Error("attention: shape mismatch");
  }
  if (heads <= 0 || width % heads != 0) throw Error("attention: width not divisible by heads");
  const Eigen::Index dh = width / heads;
  const Eigen::Index offset = tk - tq;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<Matrix>>(heads);
  Matrix result(tq, width);
  for (int h = 0; h < heads; ++h) {
    Matrix s = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose() * inv_sqrt;
    for (Eigen::Index i = 0; i < tq; ++i) {
      const Eigen::Index visible = causal ? offset + i + 1 : tk;
      const double mx = s.row(i).head(visible).maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j < tk; ++j) {
        const double e = j < visible ? std::exp(s(i, j) - mx) : 0.0;
        s(i, j) = e;
        z += e;
      }
      s.row(i) /= z;
    }
    result.middleCols(h * dh, dh).noalias() = s * V.middleCols(h * dh, dh);
    (*probs)[h] = std::move(s);
  }
  Var out = g.push(std::move(result), g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v));
  g.on_backward(out, [&g, q, k, v, out, probs, heads, dh, inv_sqrt] {
    const Matrix& d = g.grad(out);
    const Matrix& Q = g.value(q);
    const Matrix& K = g.value(k);
    const Matrix& V = g.value(v);
    for (int h = 0; h < heads; ++h) {
      const Matrix& P = (*probs)[h];
      const auto dout = d.middleCols(h * dh, dh);
      if (g.needs_grad(v)) g.grad(v).middleCols(h * dh, dh).noalias() += P.transpose() * dout;
      if (!g.needs_grad(q) && !g.needs_grad(k)) continue;
      Matrix dp = dout * V.middleCols(h * dh, dh).transpose();
      Eigen::VectorXd rowdot = (dp.array() * P.array()).rowwise().sum();
      Matrix ds = (P.array() * (dp.array().colwise() - rowdot.array())).matrix() * inv_sqrt;
      if (g.needs_grad(q)) g.grad(q).middleCols(h * dh, dh).noalias() += ds * K.middleCols(h * dh, dh);
      if (g.needs_grad(k)) {
        g.grad(k).middleCols(h * dh, dh).noalias() += ds.transpose() * Q.middleCols(h * dh, dh);
      }
    }
  });
  return out;
}

Var power_normalize_rows(Graph& g, Var a, double power) {
  const Matrix& x = g.value(a);
  if (x.cols() % 2 != 0) throw Error("power_normalize_rows: odd width");
  const double uses = static_cast<double>(x.cols() / 2);
  auto scales = std::make_shared<Eigen::VectorXd>(x.rows());
  Matrix v = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double e = x.row(r).squaredNorm();
    (*scales)(r) = e > 0.0 ? std::sqrt(power * uses / e) : 0.0;
    v.row(r) *= (*scales)(r);
  }
  Var out = g.push(std::move(v), g.needs_grad(a));
  g.on_backward(out, [&g, a, out, scales] {
    const Matrix& x = g.value(a);
    const Matrix& d = g.grad(out);
    Matrix& da = g.grad(a);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double s = (*scales)(r);
      if (s == 0.0) continue;
      const double e = x.row(r).squaredNorm();
      const double proj = x.row(r).dot(d.row(r)) / e;
      da.row(r) += s * (d.row(r) - proj * x.row(r));
    }
  });
  return out;
}

Var complex_scale_rows(Graph& g, Var a, const std::vector<std::complex<double>>& factors) {
  const Matrix& x = g.value(a);
  if (x.cols() % 2 != 0) throw Error("complex_scale_rows: odd width");
  if (static_cast<Eigen::Index>(factors.size()) != x.rows()) {
    throw Error("complex_scale_rows: one factor per row required");
  }
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double c = factors[r].real(), s = factors[r].imag();
    for (Eigen::Index j = 0; j < x.cols(); j += 2) {
      v(r, j) = c * x(r, j) - s * x(r, j + 1);
      v(r, j + 1) = s * x(r, j) + c * x(r, j + 1);
    }
  }
  Var out = g.push(std::move(v), g.needs_grad(a));
  g.on_backward(out, [&g, a, out, factors] {
    const Matrix& d = g.grad(out);
    Matrix& da = g.grad(a);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const double c = factors[r].real(), s = factors[r].imag();
      for (Eigen::Index j = 0; j < d.cols(); j += 2) {
        da(r, j) += c * d(r, j) + s * d(r, j + 1);
        da(r, j + 1) += -s * d(r, j) + c * d(r, j + 1);
      }
    }
  });
  return out;
}

Var cross_entropy_sum(Graph& g, Var logits, const std::vector<int>& targets) {
  const Matrix& z = g.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw Error("cross_entropy_sum: one target per row required");
  }
  auto probs = std::make_shared<Matrix>(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    probs->row(r) = (z.row(r).array() - mx).exp().matrix();
    const double sum = probs->row(r).sum();
    probs->row(r) /= sum;
    const int t = targets[r];
    if (t < 0) continue;
    if (t >= z.cols()) throw Error("cross_entropy_sum: target out of range");
    loss += -(z(r, t) - mx - std::log(sum));
  }
  Matrix v(1, 1);
  v(0, 0) = loss;
  Var out = g.push(std::move(v), g.needs_grad(logits));
  g.on_backward(out, [&g, logits, out, probs, targets] {
    const double d = g.grad(out)(0, 0);
    Matrix& dz = g.grad(logits);
    for (Eigen::Index r = 0; r < dz.rows(); ++r) {
      const int t = targets[r];
      if (t < 0) continue;
      dz.row(r) += d * probs->row(r);
      dz(r, t) -= d;
    }
  });
  return out;
}

}  // namespace semrelay::nn
