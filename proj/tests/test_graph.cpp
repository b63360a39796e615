#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "semrelay/nn/graph.hpp"

using namespace semrelay;
using namespace semrelay::nn;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Scalar probe u^T f(params) w with fixed random u, w; its gradient with
// respect to the output is dense.
double probe(const Builder& f, std::vector<Parameter>& params, const Matrix& u, const Matrix& w,
             bool backward) {
  Graph g(backward);
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(g.param(p));
  Var out = f(g, vars);
  Var s = matmul(g, matmul(g, g.constant(u), out), g.constant(w));
  if (backward) g.backward(s);
  return g.value(s)(0, 0);
}

// Compares analytic gradients against central differences for every entry.
void check_gradients(const Builder& f, std::vector<Parameter> params, int out_rows, int out_cols,
                     double tol = 1e-6, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  const Matrix u = random_matrix(1, out_rows, rng);
  const Matrix w = random_matrix(out_cols, 1, rng);
  for (auto& p : params) p.zero_grad();
  probe(f, params, u, w, true);
  const double h = 1e-5;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix numeric(params[k].value.rows(), params[k].value.cols());
    for (Eigen::Index i = 0; i < params[k].value.size(); ++i) {
      const double orig = params[k].value.data()[i];
      params[k].value.data()[i] = orig + h;
      const double up = probe(f, params, u, w, false);
      params[k].value.data()[i] = orig - h;
      const double dn = probe(f, params, u, w, false);
      params[k].value.data()[i] = orig;
      numeric.data()[i] = (up - dn) / (2 * h);
    }
    const double denom = std::max({numeric.norm(), params[k].grad.norm(), 1e-12});
    EXPECT_LT((numeric - params[k].grad).norm() / denom, tol) << "parameter " << params[k].name;
  }
}

Parameter P(const std::string& name, Matrix v) { return Parameter(name, std::move(v)); }

// Straightforward per-head attention with explicit loops.
Matrix naive_attention(const Matrix& Q, const Matrix& K, const Matrix& V, int heads, bool causal) {
  const int tq = Q.rows(), tk = K.rows(), width = Q.cols(), dh = width / heads;
  Matrix out = Matrix::Zero(tq, width);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < tq; ++i) {
      const int pos = tk - tq + i;
      std::vector<double> w(tk, 0.0);
      double z = 0.0;
      for (int j = 0; j < tk; ++j) {
        if (causal && j > pos) continue;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += Q(i, h * dh + c) * K(j, h * dh + c);
        w[j] = std::exp(s / std::sqrt(double(dh)));
        z += w[j];
      }
      for (int j = 0; j < tk; ++j) {
        for (int c = 0; c < dh; ++c) out(i, h * dh + c) += w[j] / z * V(j, h * dh + c);
      }
    }
  }
  return out;
}

}  // namespace

TEST(Graph, MatmulAddGradients) {
  std::mt19937_64 rng(1);
  check_gradients(
      [](Graph& g, const std::vector<Var>& v) {
        return add_row(g, add(g, matmul(g, v[0], v[1]), matmul_nt(g, v[0], v[2])), v[3]);
      },
      {P("a", random_matrix(3, 4, rng)), P("b", random_matrix(4, 5, rng)), P("c", random_matrix(5, 4, rng)),
       P("r", random_matrix(1, 5, rng))},
      3, 5);
}

TEST(Graph, ShapeOpGradients) {
  std::mt19937_64 rng(2);
  check_gradients(
      [](Graph& g, const std::vector<Var>& v) {
        Var c = concat_cols(g, rows(g, v[0], 1, 3), gather_rows(g, v[1], {2, 0, 2}));
        return scale(g, c, -1.7);
      },
      {P("a", random_matrix(5, 3, rng)), P("t", random_matrix(4, 2, rng))}, 3, 5);
}

TEST(Graph, ActivationGradients) {
  std::mt19937_64 rng(3);
  Matrix x = random_matrix(4, 6, rng);
  // Keep PReLU inputs away from the kink.
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.3;
  }
  check_gradients([](Graph& g, const std::vector<Var>& v) { return gelu(g, v[0]); }, {P("x", x)}, 4, 6);
  check_gradients([](Graph& g, const std::vector<Var>& v) { return prelu(g, v[0], v[1]); },
                  {P("x", x), P("s", Matrix::Constant(1, 1, 0.25))}, 4, 6);
}

TEST(Graph, LayerNormGradientsAndValues) {
  std::mt19937_64 rng(4);
  check_gradients([](Graph& g, const std::vector<Var>& v) { return layer_norm(g, v[0], v[1], v[2]); },
                  {P("x", random_matrix(3, 8, rng)), P("gain", random_matrix(1, 8, rng)),
                   P("shift", random_matrix(1, 8, rng))},
                  3, 8);
  Graph g(false);
  Matrix x(1, 4);
  x << 1, 2, 3, 4;
  Var y = layer_norm(g, g.constant(x), g.constant(Matrix::Ones(1, 4)), g.constant(Matrix::Zero(1, 4)));
  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  EXPECT_NEAR(g.value(y)(0, 0), -1.5 * inv, 1e-12);
  EXPECT_NEAR(g.value(y)(0, 3), 1.5 * inv, 1e-12);
  Var z = layer_norm(g, g.constant(Matrix::Zero(2, 4)), g.constant(Matrix::Ones(1, 4)),
                     g.constant(Matrix::Zero(1, 4)));
  EXPECT_TRUE(g.value(z).isZero());
}

TEST(Graph, AttentionMatchesNaiveAndGradients) {
  std::mt19937_64 rng(5);
  for (bool causal : {false, true}) {
    for (int tq : {3, 1}) {
      Matrix Q = random_matrix(tq, 6, rng), K = random_matrix(4, 6, rng), V = random_matrix(4, 6, rng);
      Graph g(false);
      Var out = attention(g, g.constant(Q), g.constant(K), g.constant(V), 2, causal);
      EXPECT_LT((g.value(out) - naive_attention(Q, K, V, 2, causal)).cwiseAbs().maxCoeff(), 1e-12);
    }
    check_gradients(
        [causal](Graph& g, const std::vector<Var>& v) { return attention(g, v[0], v[1], v[2], 3, causal); },
        {P("q", random_matrix(4, 6, rng)), P("k", random_matrix(4, 6, rng)), P("v", random_matrix(4, 6, rng))},
        4, 6);
  }
}

TEST(Graph, CausalAttentionIgnoresFutureKeys) {
  std::mt19937_64 rng(6);
  Matrix Q = random_matrix(4, 4, rng), K = random_matrix(4, 4, rng), V = random_matrix(4, 4, rng);
  Graph g(false);
  const Matrix base = g.value(attention(g, g.constant(Q), g.constant(K), g.constant(V), 2, true));
  K.row(3) *= 5.0;
  V.row(3).setConstant(9.0);
  Q.row(3).setConstant(-2.0);
  const Matrix changed = g.value(attention(g, g.constant(Q), g.constant(K), g.constant(V), 2, true));
  EXPECT_EQ(base.topRows(3), changed.topRows(3));
  EXPECT_NE(base.row(3), changed.row(3));
}

TEST(Graph, PowerNormalizeAndComplexScale) {
  std::mt19937_64 rng(7);
  check_gradients([](Graph& g, const std::vector<Var>& v) { return power_normalize_rows(g, v[0], 2.0); },
                  {P("x", random_matrix(3, 6, rng))}, 3, 6);
  const std::vector<std::complex<double>> f = {{0.3, -1.1}, {2.0, 0.5}};
  check_gradients([f](Graph& g, const std::vector<Var>& v) { return complex_scale_rows(g, v[0], f); },
                  {P("x", random_matrix(2, 4, rng))}, 2, 4);

  Graph g(false);
  Matrix x = random_matrix(2, 8, rng);
  x.row(1).setZero();
  const Matrix y = g.value(power_normalize_rows(g, g.constant(x), 1.0));
  EXPECT_NEAR(y.row(0).squaredNorm() / 4.0, 1.0, 1e-12);
  EXPECT_TRUE(y.row(1).isZero());
  Matrix c(1, 2);
  c << 1.0, 2.0;
  const Matrix r = g.value(complex_scale_rows(g, g.constant(c), {{0.0, 1.0}}));
  EXPECT_NEAR(r(0, 0), -2.0, 1e-15);
  EXPECT_NEAR(r(0, 1), 1.0, 1e-15);
}

TEST(Graph, CrossEntropy) {
  std::mt19937_64 rng(8);
  // Uniform logits give ln V per counted position; negative targets are skipped.
  Graph g(false);
  Var l = cross_entropy_sum(g, g.constant(Matrix::Constant(3, 7, 0.4)), {1, -1, 6});
  EXPECT_NEAR(g.value(l)(0, 0), 2.0 * std::log(7.0), 1e-12);

  std::vector<Parameter> ps = {P("z", random_matrix(3, 5, rng))};
  const std::vector<int> targets = {4, 0, -1};
  ps[0].zero_grad();
  {
    Graph gg;
    Var loss = cross_entropy_sum(gg, gg.param(ps[0]), targets);
    gg.backward(loss);
  }
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < ps[0].value.size(); ++i) {
    auto eval = [&] {
      Graph gg(false);
      return gg.value(cross_entropy_sum(gg, gg.param(ps[0]), targets))(0, 0);
    };
    const double o = ps[0].value.data()[i];
    ps[0].value.data()[i] = o + h;
    const double up = eval();
    ps[0].value.data()[i] = o - h;
    const double dn = eval();
    ps[0].value.data()[i] = o;
    EXPECT_NEAR(ps[0].grad.data()[i], (up - dn) / (2 * h), 1e-7);
  }
  EXPECT_TRUE(ps[0].grad.row(2).isZero());
}

TEST(Graph, FrozenParametersReceiveNoGradient) {
  std::mt19937_64 rng(9);
  Parameter a("a", random_matrix(2, 3, rng)), b("b", random_matrix(3, 2, rng)), unused("u", random_matrix(2, 2, rng));
  b.trainable = false;
  Graph g;
  Var out = matmul(g, g.param(a), g.param(b));
  g.param(unused);
  g.backward(cross_entropy_sum(g, out, {0, 1}));
  EXPECT_FALSE(a.grad.isZero());
  EXPECT_TRUE(b.grad.isZero());
  EXPECT_TRUE(unused.grad.isZero());
}

TEST(Graph, NonRecordingGraphHasNoGradients) {
  Parameter a("a", Matrix::Ones(1, 1));
  Graph g(false);
  Var v = scale(g, g.param(a), 3.0);
  EXPECT_FALSE(g.needs_grad(v));
  g.backward(v);
  EXPECT_EQ(a.grad(0, 0), 0.0);
}

TEST(Graph, ShapeErrors) {
  Graph g;
  Var a = g.constant(Matrix::Ones(2, 3));
  Var b = g.constant(Matrix::Ones(2, 2));
  EXPECT_THROW(add(g, a, b), Error);
  EXPECT_THROW(matmul(g, a, b), Error);
  EXPECT_THROW(rows(g, a, 1, 2), Error);
  EXPECT_THROW(gather_rows(g, a, {2}), Error);
  EXPECT_THROW(g.backward(a), Error);
  EXPECT_THROW(power_normalize_rows(g, g.constant(Matrix::Ones(1, 3)), 1.0), Error);
}
