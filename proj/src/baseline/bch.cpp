#include "semrelay/baseline/bch.hpp"

#include <set>

#include "semrelay/common.hpp"

namespace semrelay::baseline {

GF256::GF256() {
  int x = 1;
  for (int i = 0; i < 255; ++i) {
    exp_[i] = static_cast<std::uint8_t>(x);
    log_[x] = i;
    x <<= 1;
    if (x & 0x100) x ^= 0x11D;
  }
  for (int i = 255; i < 512; ++i) exp_[i] = exp_[i - 255];
  log_[0] = -1;
}

std::uint8_t GF256::mul(std::uint8_t a, std::uint8_t b) const {
  if (a == 0 || b == 0) return 0;
  return exp_[log_[a] + log_[b]];
}

std::uint8_t GF256::div(std::uint8_t a, std::uint8_t b) const {
  if (b == 0) throw Error("GF256 division by zero");
  if (a == 0) return 0;
  return exp_[(log_[a] - log_[b] + 255) % 255];
}

std::uint8_t GF256::inv(std::uint8_t a) const { return div(1, a); }

BchCode::BchCode(int t) : t_(t) {
  if (t < 1 || 2 * t >= 255) throw Error("BCH: unsupported t");
  // Roots: union of the cyclotomic cosets of alpha^1..alpha^2t.
  std::set<int> roots;
  for (int i = 1; i <= 2 * t; ++i) {
    int e = i;
    do {
      roots.insert(e);
      e = (2 * e) % 255;
    } while (e != i);
  }
  std::vector<std::uint8_t> g{1};
  for (int r : roots) {
    std::vector<std::uint8_t> next(g.size() + 1, 0);
    const std::uint8_t a = gf_.pow_alpha(r);
    for (std::size_t i = 0; i < g.size(); ++i) {
      next[i + 1] ^= g[i];
      next[i] ^= gf_.mul(g[i], a);
    }
    g = std::move(next);
  }
  for (auto c : g) {
    if (c > 1) throw Error("BCH: generator is not binary");
  }
  generator_ = g;
  k_ = 255 - static_cast<int>(roots.size());
}

// Codeword bit i is the coefficient of x^(254 - i).
Bits BchCode::encode(const Bits& message) const {
  if (static_cast<int>(message.size()) != k_) throw Error("BCH encode: wrong message length");
  const int r = n() - k_;
  // Remainder of m(x) x^r divided by g(x), long division high to low.
  std::vector<std::uint8_t> work(n(), 0);  // work[p] = coefficient of x^p
  for (int i = 0; i < k_; ++i) work[254 - i] = message[i] & 1;
  for (int p = 254; p >= r; --p) {
    if (!work[p]) continue;
    for (int j = 0; j <= r; ++j) work[p - r + j] ^= generator_[j];
  }
  Bits out(n());
  for (int i = 0; i < k_; ++i) out[i] = message[i] & 1;
  for (int i = k_; i < n(); ++i) out[i] = work[254 - i];
  return out;
}

BchCode::Decoded BchCode::decode(const Bits& received) const {
  if (static_cast<int>(received.size()) != n()) throw Error("BCH decode: wrong codeword length");
  Decoded out;
  Bits word(received.begin(), received.end());
  for (auto& b : word) b &= 1;

  std::vector<std::uint8_t> syn(2 * t_ + 1, 0);
  bool clean = true;
  for (int j = 1; j <= 2 * t_; ++j) {
    std::uint8_t s = 0;
    for (int i = 0; i < n(); ++i) {
      if (word[i]) s ^= gf_.pow_alpha(j * (254 - i));
    }
    syn[j] = s;
    clean = clean && s == 0;
  }
  if (!clean) {
    // Berlekamp-Massey for the error locator.
    std::vector<std::uint8_t> lambda{1}, prev{1};
    int L = 0, m = 1;
    std::uint8_t b = 1;
    for (int r = 1; r <= 2 * t_; ++r) {
      std::uint8_t d = syn[r];
      for (int i = 1; i <= L && i < static_cast<int>(lambda.size()); ++i) {
        d ^= gf_.mul(lambda[i], syn[r - i]);
      }
      if (d == 0) {
        ++m;
        continue;
      }
      const std::uint8_t coef = gf_.div(d, b);
      std::vector<std::uint8_t> next = lambda;
      if (next.size() < prev.size() + m) next.resize(prev.size() + m, 0);
      for (std::size_t i = 0; i < prev.size(); ++i) next[i + m] ^= gf_.mul(coef, prev[i]);
      if (2 * L <= r - 1) {
        prev = lambda;
        L = r - L;
        b = d;
        m = 1;
      } else {
        ++m;
      }
      lambda = std::move(next);
    }
    lambda.resize(L + 1);

    // Chien search: an error at power p makes lambda(alpha^-p) vanish.
    std::vector<int> positions;
    for (int p = 0; p < n(); ++p) {
      std::uint8_t v = 0;
      for (int i = 0; i <= L; ++i) v ^= gf_.mul(lambda[i], gf_.pow_alpha(-p * i));
      if (v == 0) positions.push_back(p);
    }
    if (L > t_ || static_cast<int>(positions.size()) != L) {
      out.failure = true;
    } else {
      for (int p : positions) word[254 - p] ^= 1;
      out.corrected = L;
    }
  }
  out.message.assign(word.begin(), word.begin() + k_);
  return out;
}

const BchCode& token_code() {
  static const BchCode code(kBchT);
  return code;
}

Bits fec_encode(const Bits& info) {
  if (info.size() != static_cast<std::size_t>(kTokenBits)) throw Error("fec_encode expects 15 bits");
  Bits message(kBchK, 0);
  std::copy(info.begin(), info.end(), message.begin());
  return token_code().encode(message);
}

FecResult fec_decode(const Bits& coded) {
  if (coded.size() != static_cast<std::size_t>(kCodedBits)) throw Error("fec_decode expects 255 bits");
  auto d = token_code().decode(coded);
  FecResult out;
  out.info.assign(d.message.begin(), d.message.begin() + kTokenBits);
  out.failure = d.failure;
  return out;
}

}  // namespace semrelay::baseline
