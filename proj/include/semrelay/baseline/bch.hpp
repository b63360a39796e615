#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace semrelay::baseline {

using Bits = std::vector<std::uint8_t>;

// Arithmetic in GF(2^8) with primitive polynomial x^8 + x^4 + x^3 + x^2 + 1.
class GF256 {
 public:
  GF256();
  std::uint8_t mul(std::uint8_t a, std::uint8_t b) const;
  std::uint8_t div(std::uint8_t a, std::uint8_t b) const;
  std::uint8_t inv(std::uint8_t a) const;
  std::uint8_t pow_alpha(int e) const { return exp_[((e % 255) + 255) % 255]; }
  int log(std::uint8_t a) const { return log_[a]; }

 private:
  std::array<std::uint8_t, 512> exp_{};
  std::array<int, 256> log_{};
};

// Narrow-sense binary BCH code of length 255. With design distance 2t+1 the
// dimension is 255 - deg g.
class BchCode {
 public:
  explicit BchCode(int t);

  int n() const { return 255; }
  int k() const { return k_; }
  int t() const { return t_; }
  // Generator coefficients, lowest degree first.
  const std::vector<std::uint8_t>& generator() const { return generator_; }

  // Systematic: the first k codeword bits are the message.
  Bits encode(const Bits& message) const;

  struct Decoded {
    Bits message;
    bool failure = false;  // more errors than the decoder could locate
    int corrected = 0;
  };
  // Berlekamp-Massey plus Chien search. On failure the message part of the
  // received word is returned unchanged.
  Decoded decode(const Bits& received) const;

 private:
  GF256 gf_;
  int t_;
  int k_;
  std::vector<std::uint8_t> generator_;
};

// The code used by the conventional chain: BCH(255, 21), t = 55.
inline constexpr int kTokenBits = 15;
inline constexpr int kBchT = 55;
inline constexpr int kBchK = 21;
inline constexpr int kCodedBits = 255;
inline constexpr int kTransmittedBits = 256;

const BchCode& token_code();

// 15 information bits -> 255 coded bits (6 zero pad bits inside the message).
Bits fec_encode(const Bits& info);

struct FecResult {
  Bits info;  // 15 bits
  bool failure = false;
};
FecResult fec_decode(const Bits& coded);

}  // namespace semrelay::baseline
