#pragma once

#include <array>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "semrelay/baseline/bch.hpp"
#include "semrelay/channel.hpp"
#include "semrelay/common.hpp"

namespace semrelay::baseline {

using channel::ChannelParams;
using channel::Complex;
using channel::LinkGeometry;
using channel::Rng;

// ---- Source coding -------------------------------------------------------------

// Big-endian 15-bit index. Throws for ids outside [0, 32768).
Bits token_to_bits(TokenId w);
// Indices >= vocab_size decode to [UNK].
TokenId bits_to_token(const Bits& bits, int vocab_size);

// ---- QPSK ----------------------------------------------------------------------

// Constellation index q = 2*b0 + b1 for bit pair (b0, b1):
// 0 -> (-1,-1), 1 -> (-1,1), 2 -> (1,-1), 3 -> (1,1).
inline constexpr int kQpskPoints = 4;
Complex qpsk_point(int q);  // unit average power, i.e. scaled by 1/sqrt(2)

std::vector<Complex> qpsk_modulate(const Bits& bits);
// Per-axis sign; a value of exactly 0 decides bit 1.
Bits qpsk_demodulate_hard(const std::vector<Complex>& y);
int qpsk_decide(Complex y);

// ---- Transition matrix -----------------------------------------------------------

struct TransitionMatrix {
  // p[s][r] = Pr(x_R = r | x_S = s).
  std::array<std::array<double, 4>, 4> p{};
  std::map<std::string, std::string> header;

  static TransitionMatrix identity();
  static TransitionMatrix uniform();
  void validate() const;
  void save(std::ostream& out) const;
  static TransitionMatrix load(std::istream& in);
  void save_file(const std::string& path) const;
  static TransitionMatrix load_file(const std::string& path);
};

// Received sample after large-scale renormalization: y = gain * x + n with
// n ~ CN(0, noise_var) and x a unit-power constellation point.
struct Observation {
  Complex y;
  Complex gain{1.0, 0.0};
  double noise_var = 1.0;
};

// log Pr(y | x = point q).
double log_likelihood(const Observation& obs, int q);

// argmax over x_S of Pr(y_SD | x_S) sum_r Pr(x_R = r | x_S) Pr(y_RD | x_R = r).
// Ties go to the lowest constellation index.
int ml_fuse(const Observation& sd, const Observation& rd, const TransitionMatrix& P);

// ---- Link simulation --------------------------------------------------------------

// 256 bits per token: 255 coded bits and one zero pad bit, as 128 QPSK uses.
Bits token_codeword(TokenId w);

struct SymbolLink {
  std::vector<Observation> samples;
};

// Power constraint, the configured channel and the receiver renormalization;
// the returned observations carry the gain and noise variance the receiver
// knows.
SymbolLink send_symbols(const std::vector<Complex>& symbols, double distance_m,
                        const ChannelParams& params, Rng& rng);

// Coherent hard decisions on a link: rotate by conj(gain) before deciding.
Bits hard_bits(const SymbolLink& link);

struct RelayOutput {
  TokenId token = kUnkId;
  bool fec_failure = false;
  std::vector<Complex> symbols;  // re-encoded and re-modulated
};

// Hard demodulation, FEC decoding and re-encoding at the relay.
RelayOutput relay_forward(const SymbolLink& from_source, int vocab_size);

using GeometrySampler = std::function<LinkGeometry(Rng&)>;

// Empirical Pr(x_R | x_S) over the source->relay hop. Sentences are cycled
// until at least min_symbols symbols have been counted; each token draws a
// fresh geometry.
TransitionMatrix calibrate_transitions(const std::vector<TokenSeq>& sentences, int vocab_size,
                                       const GeometrySampler& sampler, const ChannelParams& params,
                                       Rng& rng, long min_symbols = 100000);

struct BaselineEpisode {
  TokenSeq relay_tokens;
  TokenSeq destination_tokens;
  int relay_fec_failures = 0;
  int destination_fec_failures = 0;
};

BaselineEpisode run_baseline_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                                     const ChannelParams& params, const TransitionMatrix& P,
                                     int vocab_size, Rng& rng);

}  // namespace semrelay::baseline
