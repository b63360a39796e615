#include "semrelay/baseline/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace semrelay::baseline {

Bits token_to_bits(TokenId w) {
  if (w < 0 || w >= (1 << kTokenBits)) throw Error("token id does not fit 15 bits");
  Bits out(kTokenBits);
  for (int i = 0; i < kTokenBits; ++i) out[i] = (w >> (kTokenBits - 1 - i)) & 1;
  return out;
}

TokenId bits_to_token(const Bits& bits, int vocab_size) {
  if (bits.size() != static_cast<std::size_t>(kTokenBits)) throw Error("bits_to_token expects 15 bits");
  TokenId w = 0;
  for (auto b : bits) w = (w << 1) | (b & 1);
  return w < vocab_size ? w : kUnkId;
}

Complex qpsk_point(int q) {
  static const double a = 1.0 / std::numbers::sqrt2;
  return {(q & 2) ? a : -a, (q & 1) ? a : -a};
}

std::vector<Complex> qpsk_modulate(const Bits& bits) {
  if (bits.size() % 2 != 0) throw Error("QPSK needs an even number of bits");
  std::vector<Complex> out(bits.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = qpsk_point(2 * (bits[2 * i] & 1) + (bits[2 * i + 1] & 1));
  }
  return out;
}

int qpsk_decide(Complex y) { return 2 * (y.real() >= 0.0) + (y.imag() >= 0.0); }

Bits qpsk_demodulate_hard(const std::vector<Complex>& y) {
  Bits out(2 * y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int q = qpsk_decide(y[i]);
    out[2 * i] = static_cast<std::uint8_t>(q >> 1);
    out[2 * i + 1] = static_cast<std::uint8_t>(q & 1);
  }
  return out;
}

TransitionMatrix TransitionMatrix::identity() {
  TransitionMatrix m;
  for (int i = 0; i < 4; ++i) m.p[i][i] = 1.0;
  return m;
}

TransitionMatrix TransitionMatrix::uniform() {
  TransitionMatrix m;
  for (auto& row : m.p) row.fill(0.25);
  return m;
}

void TransitionMatrix::validate() const {
  for (const auto& row : p) {
    double sum = 0.0;
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) throw Error("transition matrix entries must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("transition matrix rows must sum to 1");
  }
}

void TransitionMatrix::save(std::ostream& out) const {
  out << "# transition matrix Pr(x_R | x_S), rows x_S, columns x_R\n";
  for (const auto& [k, v] : header) out << "# " << k << " = " << v << '\n';
  out << std::setprecision(17);
  for (const auto& row : p) {
    out << row[0] << ' ' << row[1] << ' ' << row[2] << ' ' << row[3] << '\n';
  }
}

TransitionMatrix TransitionMatrix::load(std::istream& in) {
  TransitionMatrix m;
  std::string line;
  int row = 0;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find(" = ");
      if (eq != std::string::npos && line.size() > 2) {
        m.header[line.substr(2, eq - 2)] = line.substr(eq + 3);
      }
      continue;
    }
    if (row >= 4) throw IngestError("transition matrix has more than 4 rows", lineno);
    std::istringstream ss(line);
    for (int c = 0; c < 4; ++c) {
      if (!(ss >> m.p[row][c])) throw IngestError("transition matrix row needs 4 numbers", lineno);
    }
    ++row;
  }
  if (row != 4) throw IngestError("transition matrix needs 4 rows", lineno);
  m.validate();
  return m;
}

void TransitionMatrix::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  save(out);
}

TransitionMatrix TransitionMatrix::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return load(in);
}

double log_likelihood(const Observation& obs, int q) {
  const Complex diff = obs.y - obs.gain * qpsk_point(q);
  return -std::log(std::numbers::pi * obs.noise_var) - std::norm(diff) / obs.noise_var;
}

int ml_fuse(const Observation& sd, const Observation& rd, const TransitionMatrix& P) {
  for (const auto* o : {&sd, &rd}) {
    if (!std::isfinite(o->y.real()) || !std::isfinite(o->y.imag()) || !std::isfinite(o->gain.real()) ||
        !std::isfinite(o->gain.imag()) || !std::isfinite(o->noise_var) || o->noise_var <= 0.0) {
      throw Error("ml_fuse: non-finite observation");
    }
  }
  std::array<double, 4> relay_ll{};
  for (int r = 0; r < 4; ++r) relay_ll[r] = log_likelihood(rd, r);
  const double peak = *std::max_element(relay_ll.begin(), relay_ll.end());

  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < 4; ++s) {
    double mix = 0.0;
    for (int r = 0; r < 4; ++r) mix += P.p[s][r] * std::exp(relay_ll[r] - peak);
    const double score = log_likelihood(sd, s) + (mix > 0.0 ? std::log(mix) : -std::numeric_limits<double>::infinity());
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

Bits token_codeword(TokenId w) {
  Bits bits = fec_encode(token_to_bits(w));
  bits.push_back(0);
  return bits;
}

SymbolLink send_symbols(const std::vector<Complex>& symbols, double distance_m,
                        const ChannelParams& params, Rng& rng) {
  std::vector<double> reals(2 * symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    reals[2 * i] = symbols[i].real();
    reals[2 * i + 1] = symbols[i].imag();
  }
  auto x = channel::apply_power_constraint(reals, params);
  auto link = channel::realize_link(distance_m, static_cast<int>(symbols.size()), params, rng);
  auto y = channel::renormalize_received(channel::transmit(x.block, link, params), link, params);

  // Received = gain * (scale/sqrt(p_T)) * symbol + noise.
  const double norm = 1.0 / (std::sqrt(params.tx_power_watts()) * link.amplitude);
  const Complex gain = channel::effective_gain(link, params) * norm * x.scale;
  // Floored so a noiseless link still yields usable likelihoods.
  const double noise_var = std::max(
      1e-12, channel::noise_power_watts(params) * std::norm(channel::noise_factor(link, params)) * norm * norm);
  SymbolLink out;
  out.samples.resize(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    out.samples[i] = {y.values[i], gain, noise_var};
  }
  return out;
}

Bits hard_bits(const SymbolLink& link) {
  std::vector<Complex> rotated(link.samples.size());
  for (std::size_t i = 0; i < rotated.size(); ++i) {
    rotated[i] = link.samples[i].y * std::conj(link.samples[i].gain);
  }
  return qpsk_demodulate_hard(rotated);
}

namespace {

TokenId decode_word(const Bits& bits256, int vocab_size, bool* failure) {
  Bits coded(bits256.begin(), bits256.begin() + kCodedBits);
  auto d = fec_decode(coded);
  *failure = d.failure;
  return bits_to_token(d.info, vocab_size);
}

}  // namespace

RelayOutput relay_forward(const SymbolLink& from_source, int vocab_size) {
  RelayOutput out;
  out.token = decode_word(hard_bits(from_source), vocab_size, &out.fec_failure);
  out.symbols = qpsk_modulate(token_codeword(out.token));
  return out;
}

TransitionMatrix calibrate_transitions(const std::vector<TokenSeq>& sentences, int vocab_size,
                                       const GeometrySampler& sampler, const ChannelParams& params,
                                       Rng& rng, long min_symbols) {
  long tokens_available = 0;
  for (const auto& s : sentences) tokens_available += static_cast<long>(s.size());
  if (tokens_available == 0) throw Error("calibrate_transitions: no tokens");

  std::array<std::array<double, 4>, 4> counts{};
  long counted = 0;
  while (counted < min_symbols) {
    for (const auto& s : sentences) {
      for (TokenId w : s) {
        const auto geometry = sampler(rng);
        const auto source = qpsk_modulate(token_codeword(w));
        const auto relay = relay_forward(send_symbols(source, geometry.d_sr, params, rng), vocab_size);
        for (std::size_t i = 0; i < source.size(); ++i) {
          counts[qpsk_decide(source[i])][qpsk_decide(relay.symbols[i])] += 1.0;
        }
        counted += static_cast<long>(source.size());
      }
      if (counted >= min_symbols) break;
    }
  }

  TransitionMatrix m;
  for (int s = 0; s < 4; ++s) {
    double total = 0.0;
    for (double c : counts[s]) total += c;
    for (int r = 0; r < 4; ++r) m.p[s][r] = total > 0.0 ? counts[s][r] / total : (r == s ? 1.0 : 0.0);
  }
  m.header["symbols"] = std::to_string(counted);
  m.header["fading"] = channel::to_string(params.fading);
  m.header["compensation"] = channel::to_string(params.compensation);
  m.header["tx_power_dbm"] = std::to_string(params.tx_power_dbm);
  m.header["pathloss_exponent"] = std::to_string(params.pathloss_exponent);
  return m;
}

BaselineEpisode run_baseline_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                                     const ChannelParams& params, const TransitionMatrix& P,
                                     int vocab_size, Rng& rng) {
  geometry.validate();
  P.validate();
  BaselineEpisode out;
  for (TokenId w : sentence) {
    const auto source = qpsk_modulate(token_codeword(w));
    const auto sr = send_symbols(source, geometry.d_sr, params, rng);
    const auto sd = send_symbols(source, geometry.d_sd, params, rng);
    const auto relay = relay_forward(sr, vocab_size);
    const auto rd = send_symbols(relay.symbols, geometry.d_rd, params, rng);
    out.relay_tokens.push_back(relay.token);
    out.relay_fec_failures += relay.fec_failure;

    Bits fused(2 * source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      const int q = ml_fuse(sd.samples[i], rd.samples[i], P);
      fused[2 * i] = static_cast<std::uint8_t>(q >> 1);
      fused[2 * i + 1] = static_cast<std::uint8_t>(q & 1);
    }
    bool failure = false;
    out.destination_tokens.push_back(decode_word(fused, vocab_size, &failure));
    out.destination_fec_failures += failure;
  }
  return out;
}

}  // namespace semrelay::baseline
