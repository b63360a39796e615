#include "semrelay/channel.hpp"

#include <cmath>

namespace semrelay::channel {

std::string to_string(Fading f) { return f == Fading::awgn ? "awgn" : "rayleigh"; }

std::string to_string(Compensation c) {
  switch (c) {
    case Compensation::transmitter_inversion: return "transmitter_inversion";
    case Compensation::receiver_equalization: return "receiver_equalization";
    case Compensation::none: return "none";
  }
  return "?";
}

Fading parse_fading(const std::string& s) {
  if (s == "awgn") return Fading::awgn;
  if (s == "rayleigh") return Fading::rayleigh;
  throw Error("unknown fading kind: " + s);
}

Compensation parse_compensation(const std::string& s) {
  if (s == "transmitter_inversion") return Compensation::transmitter_inversion;
  if (s == "receiver_equalization") return Compensation::receiver_equalization;
  if (s == "none") return Compensation::none;
  throw Error("unknown compensation mode: " + s);
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

void ChannelParams::validate() const {
  if (!(pathloss_exponent > 0.0)) throw Error("path-loss exponent must be positive");
  if (!(bandwidth_hz > 0.0)) throw Error("bandwidth must be positive");
  if (noise_power_override) {
    if (!(*noise_power_override >= 0.0)) throw Error("noise power override must be >= 0");
  } else if (!(noise_power_watts(*this) > 0.0)) {
    throw Error("noise power must be positive");
  }
}

double ChannelParams::tx_power_watts() const { return dbm_to_watts(tx_power_dbm); }

LinkGeometry LinkGeometry::make(double d_sd, double d_sr) {
  LinkGeometry g{d_sd, d_sr, d_sd - d_sr};
  g.validate();
  return g;
}

LinkGeometry LinkGeometry::from_relay_fraction(double d_sd, double gamma) {
  return make(d_sd, gamma * d_sd);
}

void LinkGeometry::validate() const {
  if (!(d_sr > 0.0 && d_sr < d_sd)) throw Error("relay must lie strictly between source and destination");
  if (std::abs(d_rd - (d_sd - d_sr)) > 1e-9 * d_sd) throw Error("d_rd must equal d_sd - d_sr");
}

ChannelSymbolBlock ChannelSymbolBlock::from_reals(std::span<const double> reals) {
  if (reals.size() % 2 != 0) throw Error("I/Q real vector must have even length");
  ChannelSymbolBlock b;
  b.values.resize(reals.size() / 2);
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = {reals[2 * i], reals[2 * i + 1]};
  return b;
}

std::vector<double> ChannelSymbolBlock::to_reals() const {
  std::vector<double> out(2 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[2 * i] = values[i].real();
    out[2 * i + 1] = values[i].imag();
  }
  return out;
}

double ChannelSymbolBlock::mean_power() const {
  if (values.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : values) acc += std::norm(v);
  return acc / static_cast<double>(values.size());
}

double noise_power_watts(const ChannelParams& params) {
  if (params.noise_power_override) return *params.noise_power_override;
  return dbm_to_watts(params.n0_dbm_per_hz) * params.bandwidth_hz;
}

double path_gain(double distance_m, const ChannelParams& params) {
  if (!(distance_m > 0.0)) throw Error("link distance must be positive");
  return std::pow(distance_m, -params.pathloss_exponent);
}

double snr_db(double distance_m, const ChannelParams& params) {
  if (!(distance_m > 0.0)) throw Error("link distance must be positive");
  return -10.0 * (params.pathloss_exponent * std::log10(distance_m) +
                  std::log10(noise_power_watts(params)));
}

Complex sample_fading(Rng& rng, const ChannelParams& params) {
  if (params.fading == Fading::awgn) return {1.0, 0.0};
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  double re = n(rng);
  double im = n(rng);
  return {re, im};
}

PowerScaled apply_power_constraint(std::span<const double> v, const ChannelParams& params) {
  if (v.size() % 2 != 0) throw Error("I/Q real vector must have even length");
  double energy = 0.0;
  for (double x : v) energy += x * x;
  PowerScaled out;
  std::vector<double> scaled(v.begin(), v.end());
  if (energy > 0.0) {
    const double uses = static_cast<double>(v.size() / 2);
    out.scale = std::sqrt(params.tx_power_watts() * uses / energy);
    for (double& x : scaled) x *= out.scale;
  }
  out.block = ChannelSymbolBlock::from_reals(scaled);
  return out;
}

LinkRealization realize_link(double distance_m, int uses, const ChannelParams& params, Rng& rng) {
  LinkRealization link;
  link.distance_m = distance_m;
  link.amplitude = std::sqrt(path_gain(distance_m, params));
  link.fading = sample_fading(rng, params);
  const double sigma2 = noise_power_watts(params);
  link.noise.resize(uses);
  if (sigma2 > 0.0) {
    std::normal_distribution<double> n(0.0, std::sqrt(sigma2 / 2.0));
    for (auto& z : link.noise) {
      double re = n(rng);
      double im = n(rng);
      z = {re, im};
    }
  }
  return link;
}

Complex effective_gain(const LinkRealization& link, const ChannelParams& params) {
  switch (params.compensation) {
    case Compensation::transmitter_inversion:
    case Compensation::receiver_equalization:
      return {link.amplitude, 0.0};
    case Compensation::none:
      return link.fading * link.amplitude;
  }
  return {link.amplitude, 0.0};
}

Complex noise_factor(const LinkRealization& link, const ChannelParams& params) {
  if (params.compensation == Compensation::receiver_equalization) return 1.0 / link.fading;
  return {1.0, 0.0};
}

ChannelSymbolBlock transmit(const ChannelSymbolBlock& x, const LinkRealization& link,
                            const ChannelParams& params) {
  if (static_cast<int>(link.noise.size()) != x.uses()) {
    throw Error("link realization does not match the block length");
  }
  const Complex h = link.fading * link.amplitude;
  ChannelSymbolBlock y;
  y.values.resize(x.values.size());
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    Complex xi = x.values[i];
    if (params.compensation == Compensation::transmitter_inversion) xi /= link.fading;
    Complex yi = h * xi + link.noise[i];
    if (params.compensation == Compensation::receiver_equalization) yi /= link.fading;
    y.values[i] = yi;
  }
  return y;
}

ChannelSymbolBlock transmit(const ChannelSymbolBlock& x, double distance_m,
                            const ChannelParams& params, Rng& rng) {
  auto link = realize_link(distance_m, x.uses(), params, rng);
  return transmit(x, link, params);
}

ChannelSymbolBlock renormalize_received(const ChannelSymbolBlock& y, const LinkRealization& link,
                                        const ChannelParams& params) {
  const double s = 1.0 / (std::sqrt(params.tx_power_watts()) * link.amplitude);
  ChannelSymbolBlock out = y;
  for (auto& v : out.values) v *= s;
  return out;
}

}  // namespace semrelay::channel
