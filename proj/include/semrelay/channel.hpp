#pragma once

#include <complex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semrelay/common.hpp"

namespace semrelay::channel {

using Complex = std::complex<double>;
using Rng = std::mt19937_64;

enum class Fading { awgn, rayleigh };
enum class Compensation { transmitter_inversion, receiver_equalization, none };

std::string to_string(Fading f);
std::string to_string(Compensation c);
Fading parse_fading(const std::string& s);
Compensation parse_compensation(const std::string& s);

struct ChannelParams {
  double n0_dbm_per_hz = -174.0;
  double bandwidth_hz = 1e6;
  double tx_power_dbm = 30.0;
  double pathloss_exponent = 4.0;
  Fading fading = Fading::awgn;
  Compensation compensation = Compensation::transmitter_inversion;
  // Replaces N0*W when set; used to run noiseless links.
  std::optional<double> noise_power_override;

  void validate() const;
  double tx_power_watts() const;
};

struct LinkGeometry {
  double d_sd = 4000.0;
  double d_sr = 2000.0;
  double d_rd = 2000.0;

  // d_rd is derived so that d_sr + d_rd == d_sd.
  static LinkGeometry make(double d_sd, double d_sr);
  static LinkGeometry from_relay_fraction(double d_sd, double gamma);
  double gamma() const { return d_sr / d_sd; }
  void validate() const;
};

// D complex channel uses. Reals are interleaved I/Q: (re0, im0, re1, im1, ...).
struct ChannelSymbolBlock {
  std::vector<Complex> values;

  static ChannelSymbolBlock from_reals(std::span<const double> reals);
  std::vector<double> to_reals() const;
  int uses() const { return static_cast<int>(values.size()); }
  // Mean |x|^2 per complex use.
  double mean_power() const;
};

struct PowerScaled {
  ChannelSymbolBlock block;
  // Factor applied to the input reals; 0 for the zero vector.
  double scale = 0.0;
};

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

// sigma_Z^2 = N0 * W, in watts.
double noise_power_watts(const ChannelParams& params);
// Large-scale power gain d^-alpha.
double path_gain(double distance_m, const ChannelParams& params);
// -10 log10(d^alpha * sigma_Z^2); assumes a 1 W transmitter.
double snr_db(double distance_m, const ChannelParams& params);

// 1 for AWGN, CN(0, 1) for Rayleigh.
Complex sample_fading(Rng& rng, const ChannelParams& params);

// Scales v so the mean power per complex use equals p_T.
PowerScaled apply_power_constraint(std::span<const double> v, const ChannelParams& params);

// One block-fading realization of a link: everything random that the channel
// applies to a token block.
struct LinkRealization {
  double distance_m = 0.0;
  Complex fading{1.0, 0.0};
  double amplitude = 1.0;  // sqrt(d^-alpha)
  std::vector<Complex> noise;
};

LinkRealization realize_link(double distance_m, int uses, const ChannelParams& params, Rng& rng);

// Y = hX + Z with the configured compensation mode.
ChannelSymbolBlock transmit(const ChannelSymbolBlock& x, const LinkRealization& link,
                            const ChannelParams& params);
ChannelSymbolBlock transmit(const ChannelSymbolBlock& x, double distance_m,
                            const ChannelParams& params, Rng& rng);

// Effective complex gain between the power-constrained input and the output
// after compensation: y = gain * x + noise_scale * z.
Complex effective_gain(const LinkRealization& link, const ChannelParams& params);
// Per-entry factor applied to the raw noise sample after compensation.
Complex noise_factor(const LinkRealization& link, const ChannelParams& params);

// Divides by the known large-scale amplitude sqrt(p_T d^-alpha) so learned
// receivers see a unit-power signal. Small-scale fading is not removed.
ChannelSymbolBlock renormalize_received(const ChannelSymbolBlock& y, const LinkRealization& link,
                                        const ChannelParams& params);

}  // namespace semrelay::channel
