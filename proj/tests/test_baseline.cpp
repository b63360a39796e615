#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "semrelay/baseline/baseline.hpp"

using namespace semrelay;
using namespace semrelay::baseline;

namespace {

// Table-free GF(2^8) multiply by shift-and-add modulo 0x11D.
std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
  unsigned r = 0, x = a;
  while (b) {
    if (b & 1) r ^= x;
    x <<= 1;
    if (x & 0x100) x ^= 0x11D;
    b >>= 1;
  }
  return static_cast<std::uint8_t>(r);
}

// Evaluates the codeword polynomial sum_i c_i x^(254-i) at alpha^j by Horner.
std::uint8_t eval_at_alpha_power(const Bits& c, int j) {
  std::uint8_t a = 1;
  for (int k = 0; k < j; ++k) a = gf_mul(a, 2);
  std::uint8_t acc = 0;
  for (auto bit : c) acc = static_cast<std::uint8_t>(gf_mul(acc, a) ^ bit);
  return acc;
}

Bits random_bits(int n, Rng& rng) {
  std::bernoulli_distribution b(0.5);
  Bits out(n);
  for (auto& x : out) x = b(rng);
  return out;
}

void flip_random(Bits& bits, int count, Rng& rng) {
  std::vector<int> idx(bits.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int i = 0; i < count; ++i) bits[idx[i]] ^= 1;
}

double gaussian_pdf(Complex y, Complex mean, double var) {
  return std::exp(-std::norm(y - mean) / var) / (std::numbers::pi * var);
}

// Eq. 7 objective written directly in the probability domain.
int brute_force_fuse(const Observation& sd, const Observation& rd, const TransitionMatrix& P) {
  const Complex pts[4] = {Complex(-1, -1) / std::sqrt(2.0), Complex(-1, 1) / std::sqrt(2.0),
                          Complex(1, -1) / std::sqrt(2.0), Complex(1, 1) / std::sqrt(2.0)};
  int best = -1;
  double best_v = -1.0;
  for (int s = 0; s < 4; ++s) {
    double mix = 0.0;
    for (int r = 0; r < 4; ++r) mix += P.p[s][r] * gaussian_pdf(rd.y, rd.gain * pts[r], rd.noise_var);
    const double v = gaussian_pdf(sd.y, sd.gain * pts[s], sd.noise_var) * mix;
    if (v > best_v) {
      best_v = v;
      best = s;
    }
  }
  return best;
}

TransitionMatrix random_stochastic(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TransitionMatrix m;
  for (auto& row : m.p) {
    double s = 0.0;
    for (double& v : row) s += (v = u(rng));
    for (double& v : row) v /= s;
  }
  return m;
}

Observation random_obs(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  return {Complex(n(rng), n(rng)), Complex(u(rng), n(rng) * 0.3), u(rng)};
}

}  // namespace

TEST(SourceCoding, TokenBits) {
  EXPECT_EQ(token_to_bits(0), Bits(15, 0));
  const Bits expect = {1, 0, 1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 0, 0};
  EXPECT_EQ(token_to_bits(24044), expect);
  Rng rng(1);
  std::uniform_int_distribution<int> id(0, 24044);
  for (int i = 0; i < 1000; ++i) {
    const TokenId w = id(rng);
    EXPECT_EQ(bits_to_token(token_to_bits(w), 24045), w);
  }
  EXPECT_EQ(bits_to_token(token_to_bits(30000), 24045), kUnkId);
  EXPECT_THROW(token_to_bits(32768), Error);
  EXPECT_THROW(token_to_bits(-1), Error);
}

TEST(Bch, CodeParameters) {
  const auto& code = token_code();
  EXPECT_EQ(code.n(), 255);
  EXPECT_EQ(code.k(), kBchK);
  EXPECT_EQ(code.t(), kBchT);
  EXPECT_EQ(static_cast<int>(code.generator().size()) - 1, 255 - kBchK);
  EXPECT_EQ(kTransmittedBits / 2, 128);
}

TEST(Bch, CodewordsVanishAtConsecutiveRoots) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Bits c = fec_encode(random_bits(15, rng));
    ASSERT_EQ(c.size(), 255u);
    for (int j = 1; j <= 2 * kBchT; ++j) ASSERT_EQ(eval_at_alpha_power(c, j), 0) << "root " << j;
  }
}

TEST(Bch, SystematicAndAllZero) {
  Rng rng(3);
  const Bits info = random_bits(15, rng);
  const Bits c = fec_encode(info);
  EXPECT_TRUE(std::equal(info.begin(), info.end(), c.begin()));
  for (int i = 15; i < 21; ++i) EXPECT_EQ(c[i], 0);
  EXPECT_EQ(fec_encode(Bits(15, 0)), Bits(255, 0));
  EXPECT_THROW(fec_encode(Bits(14, 0)), Error);
  EXPECT_THROW(fec_decode(Bits(254, 0)), Error);
}

TEST(Bch, CorrectsUpToDesignedErrors) {
  Rng rng(4);
  std::uniform_int_distribution<int> count(0, kBchT);
  for (int trial = 0; trial < 500; ++trial) {
    const Bits info = random_bits(15, rng);
    Bits c = fec_encode(info);
    flip_random(c, trial < 100 ? kBchT : count(rng), rng);
    const auto d = fec_decode(c);
    ASSERT_FALSE(d.failure);
    ASSERT_EQ(d.info, info);
  }
  const auto clean = fec_decode(fec_encode(Bits(15, 1)));
  EXPECT_FALSE(clean.failure);
  EXPECT_EQ(clean.info, Bits(15, 1));
}

TEST(Bch, HeavyCorruptionIsFlaggedOrMiscorrected) {
  Rng rng(5);
  int flagged = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Bits info = random_bits(15, rng);
    Bits c = fec_encode(info);
    flip_random(c, 90, rng);
    const auto d = fec_decode(c);
    flagged += d.failure;
    if (!d.failure) EXPECT_NE(d.info, info);
  }
  EXPECT_GT(flagged, 40);
}

TEST(Qpsk, MappingAndTies) {
  const double a = 1.0 / std::sqrt(2.0);
  EXPECT_EQ(qpsk_modulate({0, 0})[0], Complex(-a, -a));
  EXPECT_EQ(qpsk_modulate({0, 1})[0], Complex(-a, a));
  EXPECT_EQ(qpsk_modulate({1, 0})[0], Complex(a, -a));
  EXPECT_EQ(qpsk_modulate({1, 1})[0], Complex(a, a));
  EXPECT_EQ(qpsk_demodulate_hard({Complex(0.0, 0.3)}), (Bits{1, 1}));
  EXPECT_EQ(qpsk_demodulate_hard({Complex(-0.1, 0.0)}), (Bits{0, 1}));
  Rng rng(6);
  const Bits b = random_bits(256, rng);
  EXPECT_EQ(qpsk_demodulate_hard(qpsk_modulate(b)), b);
  double power = 0.0;
  for (int q = 0; q < 4; ++q) power += std::norm(qpsk_point(q));
  EXPECT_NEAR(power / 4, 1.0, 1e-15);
  EXPECT_THROW(qpsk_modulate({1}), Error);
}

TEST(Qpsk, TokenUsesMatchLearnedBudget) { EXPECT_EQ(qpsk_modulate(token_codeword(1234)).size(), 128u); }

TEST(MlFuse, MatchesBruteForce) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto P = random_stochastic(rng);
    const auto sd = random_obs(rng), rd = random_obs(rng);
    ASSERT_EQ(ml_fuse(sd, rd, P), brute_force_fuse(sd, rd, P));
  }
}

TEST(MlFuse, UniformTransitionReducesToDirectLink) {
  Rng rng(8);
  const auto U = TransitionMatrix::uniform();
  for (int i = 0; i < 1000; ++i) {
    const auto sd = random_obs(rng), rd = random_obs(rng);
    int best = 0;
    for (int q = 1; q < 4; ++q) {
      if (log_likelihood(sd, q) > log_likelihood(sd, best)) best = q;
    }
    ASSERT_EQ(ml_fuse(sd, rd, U), best);
  }
}

TEST(MlFuse, IdentityNoiselessAndErrors) {
  const auto I = TransitionMatrix::identity();
  for (int q = 0; q < 4; ++q) {
    const Complex g(0.7, -0.2);
    Observation sd{g * qpsk_point(q), g, 0.5}, rd{Complex(2.0) * qpsk_point(q), Complex(2.0), 0.1};
    EXPECT_EQ(ml_fuse(sd, rd, I), q);
  }
  // Exact tie between hypotheses goes to the lowest index.
  Observation zero{Complex(0.0), Complex(1.0), 1.0};
  EXPECT_EQ(ml_fuse(zero, zero, TransitionMatrix::uniform()), 0);
  Observation bad{Complex(std::nan(""), 0.0), Complex(1.0), 1.0};
  EXPECT_THROW(ml_fuse(bad, zero, I), Error);
  Observation zero_var{Complex(0.0), Complex(1.0), 0.0};
  EXPECT_THROW(ml_fuse(zero, zero_var, I), Error);
}

TEST(Transition, ValidationAndPersistence) {
  Rng rng(9);
  auto m = random_stochastic(rng);
  m.header["geometry"] = "uniform 2000-7000";
  std::stringstream ss;
  m.save(ss);
  const auto back = TransitionMatrix::load(ss);
  for (int s = 0; s < 4; ++s)
    for (int r = 0; r < 4; ++r) EXPECT_EQ(back.p[s][r], m.p[s][r]);
  EXPECT_EQ(back.header.at("geometry"), "uniform 2000-7000");

  auto bad = TransitionMatrix::identity();
  bad.p[2][2] = 0.9;
  EXPECT_THROW(bad.validate(), Error);
  std::stringstream three("1 0 0 0\n0 1 0 0\n0 0 1 0\n");
  EXPECT_THROW(TransitionMatrix::load(three), IngestError);
  std::stringstream neg("1 0 0 0\n0 1 0 0\n0 0 1 0\n-0.5 0 0 1.5\n");
  EXPECT_THROW(TransitionMatrix::load(neg), Error);
}

TEST(Transition, NoiselessCalibrationIsIdentity) {
  ChannelParams p;
  p.noise_power_override = 0.0;
  Rng rng(10);
  const std::vector<TokenSeq> sentences = {{5, 100, 7000, 24000}, {9, 9, 12345}};
  auto sampler = [](Rng& r) {
    std::uniform_real_distribution<double> d(2000.0, 7000.0);
    return LinkGeometry::from_relay_fraction(d(r), 0.5);
  };
  const auto m = calibrate_transitions(sentences, 24045, sampler, p, rng, 5000);
  for (int s = 0; s < 4; ++s)
    for (int r = 0; r < 4; ++r) EXPECT_EQ(m.p[s][r], s == r ? 1.0 : 0.0);
  EXPECT_GE(std::stol(m.header.at("symbols")), 5000);
  EXPECT_THROW(calibrate_transitions({}, 24045, sampler, p, rng, 10), Error);
}

TEST(Transition, SymmetricChannelIsDoublyStochastic) {
  ChannelParams p;
  Rng rng(11);
  std::uniform_int_distribution<int> id(0, (1 << 15) - 1);
  std::vector<TokenSeq> sentences(1, TokenSeq(4000));
  for (auto& w : sentences[0]) w = id(rng);
  // Around the decoding threshold so relay errors are frequent.
  auto sampler = [](Rng&) { return LinkGeometry::make(10000.0, 4300.0); };
  const auto m = calibrate_transitions(sentences, 1 << 15, sampler, p, rng, 1000000);
  m.validate();
  double off_diagonal = 0.0;
  for (int c = 0; c < 4; ++c) {
    double col = 0.0;
    for (int r = 0; r < 4; ++r) col += m.p[r][c];
    EXPECT_NEAR(col, 1.0, 0.02);
    off_diagonal += 1.0 - m.p[c][c];
  }
  EXPECT_GT(off_diagonal, 0.01);
}

TEST(LinkSimulation, ObservationsDescribeTheChannel) {
  ChannelParams p;
  p.fading = channel::Fading::rayleigh;
  p.compensation = channel::Compensation::none;
  Rng rng(12);
  const auto symbols = qpsk_modulate(token_codeword(77));
  const auto link = send_symbols(symbols, 1000.0, p, rng);
  ASSERT_EQ(link.samples.size(), 128u);
  // Noise variance relative to unit symbols is 1/SNR.
  EXPECT_NEAR(link.samples[0].noise_var, std::pow(10.0, -channel::snr_db(1000.0, p) / 10.0), 1e-12);
  double resid = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) resid += std::norm(link.samples[i].y - link.samples[i].gain * symbols[i]);
  EXPECT_NEAR(resid / symbols.size() / link.samples[0].noise_var, 1.0, 0.35);
  EXPECT_EQ(hard_bits(link).size(), 256u);
}

TEST(Episode, NoiselessReconstructionAndDeterminism) {
  ChannelParams p;
  p.noise_power_override = 0.0;
  const auto geo = LinkGeometry::from_relay_fraction(4000.0, 0.3);
  const TokenSeq s = {4, 17, 24044, 300, 9, 11};
  Rng rng(13);
  const auto ep = run_baseline_episode(s, geo, p, TransitionMatrix::identity(), 24045, rng);
  EXPECT_EQ(ep.destination_tokens, s);
  EXPECT_EQ(ep.relay_tokens, s);
  EXPECT_EQ(ep.relay_fec_failures + ep.destination_fec_failures, 0);

  ChannelParams noisy;
  noisy.fading = channel::Fading::rayleigh;
  Rng a(14), b(14);
  const auto far = LinkGeometry::from_relay_fraction(6000.0, 0.5);
  const auto e1 = run_baseline_episode(s, far, noisy, TransitionMatrix::uniform(), 24045, a);
  const auto e2 = run_baseline_episode(s, far, noisy, TransitionMatrix::uniform(), 24045, b);
  EXPECT_EQ(e1.destination_tokens, e2.destination_tokens);
  EXPECT_EQ(e1.relay_tokens, e2.relay_tokens);
}

TEST(Episode, RelayForwardReencodesDecision) {
  ChannelParams p;
  p.noise_power_override = 0.0;
  Rng rng(15);
  const auto link = send_symbols(qpsk_modulate(token_codeword(31000)), 500.0, p, rng);
  const auto out = relay_forward(link, 24045);
  EXPECT_EQ(out.token, kUnkId);
  EXPECT_EQ(out.symbols, qpsk_modulate(token_codeword(kUnkId)));
}
