#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <set>
#include <sstream>

#include "semrelay/training.hpp"

using namespace semrelay;
using namespace semrelay::training;
using semnet::CheckpointMeta;
using semnet::Model;
using semnet::ModelConfig;

namespace {

ModelConfig tiny_config(int V = 30) {
  ModelConfig c;
  c.vocab_size = V;
  c.embed_dim = 16;
  c.channel_dim = 16;
  c.heads = 2;
  c.decoder_blocks = 1;
  c.encoder_blocks = 1;
  c.ff_dim = 32;
  return c;
}

// Sentences drawn from a few fixed templates so there is structure to learn.
std::vector<TokenSeq> patterned_data(int n, int V, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> tok(kNumSpecial, V - 1), len(kMinTokens, 9), tmpl(0, 3);
  std::vector<TokenSeq> out;
  for (int i = 0; i < n; ++i) {
    const int k = tmpl(rng);
    TokenSeq s;
    const int T = len(rng);
    for (int t = 0; t < T; ++t) s.push_back(t % 2 ? tok(rng) : kNumSpecial + (3 * k + t) % (V - kNumSpecial));
    out.push_back(s);
  }
  return out;
}

TrainConfig quick_config(Scheme scheme, int epochs = 1) {
  TrainConfig c = TrainConfig::for_scale(Scale::toy);
  c.scheme = scheme;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

std::vector<nn::Matrix> snapshot(const Model& m) {
  std::vector<nn::Matrix> out;
  m.visit([&](const char*, const nn::Parameter& p) { out.push_back(p.value); });
  return out;
}

}  // namespace

TEST(Training, DistanceSampling) {
  Rng rng(1);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double d = get_distance(2000.0, 7000.0, rng);
    ASSERT_GE(d, 2000.0);
    ASSERT_LE(d, 7000.0);
    sum += d;
  }
  EXPECT_NEAR(sum / n / 4500.0, 1.0, 0.005);
  const double hi = 3000.0, lo = hi - 1e-9;
  for (int i = 0; i < 100; ++i) {
    const double d = get_distance(lo, hi, rng);
    EXPECT_GE(d, lo);
    EXPECT_LE(d, hi);
  }
  Rng a(4), b(4);
  EXPECT_EQ(get_distance(1.0, 2.0, a), get_distance(1.0, 2.0, b));
  EXPECT_THROW(get_distance(5.0, 5.0, rng), Error);
}

TEST(Training, GeometrySampling) {
  TrainConfig cfg;
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const auto g = sample_geometry(cfg, rng);
    ASSERT_GE(g.d_sd, cfg.d_min);
    ASSERT_LE(g.d_sd, cfg.d_max);
    ASSERT_GE(g.gamma(), cfg.gamma_min - 1e-12);
    ASSERT_LE(g.gamma(), cfg.gamma_max + 1e-12);
    ASSERT_NEAR(g.d_rd + g.d_sr, g.d_sd, 1e-9);
  }
}

TEST(Training, ConfigDefaultsAndValidation) {
  const auto paper = TrainConfig::for_scale(Scale::paper);
  EXPECT_EQ(paper.epochs, 10);
  EXPECT_DOUBLE_EQ(paper.learning_rate, 5e-4);
  EXPECT_DOUBLE_EQ(paper.weight_decay, 0.01);
  EXPECT_EQ(paper.batch_size, 64);
  EXPECT_EQ(TrainConfig::for_scale(Scale::toy).batch_size, 16);
  EXPECT_EQ(parse_scale("toy"), Scale::toy);
  EXPECT_THROW(parse_scale("huge"), Error);
  TrainConfig bad;
  bad.d_min = 8000.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.gamma_max = 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(AdamW, HandComputedScalarStep) {
  nn::Parameter p("w", nn::Matrix::Constant(1, 1, 1.0));
  p.grad(0, 0) = 0.5;
  OptimizerState st;
  st.settings.weight_decay = 0.01;
  const double lr = 0.1;
  adamw_step({&p}, st, lr);
  // m = 0.05, v = 0.00025; bias-corrected mhat = 0.5, vhat = 0.25.
  const double expect = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(p.value(0, 0), expect, 1e-12);
  EXPECT_EQ(st.step, 1);

  // Second step with a different gradient.
  p.grad(0, 0) = -0.2;
  const double m2 = 0.9 * 0.05 + 0.1 * -0.2, v2 = 0.999 * 0.00025 + 0.001 * 0.04;
  const double mhat = m2 / (1 - 0.81), vhat = v2 / (1 - 0.999 * 0.999);
  const double expect2 = expect * (1 - 0.001) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  adamw_step({&p}, st, lr);
  EXPECT_NEAR(p.value(0, 0), expect2, 1e-12);
}

TEST(AdamW, ZeroGradientAndDecayOnly) {
  nn::Parameter p("w", nn::Matrix::Constant(2, 2, 3.0));
  OptimizerState st;
  st.settings.weight_decay = 0.0;
  adamw_step({&p}, st, 0.5);
  EXPECT_EQ(p.value, nn::Matrix::Constant(2, 2, 3.0));

  OptimizerState decay;
  decay.settings.weight_decay = 0.01;
  adamw_step({&p}, decay, 0.5);
  EXPECT_NEAR(p.value(1, 1), 3.0 * (1 - 0.5 * 0.01), 1e-15);

  nn::Parameter frozen("f", nn::Matrix::Constant(1, 1, 2.0));
  frozen.trainable = false;
  frozen.grad(0, 0) = 1.0;
  OptimizerState s3;
  adamw_step({&frozen}, s3, 0.5);
  EXPECT_EQ(frozen.value(0, 0), 2.0);
}

TEST(OneCycle, ScheduleShape) {
  const double peak = 5e-4;
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, 100, peak), peak / 25.0);
  EXPECT_DOUBLE_EQ(one_cycle_lr(30, 100, peak), peak);
  EXPECT_NEAR(one_cycle_lr(100, 100, peak), peak / 1e4, 1e-18);
  double prev = one_cycle_lr(0, 1000, peak);
  for (long s = 1; s <= 300; ++s) {
    const double lr = one_cycle_lr(s, 1000, peak);
    EXPECT_GE(lr, prev);
    prev = lr;
  }
  for (long s = 301; s <= 1000; ++s) {
    const double lr = one_cycle_lr(s, 1000, peak);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  // Midpoint of the warmup is halfway between start and peak.
  EXPECT_NEAR(one_cycle_lr(150, 1000, peak), 0.5 * (peak / 25 + peak), 1e-15);
  EXPECT_THROW(one_cycle_lr(101, 100, peak), Error);
}

TEST(Training, InitialLossNearLogV) {
  const int V = 600;
  Model m(ModelConfig::toy(V), 3);
  const auto data = patterned_data(40, V, 3);
  for (auto scheme : {Scheme::slf, Scheme::spf}) {
    EXPECT_NEAR(decoder_loss(m, scheme, data) / std::log(double(V)), 1.0, 0.05);
  }
}

TEST(Training, StageOrderingEnforced) {
  Model m(tiny_config(), 4);
  const auto data = patterned_data(4, 30, 4);
  CheckpointMeta empty;
  EXPECT_THROW(train_source_relay(quick_config(Scheme::slf), data, m, empty), Error);
  EXPECT_THROW(train_relay_destination(quick_config(Scheme::slf), data, m, empty), Error);

  CheckpointMeta meta;
  train_semantic_decoder(quick_config(Scheme::slf), data, m, meta);
  EXPECT_EQ(meta.stage, kStageDecoder);
  EXPECT_EQ(meta.extra.at("scheme"), "slf");
  EXPECT_THROW(train_relay_destination(quick_config(Scheme::slf), data, m, meta), Error);
  EXPECT_THROW(train_source_relay(quick_config(Scheme::spf), data, m, meta), Error);

  // The ablation has no relay chain and may go straight to the destination.
  Model so(tiny_config(), 4);
  CheckpointMeta so_meta;
  train_semantic_decoder(quick_config(Scheme::source_only), data, so, so_meta);
  EXPECT_NO_THROW(train_relay_destination(quick_config(Scheme::source_only), data, so, so_meta));
  EXPECT_EQ(so_meta.stage, kStageRelayDestination);
}

TEST(Training, StagesOnlyTouchTheirComponents) {
  const auto data = patterned_data(8, 30, 6);
  for (auto scheme : {Scheme::slf, Scheme::spf}) {
    Model m(tiny_config(), 6);
    CheckpointMeta meta;
    const auto cfg = quick_config(scheme);
    const std::vector<std::pair<std::string, std::function<TrainResult()>>> stages = {
        {kStageDecoder, [&] { return train_semantic_decoder(cfg, data, m, meta); }},
        {kStageSourceRelay, [&] { return train_source_relay(cfg, data, m, meta); }},
        {kStageRelayDestination, [&] { return train_relay_destination(cfg, data, m, meta); }}};
    for (const auto& [stage, run] : stages) {
      const auto before = snapshot(m);
      run();
      const auto after = snapshot(m);
      const auto comps = stage_components(stage);
      std::size_t i = 0;
      m.visit([&](const char* c, const nn::Parameter& p) {
        const bool trained = std::find(comps.begin(), comps.end(), c) != comps.end();
        if (!trained) {
          EXPECT_EQ(std::memcmp(before[i].data(), after[i].data(), sizeof(double) * before[i].size()), 0)
              << stage << " changed " << p.name;
        }
        ++i;
      });
      // Every trained component actually moved.
      for (const auto& c : comps) {
        bool moved = false;
        i = 0;
        m.visit([&](const char* comp, const nn::Parameter&) {
          if (c == comp && before[i] != after[i]) moved = true;
          ++i;
        });
        EXPECT_TRUE(moved) << stage << " did not train " << c;
      }
      m.visit([](const char*, const nn::Parameter& p) { EXPECT_TRUE(p.trainable); });
    }
    EXPECT_EQ(meta.stage, kStageRelayDestination);
  }
}

TEST(Training, GeometryResampledEveryBatchAndLogged) {
  Model m(tiny_config(), 7);
  const auto data = patterned_data(12, 30, 7);
  CheckpointMeta meta;
  auto cfg = quick_config(Scheme::slf, 2);
  const auto r1 = train_semantic_decoder(cfg, data, m, meta);
  EXPECT_TRUE(r1.batch_geometries.empty());
  EXPECT_EQ(r1.steps, 6);
  const auto r2 = train_source_relay(cfg, data, m, meta);
  ASSERT_EQ(r2.batch_geometries.size(), 6u);
  std::set<double> distinct;
  for (const auto& g : r2.batch_geometries) {
    distinct.insert(g.d_sd);
    EXPECT_GE(g.gamma(), cfg.gamma_min);
    EXPECT_LE(g.gamma(), cfg.gamma_max);
  }
  EXPECT_EQ(distinct.size(), 6u);
  ASSERT_EQ(r2.log.size(), 6u);
  for (const auto& row : r2.log) {
    EXPECT_EQ(row.stage, kStageSourceRelay);
    EXPECT_EQ(row.seed, cfg.seed);
    EXPECT_TRUE(std::isfinite(row.loss));
  }
  std::ostringstream csv;
  write_log_csv(csv, r2.log);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,stage,loss,lr,seed");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}

TEST(Training, DeterministicGivenSeed) {
  const auto data = patterned_data(8, 30, 8);
  auto run = [&] {
    Model m(tiny_config(), 8);
    CheckpointMeta meta;
    const auto cfg = quick_config(Scheme::spf);
    auto a = train_semantic_decoder(cfg, data, m, meta).epoch_losses;
    auto b = train_source_relay(cfg, data, m, meta).epoch_losses;
    auto c = train_relay_destination(cfg, data, m, meta).epoch_losses;
    a.insert(a.end(), b.begin(), b.end());
    a.insert(a.end(), c.begin(), c.end());
    return std::make_pair(a, snapshot(m));
  };
  const auto x = run(), y = run();
  EXPECT_EQ(x.first, y.first);
  EXPECT_EQ(x.second, y.second);
}

TEST(Training, EpochLossDecreasesOnToyPreset) {
  const int V = 120;
  Model m(ModelConfig::toy(V), 9);
  const auto data = patterned_data(64, V, 9);
  auto cfg = TrainConfig::for_scale(Scale::toy);
  cfg.seed = 9;
  CheckpointMeta meta;
  const auto r = train_semantic_decoder(cfg, data, m, meta);
  ASSERT_EQ(r.epoch_losses.size(), 10u);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
  EXPECT_LT(decoder_loss(m, Scheme::slf, data), r.epoch_losses.front());
}

TEST(Training, SpfStageOneUsesPreviousEmbedding) {
  Model m(tiny_config(), 10);
  const TokenSeq s = {5, 6, 7, 8, 9};
  const auto e = semnet::semantic_encode(m, s);
  EXPECT_EQ(noiseless_destination_decode(m, Scheme::spf, s),
            semnet::greedy_decode(m, semnet::DecoderSite::destination, e.topRows(5)));
  EXPECT_EQ(noiseless_destination_decode(m, Scheme::slf, s),
            semnet::greedy_decode(m, semnet::DecoderSite::destination, e.bottomRows(5)));
}

TEST(Training, StageComponentLists) {
  EXPECT_EQ(stage_components(kStageDecoder), (std::vector<std::string>{"encoder", "relay_decoder", "dest_decoder"}));
  EXPECT_EQ(stage_components(kStageSourceRelay).size(), 3u);
  EXPECT_EQ(stage_components(kStageRelayDestination).size(), 5u);
  EXPECT_THROW(stage_components("bogus"), Error);
}

TEST(Training, EmptyDataRejected) {
  Model m(tiny_config(), 11);
  CheckpointMeta meta;
  EXPECT_THROW(train_semantic_decoder(quick_config(Scheme::slf), {}, m, meta), Error);
}

TEST(Training, TeacherForcingConditionsOnReference) {
  const auto data = patterned_data(3, 30, 12);
  Model m(tiny_config(), 12);
  const Model initial = m;
  auto cfg = quick_config(Scheme::slf);
  cfg.batch_size = 3;
  cfg.teacher_forcing = true;
  CheckpointMeta meta;
  const auto r = train_semantic_decoder(cfg, data, m, meta);

  // First logged loss is taken before any update.
  double total = 0.0;
  long positions = 0;
  for (const auto& s : data) {
    const int T = static_cast<int>(s.size());
    TokenSeq prev = {kClsId};
    prev.insert(prev.end(), s.begin(), s.end() - 1);
    const std::vector<int> targets(s.begin(), s.end());
    nn::Graph g(false);
    nn::Var e = nn::rows(g, initial.encoder.forward(g, s, false), 1, T);
    total += g.value(nn::cross_entropy_sum(g, initial.relay_decoder.forward(g, e, prev), targets))(0, 0);
    total += g.value(nn::cross_entropy_sum(g, initial.dest_decoder.forward(g, e, prev), targets))(0, 0);
    positions += 2 * T;
  }
  EXPECT_NEAR(r.log.front().loss, total / positions, 1e-12);
  EXPECT_NE(r.log.front().loss, decoder_loss(initial, Scheme::slf, data));
}
