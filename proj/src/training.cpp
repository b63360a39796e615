#include "semrelay/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace semrelay::training {

using nn::Graph;
using nn::Matrix;
using nn::Var;
using semnet::DecoderSite;
using semnet::Model;

std::string to_string(Scale s) { return s == Scale::paper ? "paper" : "toy"; }

Scale parse_scale(const std::string& s) {
  if (s == "paper") return Scale::paper;
  if (s == "toy") return Scale::toy;
  throw Error("unknown scale: " + s);
}

TrainConfig TrainConfig::for_scale(Scale s) {
  TrainConfig c;
  c.scale = s;
  c.batch_size = s == Scale::paper ? 64 : 16;
  return c;
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw Error("epochs must be positive");
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (weight_decay < 0.0) throw Error("weight decay must be >= 0");
  if (batch_size <= 0) throw Error("batch size must be positive");
  if (!(d_min > 0.0 && d_min < d_max)) throw Error("need 0 < d_min < d_max");
  if (!(gamma_min > 0.0 && gamma_min < gamma_max && gamma_max < 1.0)) {
    throw Error("need 0 < gamma_min < gamma_max < 1");
  }
  channel.validate();
}

void adamw_step(const std::vector<nn::Parameter*>& params, OptimizerState& state, double lr) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw Error("optimizer state does not match the parameter list");
  const auto& s = state.settings;
  ++state.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = *params[i];
    if (!p.trainable) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw Error("gradient shape mismatch for " + p.name);
    }
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = s.beta1 * m + (1.0 - s.beta1) * p.grad;
    v = s.beta2 * v + (1.0 - s.beta2) * p.grad.cwiseProduct(p.grad);
    p.value *= 1.0 - lr * s.weight_decay;
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
  }
}

double one_cycle_lr(long step, long total_steps, double peak_lr) {
  if (step < 0 || step > total_steps) throw Error("one_cycle_lr: step out of range");
  const double start = peak_lr / kStartDivisor;
  const double end = peak_lr / kEndDivisor;
  const double warm = kWarmupFraction * static_cast<double>(total_steps);
  const double x = static_cast<double>(step);
  if (total_steps == 0) return start;
  if (x <= warm) {
    if (warm <= 0.0) return peak_lr;
    return start + (peak_lr - start) * 0.5 * (1.0 - std::cos(std::numbers::pi * x / warm));
  }
  const double p = (x - warm) / (static_cast<double>(total_steps) - warm);
  return end + (peak_lr - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

double get_distance(double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw Error("get_distance: need lo < hi");
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

LinkGeometry sample_geometry(const TrainConfig& cfg, Rng& rng) {
  const double d_sd = get_distance(cfg.d_min, cfg.d_max, rng);
  const double d_sr = get_distance(d_sd * cfg.gamma_min, d_sd * cfg.gamma_max, rng);
  return LinkGeometry::make(d_sd, d_sr);
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
  out << "step,stage,loss,lr,seed\n";
  for (const auto& r : log) {
    out << r.step << ',' << r.stage << ',' << r.loss << ',' << r.lr << ',' << r.seed << '\n';
  }
}

std::vector<std::string> stage_components(const std::string& stage) {
  if (stage == kStageDecoder) return {"encoder", "relay_decoder", "dest_decoder"};
  if (stage == kStageSourceRelay) return {"source_tx", "relay_rx", "relay_decoder"};
  if (stage == kStageRelayDestination) {
    return {"relay_tx", "dest_source_rx", "dest_relay_rx", "fusion", "dest_decoder"};
  }
  throw Error("unknown training stage: " + stage);
}

namespace {

std::vector<int> as_targets(const TokenSeq& s) { return std::vector<int>(s.begin(), s.end()); }

// Tokens the decoder conditions on when run free: [CLS] then its own
// decisions, shifted by one.
TokenSeq previous_tokens(const Model& model, DecoderSite site, const Matrix& inputs) {
  TokenSeq decided = semnet::greedy_decode(model, site, inputs);
  TokenSeq prev;
  prev.reserve(decided.size());
  prev.push_back(kClsId);
  for (std::size_t i = 0; i + 1 < decided.size(); ++i) prev.push_back(decided[i]);
  return prev;
}

// With teacher forcing the decoder conditions on the reference instead.
TokenSeq reference_previous(const TokenSeq& targets) {
  TokenSeq prev = {kClsId};
  prev.insert(prev.end(), targets.begin(), targets.end() - 1);
  return prev;
}

Var decoder_loss_on(Graph& g, const Model& model, DecoderSite site, Var inputs, const TokenSeq& targets,
                    bool teacher_forcing) {
  const TokenSeq prev =
      teacher_forcing ? reference_previous(targets) : previous_tokens(model, site, g.value(inputs));
  Var logits = model.decoder(site).forward(g, inputs, prev);
  return nn::cross_entropy_sum(g, logits, as_targets(targets));
}

Var stage1_loss(Graph& g, const Model& model, Scheme scheme, const TokenSeq& s, bool teacher_forcing) {
  const int T = static_cast<int>(s.size());
  Var e = model.encoder.forward(g, s, false);
  // SPF feeds both decoders the embedding at t-1 so each step predicts w^t.
  const int first = relay::relay_input_indices(scheme, T).front();
  Var relay = decoder_loss_on(g, model, DecoderSite::relay, nn::rows(g, e, first, T), s, teacher_forcing);
  Var dest = decoder_loss_on(g, model, DecoderSite::destination, nn::rows(g, e, first, T), s, teacher_forcing);
  return nn::add(g, relay, dest);
}

std::vector<const channel::LinkRealization*> pointers(const std::vector<channel::LinkRealization>& v) {
  std::vector<const channel::LinkRealization*> out;
  for (const auto& l : v) out.push_back(&l);
  return out;
}

Matrix select_rows(const Matrix& m, int first, int count) { return m.middleRows(first, count); }

Var stage2_loss(Graph& g, const Model& model, Scheme scheme, const TokenSeq& s,
                const relay::EpisodeLinks& links, const channel::ChannelParams& params, bool teacher_forcing) {
  const int T = static_cast<int>(s.size());
  const Matrix e = semnet::semantic_encode(model, s, false);
  const int first = relay::relay_input_indices(scheme, T).front();
  Var x = model.source_tx.forward(g, g.constant(select_rows(e, first, T)));
  Var y = relay::send_rows(g, x, pointers(links.sr), params);
  Var z = model.relay_rx.forward(g, y);
  return decoder_loss_on(g, model, DecoderSite::relay, z, s, teacher_forcing);
}

Matrix codec_apply(const semnet::CodecLayer& layer, const Matrix& x) {
  Graph g(false);
  return g.value(layer.forward(g, g.constant(x)));
}

Var stage3_loss(Graph& g, const Model& model, Scheme scheme, const TokenSeq& s,
                const relay::EpisodeLinks& links, const channel::ChannelParams& params, bool teacher_forcing) {
  const int T = static_cast<int>(s.size());
  const Matrix e = semnet::semantic_encode(model, s, false);
  const Matrix source_blocks = codec_apply(model.source_tx, select_rows(e, 1, T));
  Var ys = relay::send_rows(g, g.constant(source_blocks), pointers(links.sd), params);
  Var yr;
  if (scheme == Scheme::source_only) {
    yr = g.constant(Matrix::Zero(T, model.config().channel_dim));
  } else {
    // Frozen relay chain, run as at inference time.
    const int first = relay::relay_input_indices(scheme, T).front();
    const Matrix sent = codec_apply(model.source_tx, select_rows(e, first, T));
    Matrix received(T, sent.cols());
    for (int k = 0; k < T; ++k) received.row(k) = relay::send_block(sent.row(k), links.sr[k], params);
    const TokenSeq relay_tokens =
        semnet::greedy_decode(model, DecoderSite::relay, codec_apply(model.relay_rx, received));
    const Matrix er = semnet::semantic_encode(model, relay_tokens, true);
    Var xr = model.relay_tx.forward(g, g.constant(select_rows(er, 1, T)));
    yr = relay::send_rows(g, xr, pointers(links.rd), params);
  }
  Var fused = model.fusion.forward(g, model.dest_source_rx.forward(g, ys), model.dest_relay_rx.forward(g, yr));
  return decoder_loss_on(g, model, DecoderSite::destination, fused, s, teacher_forcing);
}

void check_data(const std::vector<TokenSeq>& data, const Model& model) {
  if (data.empty()) throw Error("training needs at least one sentence");
  for (const auto& s : data) {
    if (s.empty() || static_cast<int>(s.size()) > model.config().max_len) {
      throw Error("training sentence length out of range");
    }
  }
}

void freeze_all_except(Model& model, const std::vector<std::string>& trainable) {
  model.set_all_trainable(false);
  for (const auto& c : trainable) model.set_trainable(c, true);
}

using SentenceLoss = std::function<Var(Graph&, const TokenSeq&, Rng&, const LinkGeometry*)>;

// Shared epoch/batch loop. Each sentence is a separate tape; gradients are
// accumulated in data order, so the run is deterministic given the seed.
TrainResult run_stage(const TrainConfig& cfg, const std::vector<TokenSeq>& data, Model& model,
                      const std::string& stage, int targets_per_token, bool sample_links,
                      const SentenceLoss& loss_fn) {
  cfg.validate();
  check_data(data, model);
  freeze_all_except(model, stage_components(stage));
  const auto params = model.parameters();

  Rng rng(cfg.seed);
  OptimizerState opt;
  opt.settings.weight_decay = cfg.weight_decay;
  const long batches_per_epoch = (static_cast<long>(data.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = batches_per_epoch * cfg.epochs;

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    long epoch_positions = 0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const std::size_t lo = static_cast<std::size_t>(b * cfg.batch_size);
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      LinkGeometry geometry;
      if (sample_links) {
        geometry = sample_geometry(cfg, rng);
        result.batch_geometries.push_back(geometry);
      }
      long positions = 0;
      for (std::size_t i = lo; i < hi; ++i) positions += targets_per_token * static_cast<long>(data[order[i]].size());

      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const TokenSeq& s = data[order[i]];
        batch_loss += semnet::forward_backward(
            [&](Graph& g) { return loss_fn(g, s, rng, sample_links ? &geometry : nullptr); },
            1.0 / static_cast<double>(positions), stage);
      }
      const double lr = one_cycle_lr(result.steps, total_steps, cfg.learning_rate);
      adamw_step(params, opt, lr);
      result.log.push_back({result.steps, stage, batch_loss / static_cast<double>(positions), lr, cfg.seed});
      ++result.steps;
      epoch_loss += batch_loss;
      epoch_positions += positions;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_positions));
  }
  model.set_all_trainable(true);
  return result;
}

void require_stage(const semnet::CheckpointMeta& meta, const std::vector<std::string>& allowed,
                   const std::string& running) {
  if (std::find(allowed.begin(), allowed.end(), meta.stage) == allowed.end()) {
    throw Error("stage " + running + " needs a checkpoint from stage " + allowed.front() +
                " (got '" + meta.stage + "')");
  }
}

void require_scheme(const semnet::CheckpointMeta& meta, Scheme scheme) {
  auto it = meta.extra.find("scheme");
  if (it != meta.extra.end() && it->second != relay::to_string(scheme)) {
    throw Error("checkpoint was trained for scheme " + it->second + ", not " + relay::to_string(scheme));
  }
}

void tag(semnet::CheckpointMeta& meta, const std::string& stage, const TrainConfig& cfg) {
  meta.stage = stage;
  meta.extra["scheme"] = relay::to_string(cfg.scheme);
  meta.extra["scale"] = to_string(cfg.scale);
  meta.extra["seed." + stage] = std::to_string(cfg.seed);
}

}  // namespace

TrainResult train_semantic_decoder(const TrainConfig& cfg, const std::vector<TokenSeq>& data, Model& model,
                                   semnet::CheckpointMeta& meta) {
  auto result = run_stage(cfg, data, model, kStageDecoder, 2, false,
                          [&](Graph& g, const TokenSeq& s, Rng&, const LinkGeometry*) {
                            return stage1_loss(g, model, cfg.scheme, s, cfg.teacher_forcing);
                          });
  tag(meta, kStageDecoder, cfg);
  return result;
}

TrainResult train_source_relay(const TrainConfig& cfg, const std::vector<TokenSeq>& data, Model& model,
                               semnet::CheckpointMeta& meta) {
  require_stage(meta, {kStageDecoder, kStageSourceRelay}, kStageSourceRelay);
  require_scheme(meta, cfg.scheme);
  const int uses = model.config().channel_dim / 2;
  auto result = run_stage(cfg, data, model, kStageSourceRelay, 1, true,
                          [&](Graph& g, const TokenSeq& s, Rng& rng, const LinkGeometry* geo) {
                            auto links = relay::draw_episode_links(cfg.scheme, static_cast<int>(s.size()),
                                                                   *geo, cfg.channel, uses, rng);
                            return stage2_loss(g, model, cfg.scheme, s, links, cfg.channel, cfg.teacher_forcing);
                          });
  tag(meta, kStageSourceRelay, cfg);
  return result;
}

TrainResult train_relay_destination(const TrainConfig& cfg, const std::vector<TokenSeq>& data, Model& model,
                                    semnet::CheckpointMeta& meta) {
  if (cfg.scheme == Scheme::source_only) {
    require_stage(meta, {kStageDecoder, kStageSourceRelay, kStageRelayDestination}, kStageRelayDestination);
  } else {
    require_stage(meta, {kStageSourceRelay, kStageRelayDestination}, kStageRelayDestination);
  }
  require_scheme(meta, cfg.scheme);
  const int uses = model.config().channel_dim / 2;
  auto result = run_stage(cfg, data, model, kStageRelayDestination, 1, true,
                          [&](Graph& g, const TokenSeq& s, Rng& rng, const LinkGeometry* geo) {
                            auto links = relay::draw_episode_links(cfg.scheme, static_cast<int>(s.size()),
                                                                   *geo, cfg.channel, uses, rng);
                            return stage3_loss(g, model, cfg.scheme, s, links, cfg.channel, cfg.teacher_forcing);
                          });
  tag(meta, kStageRelayDestination, cfg);
  return result;
}

double decoder_loss(const Model& model, Scheme scheme, const std::vector<TokenSeq>& data) {
  double total = 0.0;
  long positions = 0;
  for (const auto& s : data) {
    Graph g(false);
    total += g.value(stage1_loss(g, model, scheme, s, false))(0, 0);
    positions += 2 * static_cast<long>(s.size());
  }
  return positions > 0 ? total / static_cast<double>(positions) : 0.0;
}

TokenSeq noiseless_destination_decode(const Model& model, Scheme scheme, const TokenSeq& sentence) {
  const int T = static_cast<int>(sentence.size());
  const Matrix e = semnet::semantic_encode(model, sentence, false);
  return semnet::greedy_decode(model, DecoderSite::destination,
                               select_rows(e, relay::relay_input_indices(scheme, T).front(), T));
}

}  // namespace semrelay::training
