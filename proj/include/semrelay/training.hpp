#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "semrelay/channel.hpp"
#include "semrelay/relay.hpp"
#include "semrelay/semnet.hpp"

namespace semrelay::training {

using channel::LinkGeometry;
using channel::Rng;
using relay::Scheme;

enum class Scale { paper, toy };
std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 5e-4;
  double weight_decay = 0.01;
  int batch_size = 64;
  double d_min = 2000.0;
  double d_max = 7000.0;
  double gamma_min = 0.2;
  double gamma_max = 0.8;
  Scheme scheme = Scheme::slf;
  Scale scale = Scale::paper;
  std::uint64_t seed = 1;
  // Decoders condition on the reference tokens instead of their own decisions.
  bool teacher_forcing = false;
  channel::ChannelParams channel;

  static TrainConfig for_scale(Scale s);
  void validate() const;
};

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  std::vector<nn::Matrix> m;  // first moments, one per parameter
  std::vector<nn::Matrix> v;  // second moments
  long step = 0;
  AdamWSettings settings;
};

// One AdamW update over every trainable parameter. Decoupled decay is applied
// first: p *= 1 - lr*wd, then p -= lr * mhat / (sqrt(vhat) + eps).
void adamw_step(const std::vector<nn::Parameter*>& params, OptimizerState& state, double lr);

// Cosine warmup from peak/25 to peak over the first 30% of steps, then cosine
// anneal to peak/1e4.
inline constexpr double kWarmupFraction = 0.3;
inline constexpr double kStartDivisor = 25.0;
inline constexpr double kEndDivisor = 1e4;
double one_cycle_lr(long step, long total_steps, double peak_lr);

double get_distance(double lo, double hi, Rng& rng);
LinkGeometry sample_geometry(const TrainConfig& cfg, Rng& rng);

struct LogRow {
  long step = 0;
  std::string stage;
  double loss = 0.0;  // mean cross-entropy per target position over the batch
  double lr = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> epoch_losses;  // mean CE per position per epoch
  std::vector<LogRow> log;
  std::vector<LinkGeometry> batch_geometries;  // one per batch (empty in stage 1)
  long steps = 0;
};

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log);

// Stage names carried in checkpoint metadata.
inline constexpr const char* kStageDecoder = "decoder";
inline constexpr const char* kStageSourceRelay = "src-relay";
inline constexpr const char* kStageRelayDestination = "relay-dst";

// Alg. 1: noiseless training of the encoder and both semantic decoders.
// Both decoders see embeddings relay_input_indices(scheme) (t for SLF, t-1
// for SPF); targets are always w^1..w^T.
TrainResult train_semantic_decoder(const TrainConfig& cfg, const std::vector<TokenSeq>& data,
                                   semnet::Model& model, semnet::CheckpointMeta& meta);

// Alg. 2: source TX and relay RX over the S->R link with the relay decoder;
// the encoder is frozen. Requires a stage-1 tag in meta.
TrainResult train_source_relay(const TrainConfig& cfg, const std::vector<TokenSeq>& data,
                               semnet::Model& model, semnet::CheckpointMeta& meta);

// Alg. 3: everything up to and including the relay decoder is frozen; the
// relay TX, both destination RX branches, fusion and the destination decoder
// are trained on full episodes. Requires a stage-2 tag in meta (stage 1 for
// the source-only ablation, which has no relay chain).
TrainResult train_relay_destination(const TrainConfig& cfg, const std::vector<TokenSeq>& data,
                                    semnet::Model& model, semnet::CheckpointMeta& meta);

// Mean cross-entropy per position of the stage-1 objective, without updates.
double decoder_loss(const semnet::Model& model, Scheme scheme, const std::vector<TokenSeq>& data);

// Free-running noiseless decoding at the destination decoder on the stage-1
// inputs.
TokenSeq noiseless_destination_decode(const semnet::Model& model, Scheme scheme, const TokenSeq& sentence);

// Components trained by each stage.
std::vector<std::string> stage_components(const std::string& stage);

}  // namespace semrelay::training
