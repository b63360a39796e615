#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "semrelay/common.hpp"
#include "semrelay/nn/graph.hpp"

namespace semrelay::semnet {

using nn::Graph;
using nn::Matrix;
using nn::Parameter;
using nn::RowVector;
using nn::Var;
using Rng = std::mt19937_64;

// (T+1) x D_emb; row 0 is the [CLS] position.
using EmbeddingSequence = Matrix;
using Logits = RowVector;

struct ModelConfig {
  int vocab_size = 24045;
  int embed_dim = 384;    // D_emb
  int channel_dim = 256;  // 2D reals = D complex uses
  int heads = 6;
  int decoder_blocks = 6;
  int encoder_blocks = 4;
  int ff_dim = 1536;
  int max_len = kMaxTokens;

  static ModelConfig paper();
  static ModelConfig toy(int vocab_size);
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const ModelConfig&) const = default;
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  Var forward(Graph& g, Var x) const;
  Matrix apply(const Matrix& x) const;

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight);
    f(bias);
  }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int width);

  Var forward(Graph& g, Var x) const;
  Matrix apply(const Matrix& x) const;

  template <typename F>
  void visit(F&& f) {
    f(gain);
    f(shift);
  }
  template <typename F>
  void visit(F&& f) const {
    f(gain);
    f(shift);
  }

  Parameter gain;
  Parameter shift;
  static constexpr double kEps = 1e-5;
};

// Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int width, int heads, int ff_dim, Rng& rng);

  Var forward(Graph& g, Var x, bool causal) const;

  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  int heads = 1;
  LayerNorm attn_norm, ff_norm;
  Linear query, key, value, out, ff_in, ff_out;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& s, F& f) {
    s.attn_norm.visit(f);
    s.query.visit(f);
    s.key.visit(f);
    s.value.visit(f);
    s.out.visit(f);
    s.ff_norm.visit(f);
    s.ff_in.visit(f);
    s.ff_out.visit(f);
  }
};

// Token + learned absolute position embeddings into a stack of blocks. Full
// attention at the source; causal attention when re-encoding at the relay.
class SemanticEncoder {
 public:
  SemanticEncoder() = default;
  SemanticEncoder(const ModelConfig& cfg, Rng& rng);

  // content excludes [CLS]; output has content.size()+1 rows.
  Var forward(Graph& g, const TokenSeq& content, bool causal) const;

  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  Parameter token_embedding;     // V x D_emb
  Parameter position_embedding;  // (L+2) x D_emb
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& s, F& f) {
    f(s.token_embedding);
    f(s.position_embedding);
    for (auto& b : s.blocks) b.visit(f);
    s.final_norm.visit(f);
  }
};

// One fully connected layer followed by layer normalization and PReLU. Used
// for both channel encoders (D_emb -> 2D) and decoders (2D -> D_emb).
class CodecLayer {
 public:
  CodecLayer() = default;
  CodecLayer(const std::string& name, int in, int out, Rng& rng);

  Var forward(Graph& g, Var x) const;

  template <typename F>
  void visit(F&& f) {
    fc.visit(f);
    norm.visit(f);
    f(slope);
  }
  template <typename F>
  void visit(F&& f) const {
    fc.visit(f);
    norm.visit(f);
    f(slope);
  }

  Linear fc;
  LayerNorm norm;
  Parameter slope;  // 1x1 PReLU slope
};

class Fusion {
 public:
  Fusion() = default;
  Fusion(const std::string& name, int width, Rng& rng);

  // [source | relay] -> projection, no activation.
  Var forward(Graph& g, Var from_source, Var from_relay) const;

  template <typename F>
  void visit(F&& f) {
    projection.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    projection.visit(f);
  }

  Linear projection;  // 2 D_emb -> D_emb
};

// Causal decoder over the semantic state. Position t (1-based) receives the
// channel-decoded embedding x^t plus the embedding of the previously decided
// token (CLS at t = 1), so its output depends on x^1..x^t and the state's
// tokens only.
class SemanticDecoder {
 public:
  SemanticDecoder() = default;
  SemanticDecoder(const std::string& name, const ModelConfig& cfg, Rng& rng);

  // inputs: T x D_emb; prev_tokens: T ids; returns T x V logits.
  Var forward(Graph& g, Var inputs, const TokenSeq& prev_tokens) const;

  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  Linear input;
  Parameter token_embedding;     // V x D_emb
  Parameter position_embedding;  // (L+2) x D_emb
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;
  Linear output;  // D_emb -> V

 private:
  template <typename Self, typename F>
  static void visit_all(Self& s, F& f) {
    s.input.visit(f);
    f(s.token_embedding);
    f(s.position_embedding);
    for (auto& b : s.blocks) b.visit(f);
    s.final_norm.visit(f);
    s.output.visit(f);
  }
};

enum class TxSite { source, relay };
enum class RxBranch { relay, dest_source, dest_relay };
enum class DecoderSite { relay, destination };

// Every trainable component of the three-node system.
class Model {
 public:
  explicit Model(const ModelConfig& cfg, std::uint64_t seed = 1);

  const ModelConfig& config() const { return config_; }

  const CodecLayer& tx(TxSite site) const;
  const CodecLayer& rx(RxBranch branch) const;
  const SemanticDecoder& decoder(DecoderSite site) const;

  // Calls f(component_name, parameter) in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;
  void zero_grad();
  // Marks every parameter of a named component trainable or frozen.
  void set_trainable(const std::string& component, bool trainable);
  void set_all_trainable(bool trainable);

  static const std::vector<std::string>& component_names();

  SemanticEncoder encoder;
  CodecLayer source_tx;
  CodecLayer relay_tx;
  CodecLayer relay_rx;
  CodecLayer dest_source_rx;
  CodecLayer dest_relay_rx;
  Fusion fusion;
  SemanticDecoder relay_decoder;
  SemanticDecoder dest_decoder;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& s, F& f) {
    auto tag = [&f](const char* component) {
      return [&f, component](auto& p) { f(component, p); };
    };
    s.encoder.visit(tag("encoder"));
    s.source_tx.visit(tag("source_tx"));
    s.relay_tx.visit(tag("relay_tx"));
    s.relay_rx.visit(tag("relay_rx"));
    s.dest_source_rx.visit(tag("dest_source_rx"));
    s.dest_relay_rx.visit(tag("dest_relay_rx"));
    s.fusion.visit(tag("fusion"));
    s.relay_decoder.visit(tag("relay_decoder"));
    s.dest_decoder.visit(tag("dest_decoder"));
  }

  ModelConfig config_;
};

// ---- Inference operations --------------------------------------------------

// Bidirectional (or causal) encoding with [CLS] prepended. Throws on T = 0.
EmbeddingSequence semantic_encode(const Model& model, const TokenSeq& content, bool causal = false);

RowVector channel_encode(const Model& model, TxSite site, const RowVector& embedding);
RowVector channel_decode(const Model& model, RxBranch branch, const RowVector& received);

// Concatenation of the two channel-decoded branches followed by the fusion
// projection.
RowVector fuse_decoded(const Model& model, const RowVector& from_source, const RowVector& from_relay);
// Channel-decodes both received blocks, then fuses them.
RowVector fuse_destination(const Model& model, const RowVector& y_source, const RowVector& y_relay);

struct StateEntry {
  TokenId token = kPadId;
  RowVector context;  // decoder input that produced this token
};

struct DecodeStep;

// Tokens decided so far at a node plus the decoder's key/value cache for the
// positions they occupy.
class SemanticState {
 public:
  int length() const { return static_cast<int>(entries_.size()); }
  const std::vector<StateEntry>& entries() const { return entries_; }
  TokenSeq tokens() const;
  TokenId last_token() const { return entries_.empty() ? kClsId : entries_.back().token; }

  const std::vector<Matrix>& keys() const { return keys_; }
  const std::vector<Matrix>& values() const { return values_; }

 private:
  friend SemanticState update_state(SemanticState state, TokenId token, const DecodeStep& step);
  std::vector<StateEntry> entries_;
  std::vector<Matrix> keys_;    // per block, length() x D_emb
  std::vector<Matrix> values_;  // per block, length() x D_emb
};

struct DecodeStep {
  DecoderSite site = DecoderSite::destination;
  int position = 0;  // 1-based
  RowVector input;
  Logits logits;
  std::vector<RowVector> keys;    // per block, this position's key row
  std::vector<RowVector> values;  // per block
};

// One decoding step against the state; throws if the state already holds
// max_len entries.
DecodeStep semantic_decode_step(const Model& model, DecoderSite site, const SemanticState& state,
                                const RowVector& input);
// Appends the decided token; earlier entries are not touched.
SemanticState update_state(SemanticState state, TokenId token, const DecodeStep& step);

// Argmax with lowest-id tie-break.
TokenId greedy_token(const Logits& logits);

// Free-running greedy decoding of a whole input sequence (one row per step):
// each decided token is appended to the state before the next step.
TokenSeq greedy_decode(const Model& model, DecoderSite site, const Matrix& inputs);

// ---- Training support --------------------------------------------------------

struct LossValue {
  double loss_sum = 0.0;  // summed cross-entropy
  int positions = 0;      // counted target positions
  double mean() const { return positions > 0 ? loss_sum / positions : 0.0; }
};

// Evaluates the scalar built by `build`, checks it is finite (otherwise
// throws DivergenceError tagged with `stage`), and back-propagates with the
// given seed into the parameters' gradient accumulators.
double forward_backward(const std::function<Var(Graph&)>& build, double seed,
                        const std::string& stage);

// ---- Checkpoints -------------------------------------------------------------

struct CheckpointMeta {
  std::string stage;  // decoder | src-relay | relay-dst | init
  std::map<std::string, std::string> extra;
};

void save_checkpoint(std::ostream& out, const Model& model, const CheckpointMeta& meta);
Model load_checkpoint(std::istream& in, CheckpointMeta* meta = nullptr);
void save_checkpoint_file(const std::string& path, const Model& model, const CheckpointMeta& meta);
Model load_checkpoint_file(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace semrelay::semnet
