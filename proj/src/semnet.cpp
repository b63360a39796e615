#include "semrelay/semnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace semrelay::semnet {

namespace {

Matrix uniform(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// A table lookup has fan-in 1.
Matrix embedding_table(int rows, int cols, Rng& rng) { return uniform(rows, cols, 1.0, rng); }

int to_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

std::vector<int> as_index(const TokenSeq& ids) { return std::vector<int>(ids.begin(), ids.end()); }

}  // namespace

// ---- ModelConfig ---------------------------------------------------------------

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::toy(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 64;
  c.channel_dim = 256;
  c.heads = 2;
  c.decoder_blocks = 2;
  c.encoder_blocks = 2;
  c.ff_dim = 256;
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size < kNumSpecial) throw Error("vocab_size must cover the special tokens");
  if (embed_dim <= 0 || channel_dim <= 0 || channel_dim % 2 != 0) {
    throw Error("embedding and channel dimensions must be positive; channel_dim even");
  }
  if (heads <= 0 || embed_dim % heads != 0) throw Error("embed_dim must be divisible by heads");
  if (decoder_blocks <= 0 || encoder_blocks <= 0 || ff_dim <= 0) throw Error("invalid depth/width");
  if (max_len <= 0) throw Error("max_len must be positive");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"vocab_size", std::to_string(vocab_size)},
          {"embed_dim", std::to_string(embed_dim)},
          {"channel_dim", std::to_string(channel_dim)},
          {"heads", std::to_string(heads)},
          {"decoder_blocks", std::to_string(decoder_blocks)},
          {"encoder_blocks", std::to_string(encoder_blocks)},
          {"ff_dim", std::to_string(ff_dim)},
          {"max_len", std::to_string(max_len)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.vocab_size = to_int(kv, "vocab_size", c.vocab_size);
  c.embed_dim = to_int(kv, "embed_dim", c.embed_dim);
  c.channel_dim = to_int(kv, "channel_dim", c.channel_dim);
  c.heads = to_int(kv, "heads", c.heads);
  c.decoder_blocks = to_int(kv, "decoder_blocks", c.decoder_blocks);
  c.encoder_blocks = to_int(kv, "encoder_blocks", c.encoder_blocks);
  c.ff_dim = to_int(kv, "ff_dim", c.ff_dim);
  c.max_len = to_int(kv, "max_len", c.max_len);
  c.validate();
  return c;
}

// ---- Layers --------------------------------------------------------------------

Linear::Linear(const std::string& name, int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter(name + ".weight", uniform(in, out, bound, rng));
  bias = Parameter(name + ".bias", uniform(1, out, bound, rng));
}

Var Linear::forward(Graph& g, Var x) const {
  return add_row(g, matmul(g, x, g.param(weight)), g.param(bias));
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

LayerNorm::LayerNorm(const std::string& name, int width) {
  gain = Parameter(name + ".gain", Matrix::Ones(1, width));
  shift = Parameter(name + ".shift", Matrix::Zero(1, width));
}

Var LayerNorm::forward(Graph& g, Var x) const {
  return layer_norm(g, x, g.param(gain), g.param(shift), kEps);
}

Matrix LayerNorm::apply(const Matrix& x) const {
  Matrix out;
  nn::layer_norm_rows(x, gain.value.row(0), shift.value.row(0), kEps, out);
  return out;
}

TransformerBlock::TransformerBlock(const std::string& name, int width, int heads_, int ff_dim,
                                   Rng& rng)
    : heads(heads_),
      attn_norm(name + ".attn_norm", width),
      ff_norm(name + ".ff_norm", width),
      query(name + ".query", width, width, rng),
      key(name + ".key", width, width, rng),
      value(name + ".value", width, width, rng),
      out(name + ".out", width, width, rng),
      ff_in(name + ".ff_in", width, ff_dim, rng),
      ff_out(name + ".ff_out", ff_dim, width, rng) {}

Var TransformerBlock::forward(Graph& g, Var x, bool causal) const {
  Var a = attn_norm.forward(g, x);
  Var att = attention(g, query.forward(g, a), key.forward(g, a), value.forward(g, a), heads, causal);
  x = add(g, x, out.forward(g, att));
  Var f = ff_norm.forward(g, x);
  return add(g, x, ff_out.forward(g, gelu(g, ff_in.forward(g, f))));
}

SemanticEncoder::SemanticEncoder(const ModelConfig& cfg, Rng& rng) {
  token_embedding =
      Parameter("encoder.token_embedding", embedding_table(cfg.vocab_size, cfg.embed_dim, rng));
  position_embedding =
      Parameter("encoder.position_embedding", embedding_table(cfg.max_len + 2, cfg.embed_dim, rng));
  for (int b = 0; b < cfg.encoder_blocks; ++b) {
    blocks.emplace_back("encoder.block" + std::to_string(b), cfg.embed_dim, cfg.heads, cfg.ff_dim, rng);
  }
  final_norm = LayerNorm("encoder.final_norm", cfg.embed_dim);
}

Var SemanticEncoder::forward(Graph& g, const TokenSeq& content, bool causal) const {
  if (content.empty()) throw Error("semantic_encode: empty sentence");
  if (static_cast<Eigen::Index>(content.size()) + 1 > position_embedding.value.rows()) {
    throw Error("semantic_encode: sentence longer than the position table");
  }
  std::vector<int> ids;
  ids.reserve(content.size() + 1);
  ids.push_back(kClsId);
  ids.insert(ids.end(), content.begin(), content.end());
  std::vector<int> pos(ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  Var x = add(g, gather_rows(g, g.param(token_embedding), ids),
              gather_rows(g, g.param(position_embedding), pos));
  for (const auto& b : blocks) x = b.forward(g, x, causal);
  return final_norm.forward(g, x);
}

CodecLayer::CodecLayer(const std::string& name, int in, int out, Rng& rng)
    : fc(name + ".fc", in, out, rng), norm(name + ".norm", out) {
  slope = Parameter(name + ".prelu", Matrix::Constant(1, 1, 0.25));
}

Var CodecLayer::forward(Graph& g, Var x) const {
  return prelu(g, norm.forward(g, fc.forward(g, x)), g.param(slope));
}

Fusion::Fusion(const std::string& name, int width, Rng& rng)
    : projection(name + ".projection", 2 * width, width, rng) {}

Var Fusion::forward(Graph& g, Var from_source, Var from_relay) const {
  return projection.forward(g, concat_cols(g, from_source, from_relay));
}

SemanticDecoder::SemanticDecoder(const std::string& name, const ModelConfig& cfg, Rng& rng)
    : input(name + ".input", cfg.embed_dim, cfg.embed_dim, rng) {
  token_embedding = Parameter(name + ".token_embedding", embedding_table(cfg.vocab_size, cfg.embed_dim, rng));
  position_embedding =
      Parameter(name + ".position_embedding", embedding_table(cfg.max_len + 2, cfg.embed_dim, rng));
  for (int b = 0; b < cfg.decoder_blocks; ++b) {
    blocks.emplace_back(name + ".block" + std::to_string(b), cfg.embed_dim, cfg.heads, cfg.ff_dim, rng);
  }
  final_norm = LayerNorm(name + ".final_norm", cfg.embed_dim);
  output = Linear(name + ".output", cfg.embed_dim, cfg.vocab_size, rng);
}

Var SemanticDecoder::forward(Graph& g, Var inputs, const TokenSeq& prev_tokens) const {
  const auto steps = g.value(inputs).rows();
  if (static_cast<Eigen::Index>(prev_tokens.size()) != steps) {
    throw Error("semantic decoder: one previous token per input row required");
  }
  if (steps + 1 > position_embedding.value.rows()) throw Error("semantic decoder: sequence too long");
  std::vector<int> pos(steps);
  for (Eigen::Index i = 0; i < steps; ++i) pos[i] = static_cast<int>(i + 1);
  Var x = add(g, input.forward(g, inputs), gather_rows(g, g.param(token_embedding), as_index(prev_tokens)));
  x = add(g, x, gather_rows(g, g.param(position_embedding), pos));
  for (const auto& b : blocks) x = b.forward(g, x, true);
  return output.forward(g, final_norm.forward(g, x));
}

// ---- Model ---------------------------------------------------------------------

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  cfg.validate();
  Rng rng(seed);
  encoder = SemanticEncoder(cfg, rng);
  source_tx = CodecLayer("source_tx", cfg.embed_dim, cfg.channel_dim, rng);
  relay_tx = CodecLayer("relay_tx", cfg.embed_dim, cfg.channel_dim, rng);
  relay_rx = CodecLayer("relay_rx", cfg.channel_dim, cfg.embed_dim, rng);
  dest_source_rx = CodecLayer("dest_source_rx", cfg.channel_dim, cfg.embed_dim, rng);
  dest_relay_rx = CodecLayer("dest_relay_rx", cfg.channel_dim, cfg.embed_dim, rng);
  fusion = Fusion("fusion", cfg.embed_dim, rng);
  relay_decoder = SemanticDecoder("relay_decoder", cfg, rng);
  dest_decoder = SemanticDecoder("dest_decoder", cfg, rng);
}

const CodecLayer& Model::tx(TxSite site) const {
  return site == TxSite::source ? source_tx : relay_tx;
}

const CodecLayer& Model::rx(RxBranch branch) const {
  switch (branch) {
    case RxBranch::relay: return relay_rx;
    case RxBranch::dest_source: return dest_source_rx;
    case RxBranch::dest_relay: return dest_relay_rx;
  }
  return relay_rx;
}

const SemanticDecoder& Model::decoder(DecoderSite site) const {
  return site == DecoderSite::relay ? relay_decoder : dest_decoder;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  visit([&](const char*, Parameter& p) { out.push_back(&p); });
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  visit([&](const char*, const Parameter& p) { n += static_cast<std::size_t>(p.value.size()); });
  return n;
}

void Model::zero_grad() {
  visit([](const char*, Parameter& p) { p.zero_grad(); });
}

void Model::set_trainable(const std::string& component, bool trainable) {
  bool found = false;
  visit([&](const char* c, Parameter& p) {
    if (component == c) {
      p.trainable = trainable;
      found = true;
    }
  });
  if (!found) throw Error("unknown model component: " + component);
}

void Model::set_all_trainable(bool trainable) {
  visit([&](const char*, Parameter& p) { p.trainable = trainable; });
}

const std::vector<std::string>& Model::component_names() {
  static const std::vector<std::string> names = {
      "encoder",        "source_tx",     "relay_tx", "relay_rx",     "dest_source_rx",
      "dest_relay_rx", "fusion",        "relay_decoder", "dest_decoder"};
  return names;
}

// ---- Inference ---------------------------------------------------------------------

EmbeddingSequence semantic_encode(const Model& model, const TokenSeq& content, bool causal) {
  Graph g(false);
  return g.value(model.encoder.forward(g, content, causal));
}

RowVector channel_encode(const Model& model, TxSite site, const RowVector& embedding) {
  Graph g(false);
  return g.value(model.tx(site).forward(g, g.constant(embedding)));
}

RowVector channel_decode(const Model& model, RxBranch branch, const RowVector& received) {
  Graph g(false);
  return g.value(model.rx(branch).forward(g, g.constant(received)));
}

RowVector fuse_decoded(const Model& model, const RowVector& from_source, const RowVector& from_relay) {
  Graph g(false);
  return g.value(model.fusion.forward(g, g.constant(from_source), g.constant(from_relay)));
}

RowVector fuse_destination(const Model& model, const RowVector& y_source, const RowVector& y_relay) {
  Graph g(false);
  Var a = model.dest_source_rx.forward(g, g.constant(y_source));
  Var b = model.dest_relay_rx.forward(g, g.constant(y_relay));
  return g.value(model.fusion.forward(g, a, b));
}

TokenSeq SemanticState::tokens() const {
  TokenSeq out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.token);
  return out;
}

DecodeStep semantic_decode_step(const Model& model, DecoderSite site, const SemanticState& state,
                                const RowVector& input) {
  const SemanticDecoder& dec = model.decoder(site);
  const int max_len = model.config().max_len;
  if (state.length() >= max_len) throw Error("semantic state already holds the maximum number of tokens");
  if (input.cols() != dec.input.weight.value.rows()) throw Error("decoder input width mismatch");

  DecodeStep step;
  step.site = site;
  step.position = state.length() + 1;
  step.input = input;

  Matrix h = dec.input.apply(input);
  h.row(0) += dec.token_embedding.value.row(state.last_token());
  h.row(0) += dec.position_embedding.value.row(step.position);

  const int width = static_cast<int>(h.cols());
  for (std::size_t b = 0; b < dec.blocks.size(); ++b) {
    const TransformerBlock& blk = dec.blocks[b];
    const int heads = blk.heads;
    const int dh = width / heads;
    Matrix a = blk.attn_norm.apply(h);
    RowVector q = blk.query.apply(a);
    RowVector k = blk.key.apply(a);
    RowVector v = blk.value.apply(a);

    const int past = state.length();
    Matrix keys(past + 1, width), values(past + 1, width);
    if (past > 0) {
      keys.topRows(past) = state.keys()[b];
      values.topRows(past) = state.values()[b];
    }
    keys.row(past) = k;
    values.row(past) = v;

    RowVector att(width);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hd = 0; hd < heads; ++hd) {
      Eigen::VectorXd s = keys.middleCols(hd * dh, dh) * q.segment(hd * dh, dh).transpose() * inv_sqrt;
      const double mx = s.maxCoeff();
      s = (s.array() - mx).exp();
      s /= s.sum();
      att.segment(hd * dh, dh) = s.transpose() * values.middleCols(hd * dh, dh);
    }
    h += blk.out.apply(att);
    Matrix f = blk.ff_in.apply(blk.ff_norm.apply(h));
    f = f.unaryExpr([](double x) { return nn::gelu_value(x); });
    h += blk.ff_out.apply(f);
    step.keys.push_back(k);
    step.values.push_back(v);
  }
  step.logits = dec.output.apply(dec.final_norm.apply(h));
  return step;
}

SemanticState update_state(SemanticState state, TokenId token, const DecodeStep& step) {
  if (step.position != state.length() + 1) throw Error("decode step does not extend this state");
  if (state.length() >= kMaxTokens) throw Error("semantic state cannot exceed the maximum length");
  const auto blocks = step.keys.size();
  if (state.keys_.empty()) {
    state.keys_.resize(blocks);
    state.values_.resize(blocks);
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    Matrix& k = state.keys_[b];
    Matrix& v = state.values_[b];
    const auto n = state.length();
    k.conservativeResize(n + 1, step.keys[b].cols());
    v.conservativeResize(n + 1, step.values[b].cols());
    k.row(n) = step.keys[b];
    v.row(n) = step.values[b];
  }
  state.entries_.push_back(StateEntry{token, step.input});
  return state;
}

TokenId greedy_token(const Logits& logits) {
  if (logits.size() == 0) throw Error("greedy_token: empty logits");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenSeq greedy_decode(const Model& model, DecoderSite site, const Matrix& inputs) {
  SemanticState state;
  TokenSeq out;
  out.reserve(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    DecodeStep step = semantic_decode_step(model, site, state, inputs.row(t));
    const TokenId w = greedy_token(step.logits);
    state = update_state(std::move(state), w, step);
    out.push_back(w);
  }
  return out;
}

// ---- Training support ---------------------------------------------------------------

double forward_backward(const std::function<Var(Graph&)>& build, double seed,
                        const std::string& stage) {
  Graph g(true);
  Var loss = build(g);
  const double value = g.value(loss)(0, 0);
  if (!std::isfinite(value)) throw DivergenceError(stage, "loss=" + std::to_string(value));
  g.backward(loss, seed);
  return value;
}

// ---- Checkpoints ---------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "semrelay-checkpoint";
constexpr int kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  std::uint32_t bits = read_u32(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model, const CheckpointMeta& meta) {
  out << kMagic << '\n' << "format_version " << kFormatVersion << '\n';
  out << "stage " << (meta.stage.empty() ? "init" : meta.stage) << '\n';
  for (const auto& [k, v] : meta.extra) out << "meta " << k << ' ' << v << '\n';
  for (const auto& [k, v] : model.config().to_map()) out << "config " << k << ' ' << v << '\n';
  model.visit([&](const char* component, const Parameter& p) {
    out << "tensor " << p.name << ' ' << component << ' ' << p.value.rows() << ' ' << p.value.cols()
        << '\n';
  });
  out << "end_header\n";
  model.visit([&](const char*, const Parameter& p) {
    write_u32(out, static_cast<std::uint32_t>(p.value.size()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) write_f32(out, static_cast<float>(p.value.data()[i]));
  });
  if (!out) throw Error("checkpoint write failed");
}

Model load_checkpoint(std::istream& in, CheckpointMeta* meta) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw Error("not a semrelay checkpoint");
  CheckpointMeta m;
  std::map<std::string, std::string> cfg;
  struct Record {
    std::string name;
    long rows, cols;
  };
  std::vector<Record> records;
  int version = -1;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format_version") {
      ls >> version;
    } else if (key == "stage") {
      ls >> m.stage;
    } else if (key == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls >> std::ws, v);
      m.extra[k] = v;
    } else if (key == "config") {
      std::string k, v;
      ls >> k >> v;
      cfg[k] = v;
    } else if (key == "tensor") {
      Record r;
      std::string component;
      ls >> r.name >> component >> r.rows >> r.cols;
      records.push_back(r);
    } else {
      throw Error("unknown checkpoint header line: " + line);
    }
  }
  if (version != kFormatVersion) throw Error("unsupported checkpoint format version");
  Model model(ModelConfig::from_map(cfg), 0);
  auto params = model.parameters();
  if (params.size() != records.size()) throw Error("checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.name != records[i].name || p.value.rows() != records[i].rows || p.value.cols() != records[i].cols) {
      throw Error("checkpoint tensor mismatch at " + records[i].name);
    }
  }
  for (Parameter* p : params) {
    const std::uint32_t n = read_u32(in);
    if (n != static_cast<std::uint32_t>(p->value.size())) throw Error("checkpoint record length mismatch");
    for (std::uint32_t i = 0; i < n; ++i) p->value.data()[i] = read_f32(in);
  }
  if (meta) *meta = std::move(m);
  return model;
}

void save_checkpoint_file(const std::string& path, const Model& model, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  save_checkpoint(out, model, meta);
}

Model load_checkpoint_file(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  return load_checkpoint(in, meta);
}

}  // namespace semrelay::semnet
