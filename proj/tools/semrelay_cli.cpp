#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "semrelay/baseline/baseline.hpp"
#include "semrelay/config.hpp"
#include "semrelay/experiments.hpp"
#include "semrelay/metrics.hpp"
#include "semrelay/relay.hpp"
#include "semrelay/semnet.hpp"
#include "semrelay/textpipe.hpp"
#include "semrelay/training.hpp"

namespace fs = std::filesystem;
using namespace semrelay;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
};

config::AppConfig load_config(const Globals& g) {
  config::AppConfig cfg = g.config_path.empty() ? config::AppConfig::defaults(training::Scale::paper)
                                                : config::load_config_file(g.config_path);
  if (g.seed) cfg.train.seed = *g.seed;
  return cfg;
}

std::string path(const Globals& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

std::ifstream open_in(const std::string& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p + " (run the earlier pipeline steps first)");
  return in;
}

std::ofstream open_out(const std::string& p) {
  fs::create_directories(fs::path(p).parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p);
  return out;
}

textpipe::Vocabulary load_vocab(const Globals& g) {
  auto in = open_in(path(g, "vocab.txt"));
  return textpipe::Vocabulary::load(in);
}

std::vector<textpipe::Sentence> load_sentences(const Globals& g) {
  auto in = open_in(path(g, "sentences.ids"));
  std::vector<textpipe::Sentence> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    textpipe::Sentence s;
    for (TokenId id; ss >> id;) s.ids.push_back(id);
    if (s.ids.empty()) throw IngestError("sentences.ids: empty line", lineno);
    out.push_back(std::move(s));
  }
  return out;
}

textpipe::DatasetSplit load_split(const Globals& g) {
  const auto sentences = load_sentences(g);
  auto in = open_in(path(g, "split.txt"));
  return textpipe::load_split_manifest(in, sentences);
}

std::vector<TokenSeq> ids_of(const std::vector<textpipe::Sentence>& v, int limit = 0) {
  std::vector<TokenSeq> out;
  for (const auto& s : v) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(s.ids);
  }
  return out;
}

std::string checkpoint_path(const Globals& g, relay::Scheme scheme, const std::string& stage) {
  return path(g, relay::to_string(scheme) + "/" + stage + ".ckpt");
}

std::optional<semnet::Model> load_final(const Globals& g, relay::Scheme scheme) {
  const auto p = checkpoint_path(g, scheme, training::kStageRelayDestination);
  if (!fs::exists(p)) return std::nullopt;
  return semnet::load_checkpoint_file(p);
}

// ---- Subcommands -----------------------------------------------------------------

void prepare_data(const Globals& g, const std::string& input) {
  const auto cfg = load_config(g);
  auto in = open_in(input);
  const auto raw = textpipe::read_lines(in);
  auto clean = textpipe::preprocess_corpus(raw);
  if (cfg.max_sentences > 0 && static_cast<int>(clean.size()) > cfg.max_sentences) {
    clean.resize(cfg.max_sentences);
  }
  auto out = open_out(path(g, "clean.txt"));
  for (const auto& line : clean) out << line << '\n';
  std::cout << "read " << raw.size() << " lines, kept " << clean.size() << " -> " << path(g, "clean.txt") << '\n';
}

void build_vocab(const Globals& g) {
  const auto cfg = load_config(g);
  auto in = open_in(path(g, "clean.txt"));
  const auto clean = textpipe::read_lines(in);
  const auto vocab = textpipe::build_vocabulary(clean, cfg.vocab_target);
  {
    auto out = open_out(path(g, "vocab.txt"));
    vocab.save(out);
  }
  // Second pass: the minimum length is enforced on wordpieces.
  const auto kept = textpipe::preprocess_corpus(clean, &vocab);
  std::vector<textpipe::Sentence> sentences;
  {
    auto out = open_out(path(g, "sentences.ids"));
    for (const auto& line : kept) {
      sentences.push_back(textpipe::tokenize(line, vocab));
      for (std::size_t i = 0; i < sentences.back().ids.size(); ++i) {
        out << (i ? " " : "") << sentences.back().ids[i];
      }
      out << '\n';
    }
  }
  const auto split = textpipe::split_dataset(sentences, cfg.train.seed);
  auto out = open_out(path(g, "split.txt"));
  textpipe::save_split_manifest(split, out);
  std::cout << "vocabulary " << vocab.size() << " tokens; " << sentences.size() << " sentences (train "
            << split.train.size() << ", validation " << split.validation.size() << ", test " << split.test.size()
            << ")\n";
}

void train(const Globals& g, const std::string& stage, const std::string& scheme_name,
           const std::string& scale_name) {
  auto cfg = load_config(g);
  if (!scale_name.empty()) {
    const auto scale = training::parse_scale(scale_name);
    if (scale != cfg.train.scale) {
      // Switch preset but keep the explicitly configured channel and seed.
      auto preset = config::AppConfig::defaults(scale);
      preset.channel = cfg.channel;
      preset.train.channel = cfg.channel;
      preset.train.seed = cfg.train.seed;
      cfg = preset;
    }
  }
  cfg.train.scheme = relay::parse_scheme(scheme_name);
  const auto vocab = load_vocab(g);
  const auto split = load_split(g);
  const auto data = ids_of(split.train);

  semnet::CheckpointMeta meta;
  std::optional<semnet::Model> model;
  training::TrainResult result;
  if (stage == training::kStageDecoder) {
    auto mc = cfg.model;
    mc.vocab_size = vocab.size();
    model.emplace(mc, cfg.train.seed);
    meta.stage = "init";
    result = training::train_semantic_decoder(cfg.train, data, *model, meta);
  } else if (stage == training::kStageSourceRelay) {
    model.emplace(semnet::load_checkpoint_file(checkpoint_path(g, cfg.train.scheme, training::kStageDecoder), &meta));
    result = training::train_source_relay(cfg.train, data, *model, meta);
  } else if (stage == training::kStageRelayDestination) {
    const auto prev = cfg.train.scheme == relay::Scheme::source_only ? training::kStageDecoder
                                                                      : training::kStageSourceRelay;
    model.emplace(semnet::load_checkpoint_file(checkpoint_path(g, cfg.train.scheme, prev), &meta));
    result = training::train_relay_destination(cfg.train, data, *model, meta);
  } else {
    throw Error("unknown stage " + stage);
  }
  const auto ckpt = checkpoint_path(g, cfg.train.scheme, stage);
  fs::create_directories(fs::path(ckpt).parent_path());
  semnet::save_checkpoint_file(ckpt, *model, meta);
  auto log = open_out(path(g, relay::to_string(cfg.train.scheme) + "/" + stage + ".log.csv"));
  training::write_log_csv(log, result.log);
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << result.epoch_losses[e] << '\n';
  }
  std::cout << "saved " << ckpt << '\n';
}

baseline::TransitionMatrix load_transitions(const Globals& g) {
  return baseline::TransitionMatrix::load_file(path(g, "baseline/transitions.txt"));
}

void calibrate(const Globals& g) {
  const auto cfg = load_config(g);
  const auto vocab = load_vocab(g);
  const auto split = load_split(g);
  channel::Rng rng(cfg.train.seed);
  const auto train_cfg = cfg.train;
  auto P = baseline::calibrate_transitions(
      ids_of(split.train), vocab.size(),
      [&train_cfg](channel::Rng& r) { return training::sample_geometry(train_cfg, r); }, cfg.channel, rng,
      cfg.calibration_symbols);
  const auto p = path(g, "baseline/transitions.txt");
  fs::create_directories(fs::path(p).parent_path());
  P.save_file(p);
  P.save(std::cout);
}

struct Loaded {
  std::optional<semnet::Model> slf, spf, source_only;
  std::optional<baseline::TransitionMatrix> P;
  std::unique_ptr<metrics::SentenceEmbedder> embedder;
  experiments::Systems systems;
};

Loaded load_systems(const Globals& g, const std::string& table) {
  Loaded l;
  l.slf = load_final(g, relay::Scheme::slf);
  l.spf = load_final(g, relay::Scheme::spf);
  l.source_only = load_final(g, relay::Scheme::source_only);
  if (fs::exists(path(g, "baseline/transitions.txt"))) l.P = load_transitions(g);
  l.systems.slf = l.slf ? &*l.slf : nullptr;
  l.systems.spf = l.spf ? &*l.spf : nullptr;
  l.systems.source_only = l.source_only ? &*l.source_only : nullptr;
  l.systems.baseline = l.P ? &*l.P : nullptr;
  l.systems.vocab_size = load_vocab(g).size();
  if (!table.empty()) {
    l.embedder = std::make_unique<metrics::TableEmbedder>(metrics::TableEmbedder::load(table));
  } else if (const semnet::Model* m = l.slf ? &*l.slf : l.spf ? &*l.spf : l.source_only ? &*l.source_only : nullptr) {
    l.embedder = std::make_unique<metrics::EncoderEmbedder>(*m);
  }
  return l;
}

experiments::EvalSetup make_setup(const Globals& g, const config::AppConfig& cfg, const Loaded& l,
                                  const std::vector<std::uint64_t>& seeds) {
  experiments::EvalSetup setup;
  setup.params = cfg.channel;
  setup.test = ids_of(load_split(g).test, cfg.eval_sentences);
  setup.embedder = l.embedder.get();
  setup.seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : seeds;
  return setup;
}

void print_records(const std::vector<experiments::MetricsRecord>& records) {
  experiments::write_csv(std::cout, records);
}

void eval(const Globals& g, const std::string& table, const std::vector<std::uint64_t>& seeds, int samples) {
  const auto cfg = load_config(g);
  auto l = load_systems(g, table);
  const auto setup = make_setup(g, cfg, l, seeds);
  const auto geo = channel::LinkGeometry::from_relay_fraction(cfg.eval_d_sd, cfg.eval_gamma);
  std::vector<experiments::MetricsRecord> records;
  for (const auto& [name, run] : experiments::runners(l.systems, cfg.channel)) {
    for (auto seed : setup.seeds) records.push_back(experiments::evaluate_point(name, run, geo, seed, setup));
  }
  experiments::save_csv(path(g, "eval.csv"), records);
  print_records(records);
  if (samples > 0) {
    const auto vocab = load_vocab(g);
    channel::Rng rng(cfg.train.seed);
    for (const auto& [name, run] : experiments::runners(l.systems, cfg.channel)) {
      for (int i = 0; i < samples && i < static_cast<int>(setup.test.size()); ++i) {
        std::cout << name << " | " << textpipe::detokenize(setup.test[i], vocab) << " => "
                  << textpipe::detokenize(run(setup.test[i], geo, rng), vocab) << '\n';
      }
    }
  }
}

void sweep(const Globals& g, const std::string& axis, const std::string& table,
           const std::vector<std::uint64_t>& seeds) {
  const auto cfg = load_config(g);
  auto l = load_systems(g, table);
  const auto setup = make_setup(g, cfg, l, seeds);
  std::vector<experiments::MetricsRecord> records;
  if (axis == "relay") {
    records = experiments::sweep_relay_position(l.systems, cfg.sweep_gammas, cfg.eval_d_sd, setup);
  } else if (axis == "distance") {
    records = experiments::sweep_sd_distance(l.systems, cfg.sweep_distances, setup);
  } else {
    throw Error("unknown sweep axis " + axis);
  }
  experiments::save_csv(path(g, "sweep_" + axis + ".csv"), records);
  print_records(records);
}

void report(const Globals& g, const std::string& input, const std::string& dir) {
  const auto records = experiments::load_csv(input);
  const auto target = dir.empty() ? path(g, "report") : dir;
  for (const auto& f : experiments::emit_report(records, target)) std::cout << target << "/" << f << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic relay communication: data, training, baseline and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "flat key = value configuration file");
  app.add_option("--seed", g.seed, "overrides the configured seed");
  app.add_option("--out", g.out, "working directory for all artifacts")->capture_default_str();

  std::string input, table, report_dir, stage, scheme = "slf", scale, axis;
  std::vector<std::uint64_t> seeds;
  int samples = 0;

  auto* prep = app.add_subcommand("prepare-data", "filter a raw corpus (one sentence per line)");
  prep->add_option("--input", input, "raw corpus file")->required();
  app.add_subcommand("build-vocab", "build the wordpiece vocabulary, tokenize and split");
  auto* tr = app.add_subcommand("train", "run one training stage");
  tr->add_option("--stage", stage, "decoder | src-relay | relay-dst")
      ->required()
      ->check(CLI::IsMember({"decoder", "src-relay", "relay-dst"}));
  tr->add_option("--scheme", scheme, "slf | spf | source_only")
      ->check(CLI::IsMember({"slf", "spf", "source_only"}))
      ->capture_default_str();
  tr->add_option("--scale", scale, "paper | toy (defaults to the config)")->check(CLI::IsMember({"paper", "toy"}));
  app.add_subcommand("calibrate-baseline", "estimate the relay transition matrix for the conventional chain");
  auto* ev = app.add_subcommand("eval", "evaluate every trained system at the configured geometry");
  ev->add_option("--embedding-table", table, "token embedding table for semantic similarity");
  ev->add_option("--seeds", seeds, "evaluation seeds");
  ev->add_option("--samples", samples, "print this many decoded sentences per system");
  auto* sw = app.add_subcommand("sweep", "relay-position or distance sweep");
  sw->add_option("--axis", axis, "relay | distance")->required()->check(CLI::IsMember({"relay", "distance"}));
  sw->add_option("--embedding-table", table, "token embedding table for semantic similarity");
  sw->add_option("--seeds", seeds, "evaluation seeds");
  auto* rep = app.add_subcommand("report", "CSV and SVG charts from sweep records");
  rep->add_option("--input", input, "metrics CSV")->required();
  rep->add_option("--dir", report_dir, "output directory (default OUT/report)");

  CLI11_PARSE(app, argc, argv);
  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "prepare-data") prepare_data(g, input);
    else if (name == "build-vocab") build_vocab(g);
    else if (name == "train") train(g, stage, scheme, scale);
    else if (name == "calibrate-baseline") calibrate(g);
    else if (name == "eval") eval(g, table, seeds, samples);
    else if (name == "sweep") sweep(g, axis, table, seeds);
    else if (name == "report") report(g, input, report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
