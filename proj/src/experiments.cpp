#include "semrelay/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace semrelay::experiments {

void MetricsRecord::validate() const {
  for (double b : {bleu1, bleu2, bleu3}) {
    if (!(b >= 0.0 && b <= 1.0)) throw Error("BLEU out of [0, 1]");
  }
  if (!(semsim >= -1.0 && semsim <= 1.0)) throw Error("similarity out of [-1, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma out of (0, 1)");
  if (n_sentences < 0) throw Error("negative sentence count");
}

void write_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  out.imbue(std::locale::classic());
  out << kCsvHeader << '\n' << std::setprecision(10);
  for (const auto& r : records) {
    out << r.scheme << ',' << r.channel << ',' << r.d_sd_m << ',' << r.d_sr_m << ',' << r.gamma << ','
        << r.seed << ',' << r.bleu1 << ',' << r.bleu2 << ',' << r.bleu3 << ',' << r.semsim << ','
        << r.n_sentences << '\n';
  }
}

std::vector<MetricsRecord> read_csv(std::istream& in) {
  std::string line;
  long lineno = 1;
  if (!std::getline(in, line) || line != kCsvHeader) throw IngestError("metrics CSV: missing header", lineno);
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw IngestError("metrics CSV: expected 11 fields", lineno);
    MetricsRecord r;
    try {
      r.scheme = f[0];
      r.channel = f[1];
      r.d_sd_m = std::stod(f[2]);
      r.d_sr_m = std::stod(f[3]);
      r.gamma = std::stod(f[4]);
      r.seed = std::stoull(f[5]);
      r.bleu1 = std::stod(f[6]);
      r.bleu2 = std::stod(f[7]);
      r.bleu3 = std::stod(f[8]);
      r.semsim = std::stod(f[9]);
      r.n_sentences = std::stoi(f[10]);
    } catch (const std::exception&) {
      throw IngestError("metrics CSV: malformed number", lineno);
    }
    out.push_back(r);
  }
  return out;
}

void save_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_csv(out, records);
}

std::vector<MetricsRecord> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return read_csv(in);
}

MetricsRecord evaluate_point(const std::string& scheme, const SentenceRunner& runner,
                             const channel::LinkGeometry& geometry, std::uint64_t seed,
                             const EvalSetup& setup) {
  geometry.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(std::llround(geometry.d_sd * 1000.0)),
                    static_cast<std::uint32_t>(std::llround(geometry.d_sr * 1000.0))};
  channel::Rng rng(seq);
  MetricsRecord r;
  r.scheme = scheme;
  r.channel = channel::to_string(setup.params.fading);
  r.d_sd_m = geometry.d_sd;
  r.d_sr_m = geometry.d_sr;
  r.gamma = geometry.gamma();
  r.seed = seed;
  for (const auto& s : setup.test) {
    const TokenSeq out = runner(s, geometry, rng);
    r.bleu1 += metrics::bleu(out, s, 1);
    r.bleu2 += metrics::bleu(out, s, 2);
    r.bleu3 += metrics::bleu(out, s, 3);
    if (setup.embedder) r.semsim += metrics::semantic_similarity(out, s, *setup.embedder);
  }
  r.n_sentences = static_cast<int>(setup.test.size());
  if (r.n_sentences > 0) {
    r.bleu1 /= r.n_sentences;
    r.bleu2 /= r.n_sentences;
    r.bleu3 /= r.n_sentences;
    r.semsim /= r.n_sentences;
  }
  return r;
}

std::vector<std::pair<std::string, SentenceRunner>> runners(const Systems& systems,
                                                            const channel::ChannelParams& params) {
  std::vector<std::pair<std::string, SentenceRunner>> out;
  auto learned = [&](const semnet::Model* model, relay::Scheme scheme) {
    if (!model) return;
    out.emplace_back(relay::to_string(scheme),
                     [model, scheme, params](const TokenSeq& s, const channel::LinkGeometry& geo,
                                             channel::Rng& rng) {
                       return relay::run_episode(scheme, s, geo, params, *model, rng).destination_tokens;
                     });
  };
  learned(systems.slf, relay::Scheme::slf);
  learned(systems.spf, relay::Scheme::spf);
  learned(systems.source_only, relay::Scheme::source_only);
  if (systems.baseline) {
    if (systems.vocab_size <= 0) throw Error("baseline evaluation needs the vocabulary size");
    const baseline::TransitionMatrix* P = systems.baseline;
    const int V = systems.vocab_size;
    out.emplace_back("baseline", [P, V, params](const TokenSeq& s, const channel::LinkGeometry& geo,
                                                channel::Rng& rng) {
      return baseline::run_baseline_episode(s, geo, params, *P, V, rng).destination_tokens;
    });
  }
  if (out.empty()) throw Error("no systems to evaluate");
  return out;
}

namespace {

std::vector<MetricsRecord> sweep(const Systems& systems, const std::vector<channel::LinkGeometry>& points,
                                 const EvalSetup& setup) {
  if (setup.test.empty()) throw Error("sweep needs a non-empty test set");
  std::vector<MetricsRecord> out;
  const auto systems_list = runners(systems, setup.params);
  for (const auto& geo : points) {
    for (std::uint64_t seed : setup.seeds) {
      for (const auto& [name, run] : systems_list) {
        out.push_back(evaluate_point(name, run, geo, seed, setup));
      }
    }
  }
  return out;
}

}  // namespace

std::vector<MetricsRecord> sweep_relay_position(const Systems& systems, const std::vector<double>& gammas,
                                                double d_sd, const EvalSetup& setup) {
  std::vector<channel::LinkGeometry> points;
  for (double g : gammas) points.push_back(channel::LinkGeometry::from_relay_fraction(d_sd, g));
  return sweep(systems, points, setup);
}

std::vector<MetricsRecord> sweep_sd_distance(const Systems& systems, const std::vector<double>& distances,
                                             const EvalSetup& setup) {
  std::vector<channel::LinkGeometry> points;
  for (double d : distances) points.push_back(channel::LinkGeometry::from_relay_fraction(d, 0.5));
  return sweep(systems, points, setup);
}

double bleu3_spread(const std::vector<MetricsRecord>& records, const std::string& scheme) {
  double lo = 1.0, hi = 0.0;
  bool any = false;
  for (const auto& r : records) {
    if (r.scheme != scheme) continue;
    lo = std::min(lo, r.bleu3);
    hi = std::max(hi, r.bleu3);
    any = true;
  }
  if (!any) throw Error("no records for scheme " + scheme);
  return hi - lo;
}

}  // namespace semrelay::experiments
