#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "semrelay/baseline/baseline.hpp"
#include "semrelay/metrics.hpp"
#include "semrelay/relay.hpp"
#include "semrelay/semnet.hpp"

namespace semrelay::experiments {

struct MetricsRecord {
  std::string scheme;   // slf | spf | source_only | baseline
  std::string channel;  // awgn | rayleigh
  double d_sd_m = 0.0;
  double d_sr_m = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double semsim = 0.0;
  int n_sentences = 0;

  void validate() const;
};

inline constexpr const char* kCsvHeader = "scheme,channel,d_sd_m,d_sr_m,gamma,seed,bleu1,bleu2,bleu3,semsim,n_sentences";

void write_csv(std::ostream& out, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_csv(std::istream& in);
void save_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> load_csv(const std::string& path);

// Reconstructs one sentence at a geometry with the given rng.
using SentenceRunner =
    std::function<TokenSeq(const TokenSeq&, const channel::LinkGeometry&, channel::Rng&)>;

// The systems compared at every sweep point. Null entries are skipped.
struct Systems {
  const semnet::Model* slf = nullptr;
  const semnet::Model* spf = nullptr;
  const semnet::Model* source_only = nullptr;
  const baseline::TransitionMatrix* baseline = nullptr;
  int vocab_size = 0;  // for the baseline's token index
};

struct EvalSetup {
  channel::ChannelParams params;
  std::vector<TokenSeq> test;
  const metrics::SentenceEmbedder* embedder = nullptr;  // semsim left at 0 when null
  std::vector<std::uint64_t> seeds{1};
};

// Mean metrics of one system over the test set at one geometry. The rng is
// seeded from (seed, d_sd, d_sr) only, so every system sees the same stream.
MetricsRecord evaluate_point(const std::string& scheme, const SentenceRunner& runner,
                             const channel::LinkGeometry& geometry, std::uint64_t seed,
                             const EvalSetup& setup);

std::vector<std::pair<std::string, SentenceRunner>> runners(const Systems& systems,
                                                            const channel::ChannelParams& params);

std::vector<MetricsRecord> sweep_relay_position(const Systems& systems, const std::vector<double>& gammas,
                                                double d_sd, const EvalSetup& setup);
std::vector<MetricsRecord> sweep_sd_distance(const Systems& systems, const std::vector<double>& distances,
                                             const EvalSetup& setup);

// Max minus min of BLEU-3 over the records of one scheme.
double bleu3_spread(const std::vector<MetricsRecord>& records, const std::string& scheme);

// ---- Report -------------------------------------------------------------------

// Writes records.csv, one SVG line chart per (axis, metric) and index.html
// into dir. Returns the written file names. Throws on empty input.
std::vector<std::string> emit_report(const std::vector<MetricsRecord>& records, const std::string& dir);

}  // namespace semrelay::experiments
