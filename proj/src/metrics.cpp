#include "semrelay/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace semrelay::metrics {

namespace {

std::map<TokenSeq, int> ngram_counts(const TokenSeq& s, int n) {
  std::map<TokenSeq, int> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[TokenSeq(s.begin() + i, s.begin() + i + n)];
  return out;
}

}  // namespace

BleuDetail bleu_detail(const TokenSeq& candidate, const TokenSeq& reference, int max_n) {
  if (max_n < 1 || max_n > 4) throw Error("bleu: max_n must be in 1..4");
  if (reference.empty()) throw Error("bleu: empty reference");
  BleuDetail out;
  if (candidate.empty()) {
    out.precisions.assign(max_n, 0.0);
    out.brevity_penalty = 0.0;
    return out;
  }
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    int total = 0, clipped = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = ref.find(gram);
      if (it != ref.end()) clipped += std::min(count, it->second);
    }
    const double p = total > 0 ? static_cast<double>(clipped) / total : 0.0;
    out.precisions.push_back(p);
    log_sum += std::log(std::max(p, kBleuFloor)) / max_n;
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  out.brevity_penalty = c < r ? std::exp(1.0 - r / c) : 1.0;
  out.score = out.brevity_penalty * std::exp(log_sum);
  return out;
}

double bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n) {
  return bleu_detail(candidate, reference, max_n).score;
}

std::vector<double> EncoderEmbedder::embed(const TokenSeq& sentence) const {
  if (sentence.empty()) return std::vector<double>(width(), 0.0);
  const nn::Matrix e = semnet::semantic_encode(model_, sentence, false);
  const nn::RowVector mean = e.bottomRows(e.rows() - 1).colwise().mean();
  return std::vector<double>(mean.data(), mean.data() + mean.size());
}

TableEmbedder::TableEmbedder(std::map<TokenId, std::vector<double>> table) : table_(std::move(table)) {
  for (const auto& [id, v] : table_) {
    if (width_ == 0) width_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != width_ || width_ == 0) throw Error("embedding table rows differ in width");
  }
}

TableEmbedder TableEmbedder::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::map<TokenId, std::vector<double>> table;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TokenId id;
    if (!(ss >> id)) throw IngestError("embedding table: missing token id", lineno);
    std::vector<double> v;
    for (double x; ss >> x;) {
      if (!std::isfinite(x)) throw IngestError("embedding table: non-finite value", lineno);
      v.push_back(x);
    }
    table[id] = std::move(v);
  }
  return TableEmbedder(std::move(table));
}

std::vector<double> TableEmbedder::embed(const TokenSeq& sentence) const {
  std::vector<double> out(width_, 0.0);
  int n = 0;
  for (TokenId w : sentence) {
    auto it = table_.find(w);
    if (it == table_.end()) continue;
    for (int i = 0; i < width_; ++i) out[i] += it->second[i];
    ++n;
  }
  if (n > 0) {
    for (double& x : out) x /= n;
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine: width mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double semantic_similarity(const TokenSeq& a, const TokenSeq& b, const SentenceEmbedder& embedder) {
  return cosine(embedder.embed(a), embedder.embed(b));
}

}  // namespace semrelay::metrics
