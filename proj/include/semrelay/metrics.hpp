#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "semrelay/common.hpp"
#include "semrelay/semnet.hpp"

namespace semrelay::metrics {

struct BleuDetail {
  double score = 0.0;
  std::vector<double> precisions;  // modified n-gram precision, n = 1..max_n
  double brevity_penalty = 1.0;
};

// Cumulative sentence BLEU with uniform weights, clipped n-gram precision,
// brevity penalty exp(1 - r/c) when c < r, zero precisions floored at 1e-9.
// An empty candidate scores 0.
BleuDetail bleu_detail(const TokenSeq& candidate, const TokenSeq& reference, int max_n);
double bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n);

inline constexpr double kBleuFloor = 1e-9;

class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::vector<double> embed(const TokenSeq& sentence) const = 0;
  virtual int width() const = 0;
};

// Mean of the trained encoder's outputs over the content positions.
class EncoderEmbedder : public SentenceEmbedder {
 public:
  explicit EncoderEmbedder(const semnet::Model& model) : model_(model) {}
  std::vector<double> embed(const TokenSeq& sentence) const override;
  int width() const override { return model_.config().embed_dim; }

 private:
  const semnet::Model& model_;
};

// Mean of per-token vectors from a table file: one line per token id,
// "id v1 v2 ... vk". Unknown ids contribute nothing.
class TableEmbedder : public SentenceEmbedder {
 public:
  explicit TableEmbedder(std::map<TokenId, std::vector<double>> table);
  static TableEmbedder load(const std::string& path);
  std::vector<double> embed(const TokenSeq& sentence) const override;
  int width() const override { return width_; }

 private:
  std::map<TokenId, std::vector<double>> table_;
  int width_ = 0;
};

// Cosine similarity; 0 when either vector is zero.
double cosine(const std::vector<double>& a, const std::vector<double>& b);
double semantic_similarity(const TokenSeq& a, const TokenSeq& b, const SentenceEmbedder& embedder);

}  // namespace semrelay::metrics
