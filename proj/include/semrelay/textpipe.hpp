#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semrelay/common.hpp"

namespace semrelay::textpipe {

// Wordpiece inventory. Ids 0..3 are PAD, UNK, CLS, SEP; continuation pieces
// carry a "##" prefix.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(TokenId id) const;
  // Returns -1 when absent.
  TokenId find(std::string_view piece) const;
  bool contains(std::string_view piece) const { return find(piece) >= 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// A tokenized sentence: content token ids only, no CLS/SEP.
struct Sentence {
  TokenSeq ids;
  int length() const { return static_cast<int>(ids.size()); }
  bool operator==(const Sentence&) const = default;
};

struct DatasetSplit {
  std::vector<Sentence> train;
  std::vector<Sentence> validation;
  std::vector<Sentence> test;
  // Positions into the input sentence list, per split.
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> validation_index;
  std::vector<std::size_t> test_index;
  std::uint64_t seed = 0;
};

// Whitespace split with ASCII punctuation separated into standalone words.
std::vector<std::string> basic_split(std::string_view text);

bool is_ascii(std::string_view text);

// Reads one sentence per line. Throws IngestError on a stream failure.
std::vector<std::string> read_lines(std::istream& in);

// Keeps pure-ASCII lines whose tokenization has at least kMinTokens pieces,
// in input order. Without a vocabulary the count is over basic words, which
// never exceeds the wordpiece count.
std::vector<std::string> preprocess_corpus(const std::vector<std::string>& raw_lines,
                                           const Vocabulary* vocab = nullptr);

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, int target_size);

// Greedy longest-match wordpiece segmentation of one basic word. A position
// with no matching piece emits UNK for a single character.
std::vector<TokenId> segment_word(std::string_view word, const Vocabulary& vocab);

// Tokenizes and truncates to kMaxTokens. Throws on empty text.
Sentence tokenize(std::string_view text, const Vocabulary& vocab);
// Tokenizes without truncation (used for length filtering).
TokenSeq tokenize_untruncated(std::string_view text, const Vocabulary& vocab);

std::string detokenize(const TokenSeq& ids, const Vocabulary& vocab);

// Seeded shuffle followed by a contiguous partition: floor(0.70 N) train,
// floor(0.15 N) validation, remainder test.
DatasetSplit split_dataset(const std::vector<Sentence>& sentences, std::uint64_t seed);

void save_split_manifest(const DatasetSplit& split, std::ostream& out);
// Rebuilds a split from a manifest against the sentence list it indexes.
DatasetSplit load_split_manifest(std::istream& in, const std::vector<Sentence>& sentences);

}  // namespace semrelay::textpipe
