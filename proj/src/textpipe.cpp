#include "semrelay/textpipe.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace semrelay::textpipe {

namespace {

const char* const kSpecialTokens[kNumSpecial] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
constexpr std::string_view kContinuation = "##";

bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

template <typename Map>
std::vector<std::pair<std::string, long>> by_frequency(const Map& counts) {
  std::vector<std::pair<std::string, long>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (int i = 0; i < kNumSpecial; ++i) {
    if (static_cast<int>(tokens.size()) <= i || tokens[i] != kSpecialTokens[i]) {
      tokens.insert(tokens.begin() + i, kSpecialTokens[i]);
    }
  }
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw Error("duplicate vocabulary token: " + tokens_[i]);
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

TokenId Vocabulary::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw IngestError("empty vocabulary entry", lineno);
    tokens.push_back(line);
  }
  if (in.bad()) throw IngestError("vocabulary read failure", lineno);
  if (static_cast<int>(tokens.size()) < kNumSpecial) {
    throw IngestError("vocabulary shorter than the special-token block", lineno);
  }
  for (int i = 0; i < kNumSpecial; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw IngestError("expected special token " + std::string(kSpecialTokens[i]), i + 1);
    }
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> basic_split(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else if (is_punct(c)) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

bool is_ascii(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IngestError("corpus read failure", lineno + 1);
  return lines;
}

std::vector<std::string> preprocess_corpus(const std::vector<std::string>& raw_lines,
                                           const Vocabulary* vocab) {
  std::vector<std::string> out;
  for (const auto& line : raw_lines) {
    if (!is_ascii(line)) continue;
    std::size_t count = vocab ? tokenize_untruncated(line, *vocab).size()
                              : basic_split(line).size();
    if (count < static_cast<std::size_t>(kMinTokens)) continue;
    out.push_back(line);
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, int target_size) {
  if (target_size < 16) throw Error("vocabulary target size must be at least 16");
  std::map<std::string, long> words;
  for (const auto& line : corpus) {
    for (auto& w : basic_split(line)) ++words[w];
  }
  if (words.empty()) throw Error("cannot build a vocabulary from an empty corpus");

  std::map<std::string, long> initial, continuation, suffixes;
  for (const auto& [w, n] : words) {
    initial[w.substr(0, 1)] += n;
    for (std::size_t i = 1; i < w.size(); ++i) {
      continuation[std::string(kContinuation) + w[i]] += n;
      if (w.size() - i >= 2) suffixes[std::string(kContinuation) + w.substr(i)] += n;
    }
  }

  std::vector<std::string> tokens(std::begin(kSpecialTokens), std::end(kSpecialTokens));
  std::map<std::string, bool> taken;
  auto take = [&](const std::vector<std::pair<std::string, long>>& ranked) {
    for (const auto& [piece, n] : ranked) {
      if (static_cast<int>(tokens.size()) >= target_size) return;
      if (taken.emplace(piece, true).second) tokens.push_back(piece);
    }
  };
  // Characters first so every ASCII word stays representable, then whole
  // words, then multi-character continuation pieces.
  take(by_frequency(initial));
  take(by_frequency(continuation));
  take(by_frequency(words));
  take(by_frequency(suffixes));
  return Vocabulary(std::move(tokens));
}

std::vector<TokenId> segment_word(std::string_view word, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  std::size_t start = 0;
  std::string candidate;
  while (start < word.size()) {
    TokenId match = -1;
    std::size_t end = word.size();
    for (; end > start; --end) {
      candidate.assign(start > 0 ? kContinuation : std::string_view{});
      candidate.append(word.substr(start, end - start));
      match = vocab.find(candidate);
      if (match >= 0) break;
    }
    if (match < 0) {
      out.push_back(kUnkId);
      ++start;
    } else {
      out.push_back(match);
      start = end;
    }
  }
  return out;
}

TokenSeq tokenize_untruncated(std::string_view text, const Vocabulary& vocab) {
  TokenSeq ids;
  for (const auto& w : basic_split(text)) {
    auto pieces = segment_word(w, vocab);
    ids.insert(ids.end(), pieces.begin(), pieces.end());
  }
  return ids;
}

Sentence tokenize(std::string_view text, const Vocabulary& vocab) {
  Sentence s{tokenize_untruncated(text, vocab)};
  if (s.ids.empty()) throw Error("cannot tokenize empty text");
  if (s.length() > kMaxTokens) s.ids.resize(kMaxTokens);
  return s;
}

std::string detokenize(const TokenSeq& ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& piece = vocab.token(id);
    if (piece.rfind(kContinuation, 0) == 0) {
      out.append(piece, kContinuation.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out.append(piece);
    }
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<Sentence>& sentences, std::uint64_t seed) {
  const std::size_t n = sentences.size();
  if (n < 10) throw Error("split_dataset needs at least 10 sentences");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = n * 70 / 100;
  const std::size_t n_val = n * 15 / 100;
  DatasetSplit split;
  split.seed = seed;
  split.train_index.assign(order.begin(), order.begin() + n_train);
  split.validation_index.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test_index.assign(order.begin() + n_train + n_val, order.end());
  for (auto i : split.train_index) split.train.push_back(sentences[i]);
  for (auto i : split.validation_index) split.validation.push_back(sentences[i]);
  for (auto i : split.test_index) split.test.push_back(sentences[i]);
  return split;
}

void save_split_manifest(const DatasetSplit& split, std::ostream& out) {
  out << "seed " << split.seed << '\n';
  auto emit = [&](const char* name, const std::vector<std::size_t>& idx) {
    out << name;
    for (auto i : idx) out << ' ' << i;
    out << '\n';
  };
  emit("train", split.train_index);
  emit("validation", split.validation_index);
  emit("test", split.test_index);
}

DatasetSplit load_split_manifest(std::istream& in, const std::vector<Sentence>& sentences) {
  DatasetSplit split;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    if (key == "seed") {
      ls >> split.seed;
      continue;
    }
    std::vector<std::size_t>* idx = key == "train"        ? &split.train_index
                                    : key == "validation" ? &split.validation_index
                                    : key == "test"       ? &split.test_index
                                                          : nullptr;
    if (!idx) throw IngestError("unknown split name '" + key + "'", lineno);
    std::size_t i;
    while (ls >> i) {
      if (i >= sentences.size()) throw IngestError("split index out of range", lineno);
      idx->push_back(i);
    }
  }
  for (auto i : split.train_index) split.train.push_back(sentences[i]);
  for (auto i : split.validation_index) split.validation.push_back(sentences[i]);
  for (auto i : split.test_index) split.test.push_back(sentences[i]);
  return split;
}

}  // namespace semrelay::textpipe
