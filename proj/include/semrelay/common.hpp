#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace semrelay {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Maximum number of content tokens per sentence.
inline constexpr int kMaxTokens = 30;
// Sentences with fewer tokens than this are dropped during preprocessing.
inline constexpr int kMinTokens = 5;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr int kNumSpecial = 4;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data could not be read or parsed.
class IngestError : public Error {
 public:
  IngestError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& stage, const std::string& detail)
      : Error("non-finite loss in " + stage + ": " + detail), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace semrelay
