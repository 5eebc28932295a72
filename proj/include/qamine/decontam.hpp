#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qamine/common.hpp"

namespace qamine::decontam {

struct DecontamConfig {
  int num_permutations = 128;
  int shingle_width = 5;  // characters, after normalization
  double jaccard_threshold = 0.8;
  std::uint64_t seed = 1;
  /// LSH candidate pruning. When on, the band layout is derived from the
  /// threshold so that no pair with estimate >= threshold can be missed.
  bool use_banding = true;

  void validate() const;
};

/// Text a training pair is matched on: question, description and answer
/// joined by newlines (normalization happens inside the matchers).
std::string pair_match_text(const QAPair& pair);

/// Multi-pattern substring matcher (Aho-Corasick) over normalized text.
class QueryMatcher {
 public:
  /// Throws ConfigError on a query that is empty after normalization.
  explicit QueryMatcher(const std::vector<std::string>& queries);

  /// True if any query occurs in normalize_for_matching(text).
  bool matches(std::string_view text) const;
  /// Indices of queries occurring in the normalized text, ascending.
  std::vector<std::size_t> find_all(std::string_view text) const;

  std::size_t size() const { return pattern_count_; }

 private:
  struct Node {
    std::map<unsigned char, std::int32_t> next;
    std::int32_t fail = 0;
    std::int32_t output_link = -1;  // nearest proper suffix node that ends a pattern
    std::vector<std::size_t> patterns;
  };
  template <typename Visit>
  void scan(std::string_view normalized, Visit&& visit) const;
  std::int32_t step(std::int32_t state, unsigned char c) const;

  std::vector<Node> nodes_;
  std::size_t pattern_count_ = 0;
};

struct SplitResult {
  std::vector<QAPair> kept;
  std::vector<QAPair> dropped;
};

/// Drops a pair iff some query is a substring of its normalized match text.
SplitResult substring_decontaminate(const std::vector<QAPair>& train, const QueryMatcher& matcher);
SplitResult substring_decontaminate(const std::vector<QAPair>& train, const std::vector<std::string>& queries);

struct MinHashSignature {
  std::vector<std::uint64_t> values;
  int shingle_width = 0;
  std::uint64_t seed = 0;

  bool operator==(const MinHashSignature&) const = default;
};

/// Character shingles of the normalized text (code points, not bytes).
/// Text shorter than the width yields its whole normalized form as one shingle.
std::vector<std::string> shingles(std::string_view text, int width);

/// Per-permutation hashes h_i(x) = (a_i * x + b_i) mod (2^61 - 1) over a 64-bit
/// base hash of each shingle, with (a_i, b_i) drawn from the seed.
class MinHasher {
 public:
  explicit MinHasher(const DecontamConfig& cfg);
  /// Throws ConfigError if the text is empty after normalization.
  MinHashSignature signature(std::string_view text) const;

 private:
  std::vector<std::uint64_t> a_;
  std::vector<std::uint64_t> b_;
  int shingle_width_;
  std::uint64_t seed_;
};

MinHashSignature minhash_signature(std::string_view text, const DecontamConfig& cfg);

/// Fraction of agreeing positions. Throws ConfigError on mismatched configs.
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

/// Exact shingle-set Jaccard; the reference the estimator approximates.
double exact_jaccard(std::string_view a, std::string_view b, int width);

struct BandLayout {
  int bands = 0;
  int rows = 0;
};

/// Bands chosen so that, with at most floor((1 - t) * P) disagreeing
/// positions, at least one band agrees entirely. rows == 0 means no layout
/// is lossless for this threshold and the scan must be exhaustive.
BandLayout conservative_bands(int num_permutations, double threshold);

/// Drops a pair iff its estimated Jaccard with some query reaches the threshold.
SplitResult fuzzy_dedup(const std::vector<QAPair>& train, const std::vector<std::string>& queries,
                        const DecontamConfig& cfg);

struct EvalSet {
  std::string name;
  std::vector<std::string> queries;
};

struct SetContamination {
  std::string name;
  std::int64_t substring_matched = 0;
  std::int64_t fuzzy_matched = 0;
};

struct DecontamReport {
  std::int64_t input = 0;
  std::int64_t kept = 0;
  std::int64_t dropped_substring = 0;
  std::int64_t dropped_fuzzy = 0;  // additional drops beyond the substring pass
  std::vector<SetContamination> per_set;
};

enum class Mode { Substring, Fuzzy, Both };

/// Substring pass, then (optionally) the MinHash pass on its survivors.
SplitResult decontaminate(const std::vector<QAPair>& train, const std::vector<EvalSet>& sets,
                          const DecontamConfig& cfg, Mode mode, DecontamReport* report);

nlohmann::ordered_json report_json(const DecontamReport& report, const DecontamConfig& cfg, Mode mode);

}  // namespace qamine::decontam
