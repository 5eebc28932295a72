#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "qamine/common.hpp"

namespace qamine::corpus {

/// The eleven language subsets, in tag spelling.
const std::vector<std::string>& default_languages();

struct FilterConfig {
  std::int64_t min_chars = 20;
  std::int64_t max_chars = 4096;
  std::vector<std::string> languages = default_languages();

  /// Throws ConfigError unless 0 < min_chars < max_chars.
  void validate() const;
};

enum class DropReason { None, TooShort, TooLong };

struct FilterDecision {
  bool keep = true;
  DropReason reason = DropReason::None;
};

const char* to_string(DropReason reason);

/// Drops a pair when its description or answer has fewer than min_chars or
/// more than max_chars Unicode scalars. The title is not length-checked.
FilterDecision length_filter(const QAPair& pair, const FilterConfig& cfg);

struct PartitionResult {
  std::map<std::string, std::vector<QAPair>> subsets;
  std::int64_t discarded_no_language = 0;
  std::int64_t multi_language_pairs = 0;
};

/// A pair lands in every subset whose language appears among its tags.
PartitionResult partition_by_language(const std::vector<QAPair>& pairs, const FilterConfig& cfg);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct SplitCorpus {
  std::string language;
  std::vector<QAPair> train;
  std::vector<QAPair> valid;
  std::vector<QAPair> test;
};

/// Sorts by (creation_date, question_id) and cuts floor(train*n), then
/// floor(valid*n), with the remainder going to test. n < 3 is an error unless
/// `allow_small` is set.
SplitCorpus chronological_split(std::vector<QAPair> pairs, const std::string& language,
                                SplitRatios ratios = {}, bool allow_small = false);

/// Power-of-two word-length buckets: bucket k counts lengths in (2^(k-1), 2^k],
/// bucket 0 counts lengths 0 and 1, and the last bucket counts lengths > 4096.
inline constexpr std::size_t kHistogramBuckets = 14;
using LengthHistogram = std::array<std::int64_t, kHistogramBuckets>;

std::size_t histogram_bucket(std::size_t words);
std::string histogram_label(std::size_t bucket);

struct LanguageStats {
  std::int64_t count = 0;
  LengthHistogram question_words{};  // question + description
  LengthHistogram answer_words{};
};

std::map<std::string, LanguageStats> compute_stats(const std::map<std::string, std::vector<QAPair>>& subsets);

nlohmann::ordered_json stats_json(const std::map<std::string, LanguageStats>& stats);

}  // namespace qamine::corpus
