#include "qamine/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "qamine/text.hpp"

namespace qamine::corpus {

const std::vector<std::string>& default_languages() {
  static const std::vector<std::string> kLanguages{
      "c", "c++", "java", "python", "ruby", "lisp", "javascript", "c#", "go", "rust", "php"};
  return kLanguages;
}

void FilterConfig::validate() const {
  if (!(0 < min_chars && min_chars < max_chars)) {
    throw ConfigError("length bounds must satisfy 0 < min_chars < max_chars (got " +
                      std::to_string(min_chars) + ", " + std::to_string(max_chars) + ")");
  }
  if (languages.empty()) throw ConfigError("language list is empty");
}

const char* to_string(DropReason reason) {
  switch (reason) {
    case DropReason::None: return "none";
    case DropReason::TooShort: return "too_short";
    case DropReason::TooLong: return "too_long";
  }
  return "unknown";
}

FilterDecision length_filter(const QAPair& pair, const FilterConfig& cfg) {
  for (const std::string* field : {&pair.description, &pair.answer}) {
    auto n = static_cast<std::int64_t>(utf8_length(*field));
    if (n < cfg.min_chars) return {false, DropReason::TooShort};
    if (n > cfg.max_chars) return {false, DropReason::TooLong};
  }
  return {};
}

PartitionResult partition_by_language(const std::vector<QAPair>& pairs, const FilterConfig& cfg) {
  PartitionResult result;
  for (const auto& lang : cfg.languages) result.subsets[lang];
  for (const auto& pair : pairs) {
    int matches = 0;
    for (const auto& lang : cfg.languages) {
      if (std::find(pair.tags.begin(), pair.tags.end(), lang) != pair.tags.end()) {
        result.subsets[lang].push_back(pair);
        ++matches;
      }
    }
    if (matches == 0) ++result.discarded_no_language;
    if (matches > 1) ++result.multi_language_pairs;
  }
  return result;
}

SplitCorpus chronological_split(std::vector<QAPair> pairs, const std::string& language,
                                SplitRatios ratios, bool allow_small) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  if (pairs.size() < 3 && !allow_small) {
    throw DataError("subset '" + language + "' has " + std::to_string(pairs.size()) +
                    " pairs; at least 3 are needed for a three-way split");
  }
  std::sort(pairs.begin(), pairs.end(), [](const QAPair& a, const QAPair& b) {
    if (a.creation_date != b.creation_date) return a.creation_date < b.creation_date;
    return a.question_id < b.question_id;
  });
  auto n = static_cast<double>(pairs.size());
  // The epsilon keeps exact products such as 0.8 * 10 from flooring to 7.
  auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * n + 1e-9));
  n_train = std::min(n_train, pairs.size());
  n_valid = std::min(n_valid, pairs.size() - n_train);

  SplitCorpus split;
  split.language = language;
  auto first = pairs.begin();
  split.train.assign(std::make_move_iterator(first), std::make_move_iterator(first + n_train));
  split.valid.assign(std::make_move_iterator(first + n_train),
                     std::make_move_iterator(first + n_train + n_valid));
  split.test.assign(std::make_move_iterator(first + n_train + n_valid), std::make_move_iterator(pairs.end()));
  return split;
}

std::size_t histogram_bucket(std::size_t words) {
  if (words <= 1) return 0;
  std::size_t bucket = 1;
  std::size_t upper = 2;
  while (words > upper && bucket < kHistogramBuckets - 1) {
    upper *= 2;
    ++bucket;
  }
  return bucket;
}

std::string histogram_label(std::size_t bucket) {
  if (bucket == kHistogramBuckets - 1) return ">4096";
  return "<=" + std::to_string(std::size_t{1} << bucket);
}

std::map<std::string, LanguageStats> compute_stats(const std::map<std::string, std::vector<QAPair>>& subsets) {
  std::map<std::string, LanguageStats> stats;
  for (const auto& [lang, pairs] : subsets) {
    auto& s = stats[lang];
    s.count = static_cast<std::int64_t>(pairs.size());
    for (const auto& p : pairs) {
      ++s.question_words[histogram_bucket(word_count(query_text(p)))];
      ++s.answer_words[histogram_bucket(word_count(p.answer))];
    }
  }
  return stats;
}

namespace {

nlohmann::ordered_json histogram_json(const LengthHistogram& h) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t b = 0; b < h.size(); ++b) {
    if (h[b] > 0) j[histogram_label(b)] = h[b];
  }
  return j;
}

}  // namespace

nlohmann::ordered_json stats_json(const std::map<std::string, LanguageStats>& stats) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [lang, s] : stats) {
    j[lang] = {{"count", s.count},
               {"question_words", histogram_json(s.question_words)},
               {"answer_words", histogram_json(s.answer_words)}};
  }
  return j;
}

}  // namespace qamine::corpus
