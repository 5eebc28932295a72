#include "qamine/decontam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <unordered_map>

#include "qamine/text.hpp"

namespace qamine::decontam {

void DecontamConfig::validate() const {
  if (num_permutations < 16) throw ConfigError("num_permutations must be >= 16");
  if (shingle_width < 1) throw ConfigError("shingle_width must be >= 1");
  if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0)) {
    throw ConfigError("jaccard_threshold must lie in (0, 1]");
  }
}

std::string pair_match_text(const QAPair& pair) {
  return pair.question + "\n" + pair.description + "\n" + pair.answer;
}

// ---------------------------------------------------------------------------
// Aho-Corasick

QueryMatcher::QueryMatcher(const std::vector<std::string>& queries) {
  nodes_.emplace_back();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::string pattern = normalize_for_matching(queries[q]);
    if (pattern.empty()) {
      throw ConfigError("eval query #" + std::to_string(q) + " is empty after normalization");
    }
    std::int32_t state = 0;
    for (unsigned char c : pattern) {
      auto it = nodes_[state].next.find(c);
      if (it == nodes_[state].next.end()) {
        nodes_[state].next.emplace(c, static_cast<std::int32_t>(nodes_.size()));
        state = static_cast<std::int32_t>(nodes_.size());
        nodes_.emplace_back();
      } else {
        state = it->second;
      }
    }
    nodes_[state].patterns.push_back(q);
  }
  pattern_count_ = queries.size();

  // BFS to fill failure and output links.
  std::queue<std::int32_t> frontier;
  for (auto [c, child] : nodes_[0].next) {
    nodes_[child].fail = 0;
    frontier.push(child);
  }
  while (!frontier.empty()) {
    std::int32_t u = frontier.front();
    frontier.pop();
    for (auto [c, v] : nodes_[u].next) {
      std::int32_t f = nodes_[u].fail;
      while (f != 0 && !nodes_[f].next.contains(c)) f = nodes_[f].fail;
      auto it = nodes_[f].next.find(c);
      nodes_[v].fail = (it != nodes_[f].next.end() && it->second != v) ? it->second : 0;
      std::int32_t fv = nodes_[v].fail;
      nodes_[v].output_link = nodes_[fv].patterns.empty() ? nodes_[fv].output_link : fv;
      frontier.push(v);
    }
  }
}

std::int32_t QueryMatcher::step(std::int32_t state, unsigned char c) const {
  while (true) {
    auto it = nodes_[state].next.find(c);
    if (it != nodes_[state].next.end()) return it->second;
    if (state == 0) return 0;
    state = nodes_[state].fail;
  }
}

template <typename Visit>
void QueryMatcher::scan(std::string_view normalized, Visit&& visit) const {
  std::int32_t state = 0;
  for (unsigned char c : normalized) {
    state = step(state, c);
    for (std::int32_t s = nodes_[state].patterns.empty() ? nodes_[state].output_link : state; s >= 0;
         s = nodes_[s].output_link) {
      for (std::size_t p : nodes_[s].patterns) {
        if (!visit(p)) return;
      }
    }
  }
}

bool QueryMatcher::matches(std::string_view text) const {
  bool found = false;
  scan(normalize_for_matching(text), [&](std::size_t) {
    found = true;
    return false;
  });
  return found;
}

std::vector<std::size_t> QueryMatcher::find_all(std::string_view text) const {
  std::set<std::size_t> hits;
  scan(normalize_for_matching(text), [&](std::size_t p) {
    hits.insert(p);
    return true;
  });
  return {hits.begin(), hits.end()};
}

SplitResult substring_decontaminate(const std::vector<QAPair>& train, const QueryMatcher& matcher) {
  SplitResult result;
  for (const auto& pair : train) {
    (matcher.matches(pair_match_text(pair)) ? result.dropped : result.kept).push_back(pair);
  }
  return result;
}

SplitResult substring_decontaminate(const std::vector<QAPair>& train, const std::vector<std::string>& queries) {
  return substring_decontaminate(train, QueryMatcher(queries));
}

// ---------------------------------------------------------------------------
// MinHash

namespace {

constexpr std::uint64_t kMersenne61 = (1ULL << 61) - 1;

std::uint64_t mod_mersenne61(unsigned __int128 x) {
  std::uint64_t lo = static_cast<std::uint64_t>(x & kMersenne61);
  std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
  std::uint64_t r = lo + hi;
  // Operands are below 2^122, so two folds bring the value under 2^61 + 1.
  r = (r & kMersenne61) + (r >> 61);
  if (r >= kMersenne61) r -= kMersenne61;
  return r;
}

std::uint64_t shingle_hash(std::string_view s) {
  std::uint64_t state = fnv1a64(s);
  return splitmix64(state) % kMersenne61;
}

}  // namespace

std::vector<std::string> shingles(std::string_view text, int width) {
  std::string normalized = normalize_for_matching(text);
  auto chars = utf8_chars(normalized);
  std::vector<std::string> out;
  if (chars.empty()) return out;
  auto w = static_cast<std::size_t>(width);
  if (chars.size() < w) {
    out.push_back(normalized);
    return out;
  }
  out.reserve(chars.size() - w + 1);
  for (std::size_t i = 0; i + w <= chars.size(); ++i) {
    const char* begin = chars[i].data();
    const char* end = chars[i + w - 1].data() + chars[i + w - 1].size();
    out.emplace_back(begin, end);
  }
  return out;
}

MinHasher::MinHasher(const DecontamConfig& cfg) : shingle_width_(cfg.shingle_width), seed_(cfg.seed) {
  cfg.validate();
  std::uint64_t state = cfg.seed;
  a_.resize(static_cast<std::size_t>(cfg.num_permutations));
  b_.resize(a_.size());
  for (std::size_t i = 0; i < a_.size(); ++i) {
    a_[i] = 1 + splitmix64(state) % (kMersenne61 - 1);
    b_[i] = splitmix64(state) % kMersenne61;
  }
}

MinHashSignature MinHasher::signature(std::string_view text) const {
  auto sh = shingles(text, shingle_width_);
  if (sh.empty()) throw ConfigError("cannot build a MinHash signature of empty text");
  std::vector<std::uint64_t> base;
  base.reserve(sh.size());
  for (const auto& s : sh) base.push_back(shingle_hash(s));
  std::sort(base.begin(), base.end());
  base.erase(std::unique(base.begin(), base.end()), base.end());

  MinHashSignature sig;
  sig.shingle_width = shingle_width_;
  sig.seed = seed_;
  sig.values.assign(a_.size(), std::numeric_limits<std::uint64_t>::max());
  for (std::uint64_t x : base) {
    for (std::size_t i = 0; i < a_.size(); ++i) {
      auto h = mod_mersenne61(static_cast<unsigned __int128>(a_[i]) * x + b_[i]);
      sig.values[i] = std::min(sig.values[i], h);
    }
  }
  return sig;
}

MinHashSignature minhash_signature(std::string_view text, const DecontamConfig& cfg) {
  return MinHasher(cfg).signature(text);
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.values.size() != b.values.size() || a.seed != b.seed || a.shingle_width != b.shingle_width) {
    throw ConfigError("MinHash signatures were built with different configurations");
  }
  if (a.values.empty()) throw ConfigError("empty MinHash signature");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) same += a.values[i] == b.values[i];
  return static_cast<double>(same) / static_cast<double>(a.values.size());
}

double exact_jaccard(std::string_view a, std::string_view b, int width) {
  auto sa = shingles(a, width);
  auto sb = shingles(b, width);
  std::set<std::string> set_a(sa.begin(), sa.end());
  std::set<std::string> set_b(sb.begin(), sb.end());
  if (set_a.empty() && set_b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& s : set_a) inter += set_b.contains(s);
  return static_cast<double>(inter) / static_cast<double>(set_a.size() + set_b.size() - inter);
}

BandLayout conservative_bands(int num_permutations, double threshold) {
  auto max_mismatch = static_cast<int>(std::floor((1.0 - threshold) * num_permutations + 1e-9));
  int bands = max_mismatch + 1;
  int rows = num_permutations / bands;
  if (rows == 0) return {0, 0};
  return {bands, rows};
}

namespace {

std::uint64_t band_key(const MinHashSignature& sig, int band, int rows) {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ static_cast<std::uint64_t>(band);
  for (int r = 0; r < rows; ++r) {
    std::uint64_t v = h ^ sig.values[static_cast<std::size_t>(band * rows + r)];
    h = splitmix64(v);
  }
  return h;
}

class FuzzyIndex {
 public:
  FuzzyIndex(const std::vector<std::string>& queries, const DecontamConfig& cfg)
      : hasher_(cfg), threshold_(cfg.jaccard_threshold) {
    if (cfg.use_banding) layout_ = conservative_bands(cfg.num_permutations, cfg.jaccard_threshold);
    sigs_.reserve(queries.size());
    for (const auto& q : queries) sigs_.push_back(hasher_.signature(q));
    if (layout_.rows > 0) {
      buckets_.resize(static_cast<std::size_t>(layout_.bands));
      for (std::size_t q = 0; q < sigs_.size(); ++q) {
        for (int band = 0; band < layout_.bands; ++band) {
          buckets_[static_cast<std::size_t>(band)][band_key(sigs_[q], band, layout_.rows)].push_back(q);
        }
      }
    }
  }

  bool matches(std::string_view text) const {
    if (sigs_.empty()) return false;
    auto sig = hasher_.signature(text);
    if (layout_.rows == 0) {
      for (const auto& q : sigs_) {
        if (estimate_jaccard(sig, q) >= threshold_) return true;
      }
      return false;
    }
    for (int band = 0; band < layout_.bands; ++band) {
      const auto& bucket = buckets_[static_cast<std::size_t>(band)];
      auto it = bucket.find(band_key(sig, band, layout_.rows));
      if (it == bucket.end()) continue;
      for (std::size_t q : it->second) {
        if (estimate_jaccard(sig, sigs_[q]) >= threshold_) return true;
      }
    }
    return false;
  }

 private:
  MinHasher hasher_;
  double threshold_;
  BandLayout layout_;
  std::vector<MinHashSignature> sigs_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> buckets_;
};

}  // namespace

SplitResult fuzzy_dedup(const std::vector<QAPair>& train, const std::vector<std::string>& queries,
                        const DecontamConfig& cfg) {
  FuzzyIndex index(queries, cfg);
  SplitResult result;
  for (const auto& pair : train) {
    (index.matches(pair_match_text(pair)) ? result.dropped : result.kept).push_back(pair);
  }
  return result;
}

SplitResult decontaminate(const std::vector<QAPair>& train, const std::vector<EvalSet>& sets,
                          const DecontamConfig& cfg, Mode mode, DecontamReport* report) {
  cfg.validate();
  DecontamReport rep;
  rep.input = static_cast<std::int64_t>(train.size());
  for (const auto& s : sets) rep.per_set.push_back({s.name, 0, 0});

  std::vector<QueryMatcher> matchers;
  std::vector<FuzzyIndex> fuzzy;
  for (const auto& s : sets) {
    if (mode != Mode::Fuzzy) matchers.emplace_back(s.queries);
    if (mode != Mode::Substring) fuzzy.emplace_back(s.queries, cfg);
  }

  SplitResult result;
  for (const auto& pair : train) {
    std::string text = pair_match_text(pair);
    bool substring_hit = false;
    for (std::size_t i = 0; i < matchers.size(); ++i) {
      if (matchers[i].matches(text)) {
        substring_hit = true;
        ++rep.per_set[i].substring_matched;
      }
    }
    bool fuzzy_hit = false;
    if (!substring_hit) {
      for (std::size_t i = 0; i < fuzzy.size(); ++i) {
        if (fuzzy[i].matches(text)) {
          fuzzy_hit = true;
          ++rep.per_set[i].fuzzy_matched;
        }
      }
    }
    if (substring_hit) ++rep.dropped_substring;
    if (fuzzy_hit) ++rep.dropped_fuzzy;
    (substring_hit || fuzzy_hit ? result.dropped : result.kept).push_back(pair);
  }
  rep.kept = static_cast<std::int64_t>(result.kept.size());
  if (report) *report = std::move(rep);
  return result;
}

nlohmann::ordered_json report_json(const DecontamReport& report, const DecontamConfig& cfg, Mode mode) {
  auto fraction = [&](std::int64_t n) {
    return report.input == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(report.input);
  };
  nlohmann::ordered_json j;
  j["mode"] = mode == Mode::Substring ? "substring" : mode == Mode::Fuzzy ? "fuzzy" : "both";
  j["input"] = report.input;
  j["kept"] = report.kept;
  j["dropped_substring"] = report.dropped_substring;
  j["dropped_fuzzy"] = report.dropped_fuzzy;
  j["minhash"] = {{"num_permutations", cfg.num_permutations},
                  {"shingle_width", cfg.shingle_width},
                  {"jaccard_threshold", cfg.jaccard_threshold},
                  {"seed", cfg.seed}};
  auto sets = nlohmann::ordered_json::object();
  for (const auto& s : report.per_set) {
    std::int64_t matched = s.substring_matched + s.fuzzy_matched;
    sets[s.name] = {{"matched_count", matched},
                    {"matched_fraction", fraction(matched)},
                    {"substring_matched", s.substring_matched},
                    {"fuzzy_matched", s.fuzzy_matched}};
  }
  j["eval_sets"] = std::move(sets);
  return j;
}

}  // namespace qamine::decontam
