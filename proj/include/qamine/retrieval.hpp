#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "qamine/encoder.hpp"

namespace qamine::retrieval {

using DocId = std::int64_t;

struct ScoredDoc {
  DocId doc_id = 0;
  double score = 0;

  bool operator==(const ScoredDoc&) const = default;
};

/// Descending score, ascending doc id on ties.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

/// Bounded min-heap selection of the best k, returned in rank order.
std::vector<ScoredDoc> top_k(std::span<const ScoredDoc> scored, std::size_t k);

struct Corpus {
  std::vector<std::pair<DocId, std::string>> docs;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  std::size_t max_tokens = 256;

  bool operator==(const Bm25Params&) const = default;
};

struct Posting {
  std::uint32_t doc = 0;  // position in doc_ids()
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

class Bm25Index {
 public:
  const Bm25Params& params() const { return params_; }
  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_len_; }
  const std::vector<DocId>& doc_ids() const { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }

  /// (doc_id, tf) for a term, ascending doc_id; empty if the term is unseen.
  std::vector<std::pair<DocId, std::uint32_t>> postings(std::string_view term) const;
  std::size_t document_frequency(std::string_view term) const;

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(std::size_t df) const;

  std::string serialize() const;
  static Bm25Index deserialize(std::string_view bytes);

  friend Bm25Index build_bm25_index(const Corpus& corpus, const Bm25Params& params);
  friend std::vector<ScoredDoc> bm25_search(const Bm25Index& index, std::string_view query, std::size_t k);

  bool operator==(const Bm25Index&) const = default;

 private:
  Bm25Params params_;
  std::vector<DocId> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_len_ = 0;
  std::map<std::string, std::vector<Posting>, std::less<>> postings_;
};

/// Documents are tokenized with the shared tokenizer (and its token cap).
/// Throws ConfigError on an empty corpus or a repeated doc id.
Bm25Index build_bm25_index(const Corpus& corpus, const Bm25Params& params = {});

/// Okapi BM25 over the unique query terms; only documents containing at least
/// one query term are ranked.
std::vector<ScoredDoc> bm25_search(const Bm25Index& index, std::string_view query, std::size_t k);

class DenseIndex {
 public:
  std::size_t size() const { return doc_ids_.size(); }
  std::uint32_t embed_dim() const { return embed_dim_; }
  const std::string& model_fingerprint() const { return fingerprint_; }
  const std::vector<DocId>& doc_ids() const { return doc_ids_; }
  std::span<const float> embedding(std::size_t i) const {
    return {embeddings_.data() + i * embed_dim_, embed_dim_};
  }
  /// Documents that could not be embedded, with the reason.
  const std::vector<std::pair<DocId, std::string>>& skipped() const { return skipped_; }

  std::string serialize() const;
  static DenseIndex deserialize(std::string_view bytes);

  friend DenseIndex build_dense_index(const encoder::EncoderModel& model, const Corpus& corpus);

  bool operator==(const DenseIndex&) const = default;

 private:
  std::uint32_t embed_dim_ = 0;
  std::string fingerprint_;
  std::vector<DocId> doc_ids_;
  std::vector<float> embeddings_;
  std::vector<std::pair<DocId, std::string>> skipped_;
};

DenseIndex build_dense_index(const encoder::EncoderModel& model, const Corpus& corpus);

/// Exact scan: dot(query embedding, doc embedding) for every document.
std::vector<ScoredDoc> dense_search_embedding(const DenseIndex& index, std::span<const double> query, std::size_t k);

/// Throws ConfigError if the model is not the one the index was built with.
/// A query without tokens returns no results.
std::vector<ScoredDoc> dense_search(const DenseIndex& index, const encoder::EncoderModel& model,
                                    std::string_view query, std::size_t k);

using AnyIndex = std::variant<Bm25Index, DenseIndex>;

void save_index(const std::filesystem::path& path, const AnyIndex& index);
AnyIndex load_index(const std::filesystem::path& path);

struct RunEntry {
  std::string query_id;
  std::vector<ScoredDoc> results;
};

/// Tab-separated run file: comment lines starting with '#' carry the header
/// metadata, then one "query_id<TAB>rank<TAB>doc_id<TAB>score" line per result.
std::string format_run(const std::vector<RunEntry>& run, const std::vector<std::pair<std::string, std::string>>& header);

}  // namespace qamine::retrieval
