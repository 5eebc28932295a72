#include "qamine/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "qamine/io.hpp"
#include "qamine/text.hpp"

namespace qamine::retrieval {

std::vector<ScoredDoc> top_k(std::span<const ScoredDoc> scored, std::size_t k) {
  if (k == 0) return {};
  // The heap top is the worst kept candidate.
  auto worse_on_top = [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); };
  std::priority_queue<ScoredDoc, std::vector<ScoredDoc>, decltype(worse_on_top)> heap(worse_on_top);
  for (const auto& s : scored) {
    if (heap.size() < k) {
      heap.push(s);
    } else if (ranks_before(s, heap.top())) {
      heap.pop();
      heap.push(s);
    }
  }
  std::vector<ScoredDoc> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

// ---------------------------------------------------------------------------
// BM25

namespace {

constexpr char kBm25Magic[8] = {'Q', 'A', 'M', 'I', 'N', 'E', 'B', 'M'};
constexpr char kDenseMagic[8] = {'Q', 'A', 'M', 'I', 'N', 'E', 'D', 'N'};
constexpr std::uint32_t kIndexVersion = 1;

std::vector<std::pair<DocId, const std::string*>> sorted_docs(const Corpus& corpus) {
  if (corpus.docs.empty()) throw ConfigError("retrieval corpus is empty");
  std::vector<std::pair<DocId, const std::string*>> docs;
  docs.reserve(corpus.docs.size());
  for (const auto& [id, text] : corpus.docs) docs.emplace_back(id, &text);
  std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < docs.size(); ++i) {
    if (docs[i].first == docs[i - 1].first) {
      throw ConfigError("duplicate doc id " + std::to_string(docs[i].first) + " in retrieval corpus");
    }
  }
  return docs;
}

void read_magic(std::istream& in, const char (&magic)[8]) {
  char got[8];
  if (!in.read(got, 8) || !std::equal(got, got + 8, magic)) throw DataError("index file has the wrong magic");
  auto version = binio::get<std::uint32_t>(in);
  if (version != kIndexVersion) throw DataError("unsupported index version " + std::to_string(version));
}

}  // namespace

Bm25Index build_bm25_index(const Corpus& corpus, const Bm25Params& params) {
  if (params.k1 < 0 || params.b < 0 || params.b > 1) throw ConfigError("BM25 needs k1 >= 0 and b in [0, 1]");
  auto docs = sorted_docs(corpus);
  Bm25Index index;
  index.params_ = params;
  std::uint64_t total_len = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    auto tokens = tokenize(*docs[d].second, params.max_tokens);
    std::map<std::string, std::uint32_t> tf;
    for (auto& t : tokens) ++tf[std::move(t)];
    index.doc_ids_.push_back(docs[d].first);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total_len += tokens.size();
    for (auto& [term, count] : tf) {
      index.postings_[term].push_back({static_cast<std::uint32_t>(d), count});
    }
  }
  index.avg_len_ = static_cast<double>(total_len) / static_cast<double>(docs.size());
  return index;
}

std::vector<std::pair<DocId, std::uint32_t>> Bm25Index::postings(std::string_view term) const {
  std::vector<std::pair<DocId, std::uint32_t>> out;
  auto it = postings_.find(term);
  if (it == postings_.end()) return out;
  for (const auto& p : it->second) out.emplace_back(doc_ids_[p.doc], p.tf);
  return out;
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(std::size_t df) const {
  auto n = static_cast<double>(doc_count());
  auto d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

std::vector<ScoredDoc> bm25_search(const Bm25Index& index, std::string_view query, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  auto tokens = tokenize(query, index.params_.max_tokens);
  std::set<std::string> terms(tokens.begin(), tokens.end());
  std::unordered_map<std::uint32_t, double> acc;
  const double k1 = index.params_.k1;
  const double b = index.params_.b;
  const double avg = index.avg_len_ > 0 ? index.avg_len_ : 1.0;
  for (const auto& term : terms) {
    auto it = index.postings_.find(term);
    if (it == index.postings_.end()) continue;
    double idf = index.idf(it->second.size());
    for (const auto& p : it->second) {
      double tf = p.tf;
      double norm = k1 * (1.0 - b + b * index.doc_lengths_[p.doc] / avg);
      acc[p.doc] += idf * tf / (tf + norm);
    }
  }
  std::vector<ScoredDoc> scored;
  scored.reserve(acc.size());
  for (const auto& [doc, score] : acc) scored.push_back({index.doc_ids_[doc], score});
  return top_k(scored, k);
}

std::string Bm25Index::serialize() const {
  std::ostringstream out(std::ios::binary);
  out.write(kBm25Magic, 8);
  binio::put<std::uint32_t>(out, kIndexVersion);
  binio::put<double>(out, params_.k1);
  binio::put<double>(out, params_.b);
  binio::put<std::uint64_t>(out, params_.max_tokens);
  binio::put<std::uint64_t>(out, doc_ids_.size());
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    binio::put<std::int64_t>(out, doc_ids_[d]);
    binio::put<std::uint32_t>(out, doc_lengths_[d]);
  }
  binio::put<double>(out, avg_len_);
  binio::put<std::uint64_t>(out, postings_.size());
  for (const auto& [term, list] : postings_) {
    binio::put_string(out, term);
    binio::put<std::uint64_t>(out, list.size());
    for (const auto& p : list) {
      binio::put<std::uint32_t>(out, p.doc);
      binio::put<std::uint32_t>(out, p.tf);
    }
  }
  return std::move(out).str();
}

Bm25Index Bm25Index::deserialize(std::string_view bytes) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  read_magic(in, kBm25Magic);
  Bm25Index index;
  index.params_.k1 = binio::get<double>(in);
  index.params_.b = binio::get<double>(in);
  index.params_.max_tokens = binio::get<std::uint64_t>(in);
  auto n = binio::get<std::uint64_t>(in);
  for (std::uint64_t d = 0; d < n; ++d) {
    index.doc_ids_.push_back(binio::get<std::int64_t>(in));
    index.doc_lengths_.push_back(binio::get<std::uint32_t>(in));
  }
  index.avg_len_ = binio::get<double>(in);
  auto terms = binio::get<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < terms; ++t) {
    auto term = binio::get_string(in);
    auto count = binio::get<std::uint64_t>(in);
    std::vector<Posting> list;
    list.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Posting p;
      p.doc = binio::get<std::uint32_t>(in);
      p.tf = binio::get<std::uint32_t>(in);
      if (p.doc >= n) throw DataError("posting references unknown document");
      list.push_back(p);
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  return index;
}

// ---------------------------------------------------------------------------
// Dense

DenseIndex build_dense_index(const encoder::EncoderModel& model, const Corpus& corpus) {
  auto docs = sorted_docs(corpus);
  DenseIndex index;
  index.embed_dim_ = model.embed_dim();
  index.fingerprint_ = model.fingerprint();
  for (const auto& [id, text] : docs) {
    std::vector<double> e;
    try {
      e = encoder::encode(model, encoder::featurize(*text, model.dim()));
    } catch (const DataError& err) {
      index.skipped_.emplace_back(id, err.what());
      continue;
    }
    index.doc_ids_.push_back(id);
    for (double v : e) index.embeddings_.push_back(static_cast<float>(v));
  }
  return index;
}

std::vector<ScoredDoc> dense_search_embedding(const DenseIndex& index, std::span<const double> query, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (query.size() != index.embed_dim()) throw ConfigError("query embedding has the wrong dimension");
  std::vector<ScoredDoc> scored(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto e = index.embedding(i);
    double s = 0;
    for (std::size_t j = 0; j < e.size(); ++j) s += query[j] * static_cast<double>(e[j]);
    scored[i] = {index.doc_ids()[i], s};
  }
  return top_k(scored, k);
}

std::vector<ScoredDoc> dense_search(const DenseIndex& index, const encoder::EncoderModel& model,
                                    std::string_view query, std::size_t k) {
  if (model.fingerprint() != index.model_fingerprint()) {
    throw ConfigError("model fingerprint does not match the dense index");
  }
  std::vector<double> q;
  try {
    q = encoder::encode(model, encoder::featurize(query, model.dim()));
  } catch (const DataError&) {
    return {};
  }
  return dense_search_embedding(index, q, k);
}

std::string DenseIndex::serialize() const {
  std::ostringstream out(std::ios::binary);
  out.write(kDenseMagic, 8);
  binio::put<std::uint32_t>(out, kIndexVersion);
  binio::put<std::uint32_t>(out, embed_dim_);
  binio::put_string(out, fingerprint_);
  binio::put<std::uint64_t>(out, doc_ids_.size());
  for (auto id : doc_ids_) binio::put<std::int64_t>(out, id);
  for (float v : embeddings_) binio::put<float>(out, v);
  binio::put<std::uint64_t>(out, skipped_.size());
  for (const auto& [id, why] : skipped_) {
    binio::put<std::int64_t>(out, id);
    binio::put_string(out, why);
  }
  return std::move(out).str();
}

DenseIndex DenseIndex::deserialize(std::string_view bytes) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  read_magic(in, kDenseMagic);
  DenseIndex index;
  index.embed_dim_ = binio::get<std::uint32_t>(in);
  index.fingerprint_ = binio::get_string(in);
  auto n = binio::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) index.doc_ids_.push_back(binio::get<std::int64_t>(in));
  index.embeddings_.resize(n * index.embed_dim_);
  for (auto& v : index.embeddings_) v = binio::get<float>(in);
  auto skipped = binio::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < skipped; ++i) {
    auto id = binio::get<std::int64_t>(in);
    index.skipped_.emplace_back(id, binio::get_string(in));
  }
  return index;
}

void save_index(const std::filesystem::path& path, const AnyIndex& index) {
  write_file_atomic(path, std::visit([](const auto& idx) { return idx.serialize(); }, index));
}

AnyIndex load_index(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, kBm25Magic)) {
    return Bm25Index::deserialize(bytes);
  }
  if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, kDenseMagic)) {
    return DenseIndex::deserialize(bytes);
  }
  throw DataError("unrecognised index file: " + path.string());
}

std::string format_run(const std::vector<RunEntry>& run, const std::vector<std::pair<std::string, std::string>>& header) {
  std::string out;
  for (const auto& [key, value] : header) out += "# " + key + "=" + value + "\n";
  char buf[64];
  for (const auto& entry : run) {
    for (std::size_t r = 0; r < entry.results.size(); ++r) {
      std::snprintf(buf, sizeof(buf), "\t%zu\t%lld\t%.9f\n", r + 1,
                    static_cast<long long>(entry.results[r].doc_id), entry.results[r].score);
      out += entry.query_id;
      out += buf;
    }
  }
  return out;
}

}  // namespace qamine::retrieval
