#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include "qamine/cli.hpp"
#include "qamine/ingest.hpp"
#include "qamine/text.hpp"

#ifndef QAMINE_TOY_DIR
#error "QAMINE_TOY_DIR must point at data/toy"
#endif

namespace qamine::testing {

namespace fs = std::filesystem;

fs::path toy_dir() { return QAMINE_TOY_DIR; }

fs::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() /
                 ("qamine_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<QAPair> toy_pairs() {
  std::ifstream in(toy_dir() / "Posts.xml", std::ios::binary);
  return ingest::assemble_qa_pairs(ingest::parse_posts(in));
}

std::vector<std::string> toy_eval_queries() {
  std::ifstream in(toy_dir() / "eval_queries.jsonl");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line).at("query").get<std::string>());
  }
  return out;
}

QAPair make_pair(std::int64_t id, std::string description, std::string answer, std::vector<std::string> tags,
                 std::int64_t day) {
  QAPair p;
  p.question_id = id;
  p.question = "question " + std::to_string(id);
  p.description = std::move(description);
  p.answer = std::move(answer);
  p.tags = std::move(tags);
  p.creation_date = Timestamp(day * 86'400'000);
  return p;
}

NaiveMetrics naive_metrics(const eval::Run& run, const eval::Qrels& qrels, std::size_t k) {
  NaiveMetrics m;
  if (qrels.relevant.empty()) return m;
  double mrr = 0, recall = 0, map = 0;
  for (const auto& [qid, rel] : qrels.relevant) {
    std::vector<std::string> ranking;
    if (auto it = run.ranked.find(qid); it != run.ranked.end()) ranking = it->second;

    double rr = 0;
    for (std::size_t pos = 1; pos <= ranking.size() && pos <= k; ++pos) {
      if (rel.count(ranking[pos - 1])) {
        rr = 1.0 / static_cast<double>(pos);
        break;
      }
    }
    mrr += rr;

    std::size_t found = 0;
    for (const auto& doc : rel) {
      auto where = std::find(ranking.begin(), ranking.end(), doc);
      if (where != ranking.end() && static_cast<std::size_t>(where - ranking.begin()) < k) ++found;
    }
    recall += static_cast<double>(found) / static_cast<double>(rel.size());

    // AP: precision at every rank holding a relevant doc.
    double ap = 0;
    for (std::size_t pos = 1; pos <= ranking.size(); ++pos) {
      if (!rel.count(ranking[pos - 1])) continue;
      std::size_t relevant_so_far = 0;
      for (std::size_t j = 1; j <= pos; ++j) relevant_so_far += rel.count(ranking[j - 1]);
      ap += static_cast<double>(relevant_so_far) / static_cast<double>(pos);
    }
    map += ap / static_cast<double>(rel.size());
  }
  double n = static_cast<double>(qrels.relevant.size());
  return {mrr / n, recall / n, map / n};
}

std::pair<eval::Run, eval::Qrels> random_instance(Rng& rng, std::size_t max_docs) {
  eval::Run run;
  eval::Qrels qrels;
  std::size_t queries = 1 + rng.below(8);
  std::size_t universe = 5 + rng.below(max_docs);
  for (std::size_t q = 0; q < queries; ++q) {
    std::string qid = "q" + std::to_string(q);
    std::size_t nrel = 1 + rng.below(4);
    for (std::size_t r = 0; r < nrel; ++r) qrels.relevant[qid].insert("d" + std::to_string(rng.below(universe)));
    if (rng.below(5) == 0) continue;  // judged but not retrieved
    std::vector<std::size_t> docs(universe);
    std::iota(docs.begin(), docs.end(), 0);
    for (std::size_t i = docs.size(); i > 1; --i) std::swap(docs[i - 1], docs[rng.below(i)]);
    docs.resize(1 + rng.below(universe));
    auto& ranking = run.ranked[qid];
    for (auto d : docs) ranking.push_back("d" + std::to_string(d));
  }
  return {run, qrels};
}

encoder::FeatureVector random_features(Rng& rng, std::uint32_t dim, std::size_t nnz) {
  std::set<std::uint32_t> idx;
  while (idx.size() < std::min<std::size_t>(nnz, dim)) idx.insert(static_cast<std::uint32_t>(rng.below(dim)));
  encoder::FeatureVector f;
  f.dim = dim;
  double sq = 0;
  for (auto i : idx) {
    f.indices.push_back(i);
    f.values.push_back(rng.uniform(0.1, 1.0));
    sq += f.values.back() * f.values.back();
  }
  for (auto& v : f.values) v /= std::sqrt(sq);
  return f;
}

encoder::EncoderModel random_model(Rng& rng, std::uint32_t dim, std::uint32_t embed, double temperature) {
  std::vector<double> w(static_cast<std::size_t>(dim) * embed);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return encoder::EncoderModel(dim, embed, temperature, 0, std::move(w));
}

encoder::TrainingBatch random_batch(Rng& rng, std::uint32_t dim, std::size_t n, std::size_t nnz,
                                    std::size_t extra) {
  encoder::TrainingBatch batch;
  batch.language = "x";
  for (std::size_t i = 0; i < n; ++i) {
    batch.queries.push_back(random_features(rng, dim, nnz));
    batch.documents.push_back(random_features(rng, dim, nnz));
  }
  for (std::size_t i = 0; i < extra; ++i) batch.extra_negatives.push_back(random_features(rng, dim, nnz));
  return batch;
}

std::vector<double> numeric_gradient(const encoder::EncoderModel& model, const encoder::TrainingBatch& batch,
                                     const encoder::LossOptions& opts, double h) {
  encoder::EncoderModel probe = model;
  auto w = probe.mutable_projection();
  std::vector<double> grad(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + h;
    double up = encoder::info_nce_loss(probe, batch, opts).loss;
    w[i] = orig - h;
    double down = encoder::info_nce_loss(probe, batch, opts).loss;
    w[i] = orig;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

double gradient_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale == 0 ? diff : diff / scale;
}

namespace {

// Small on purpose: with a large filler vocabulary the model can tell pairs
// apart by memorizing filler combinations instead of learning the markers.
const std::vector<std::string>& noise_vocabulary() {
  static const std::vector<std::string> words{"array", "buffer", "value", "return",
                                              "string", "number", "object", "method"};
  return words;
}

// Seven random letters, fixed per index, so markers share almost no trigrams.
std::string marker(std::size_t i) {
  Rng rng(1000 + i);
  std::string m;
  for (int k = 0; k < 7; ++k) m += static_cast<char>('a' + rng.below(26));
  return m;
}

std::string noisy_text(Rng& rng, const std::string& mark, std::size_t words) {
  const auto& vocab = noise_vocabulary();
  std::string out;
  std::size_t at = rng.below(words + 1);
  for (std::size_t w = 0; w <= words; ++w) {
    if (!out.empty()) out += ' ';
    out += (w == at && !mark.empty()) ? mark : vocab[rng.below(vocab.size())];
  }
  return out;
}

}  // namespace

std::vector<QAPair> marker_corpus(std::uint64_t noise_seed, std::size_t pairs) {
  Rng rng(noise_seed);
  std::vector<QAPair> out;
  for (std::size_t i = 0; i < pairs; ++i) {
    QAPair p;
    p.question_id = static_cast<std::int64_t>(i);
    p.question = noisy_text(rng, marker(i), 3);
    p.description = noisy_text(rng, "", 5);
    p.answer = noisy_text(rng, marker(i), 8);
    p.tags = {"synthetic"};
    out.push_back(std::move(p));
  }
  return out;
}

double dense_mrr(const encoder::EncoderModel& model, const std::vector<QAPair>& pairs, std::size_t k) {
  std::vector<std::vector<double>> docs;
  for (const auto& p : pairs) docs.push_back(encoder::encode(model, encoder::featurize(p.answer, model.dim())));
  double total = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto q = encoder::encode(model, encoder::featurize(query_text(pairs[i]), model.dim()));
    double own = encoder::dot(q, docs[i]);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < docs.size(); ++j) {
      if (j == i) continue;
      double s = encoder::dot(q, docs[j]);
      if (s > own || (s == own && j < i)) ++rank;
    }
    if (rank <= k) total += 1.0 / static_cast<double>(rank);
  }
  return total / static_cast<double>(pairs.size());
}

EfficacyResult run_training_efficacy(std::uint64_t seed) {
  constexpr std::uint32_t kDim = 4096;
  constexpr std::uint32_t kEmbed = 32;
  auto train_pairs = marker_corpus(seed + 1);
  auto held_out = marker_corpus(seed + 1000);

  encoder::TrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 16;
  cfg.seed = seed;
  auto model = encoder::EncoderModel::initialize(kDim, kEmbed, encoder::kDefaultTemperature, seed);

  EfficacyResult r;
  r.untrained_mrr = dense_mrr(model, held_out, 10);
  auto result = encoder::train(model, {encoder::make_subset("synthetic", train_pairs, kDim)}, cfg);
  r.trained_mrr = dense_mrr(result.model, held_out, 10);
  r.first_loss = result.trace.front().loss;
  double tail = 0;
  for (std::size_t i = result.trace.size() - 20; i < result.trace.size(); ++i) tail += result.trace[i].loss;
  r.final_loss = tail / 20;
  r.log_batch = std::log(static_cast<double>(cfg.batch_size));
  return r;
}

namespace {

int run(std::vector<std::string> args, std::string* log) {
  std::ostringstream out, err;
  int rc = cli::run_command(args, out, err);
  if (log) {
    std::string line;
    for (const auto& a : args) line += a + " ";
    *log += "$ qamine " + line + "\n" + out.str() + err.str();
  }
  return rc;
}

const std::vector<std::string> kToyLanguages{"c", "python", "java"};

}  // namespace

int run_toy_pipeline(const fs::path& dir, std::uint64_t seed, std::string* log) {
  const std::string d = dir.string() + "/";
  const std::string langs = "c,python,java";
  const std::string s = std::to_string(seed);
  std::vector<std::vector<std::string>> steps = {
      {"ingest", "--posts", (toy_dir() / "Posts.xml").string(), "--out", d + "pairs.jsonl"},
      {"filter", "--in", d + "pairs.jsonl", "--out-dir", d + "filtered", "--languages", langs},
      {"split", "--in-dir", d + "filtered", "--out-dir", d + "split", "--languages", langs},
      {"stats", "--in-dir", d + "filtered", "--languages", langs, "--out", d + "stats.json"},
  };
  for (const auto& lang : kToyLanguages) {
    steps.push_back({"decontaminate", "--in", d + "split/" + lang + ".train.jsonl", "--out",
                     d + "clean/" + lang + ".train.jsonl", "--eval",
                     "toy=" + (toy_dir() / "eval_queries.jsonl").string(), "--seed", s});
  }
  steps.push_back({"train", "--data-dir", d + "clean", "--languages", langs, "--out", d + "model.bin", "--steps",
                   "40", "--batch-size", "2", "--dim", "4096", "--embed-dim", "32", "--seed", s});
  std::vector<std::string> index_bm25{"index", "--kind", "bm25", "--out", d + "bm25.idx"};
  std::vector<std::string> index_dense{"index", "--kind", "dense", "--model", d + "model.bin", "--out",
                                       d + "dense.idx"};
  std::vector<std::string> queries;
  for (const auto& lang : kToyLanguages) {
    for (const char* part : {"train", "valid", "test"}) {
      for (auto* cmd : {&index_bm25, &index_dense}) {
        cmd->push_back("--corpus");
        cmd->push_back(d + "split/" + lang + "." + part + ".jsonl");
      }
    }
    queries.push_back("--queries");
    queries.push_back(d + "split/" + lang + ".test.jsonl");
  }
  steps.push_back(index_bm25);
  steps.push_back(index_dense);
  std::vector<std::string> search_bm25{"search", "--index", d + "bm25.idx", "--k", "10", "--out", d + "bm25.run",
                                       "--qrels-out", d + "qrels.tsv"};
  std::vector<std::string> search_dense{"search", "--index", d + "dense.idx", "--model", d + "model.bin", "--k",
                                        "10", "--out", d + "dense.run"};
  search_bm25.insert(search_bm25.end(), queries.begin(), queries.end());
  search_dense.insert(search_dense.end(), queries.begin(), queries.end());
  steps.push_back(search_bm25);
  steps.push_back(search_dense);
  steps.push_back({"eval", "--run", d + "bm25.run", "--qrels", d + "qrels.tsv", "--k", "1,10", "--out",
                   d + "bm25_eval.json", "--label", "BM25"});
  steps.push_back({"eval", "--run", d + "dense.run", "--qrels", d + "qrels.tsv", "--k", "1,10", "--out",
                   d + "dense_eval.json", "--label", "dense"});
  for (auto& step : steps) {
    if (int rc = run(step, log); rc != 0) return rc;
  }
  return 0;
}

std::vector<std::string> toy_pipeline_artifacts() {
  std::vector<std::string> files{"pairs.jsonl",      "pairs.jsonl.diagnostics.json",
                                 "filtered/filter_report.json", "split/split_report.json",
                                 "stats.json",       "model.bin",
                                 "model.bin.loss.csv", "model.bin.sampler.json",
                                 "bm25.idx",         "dense.idx",
                                 "bm25.run",         "dense.run",
                                 "qrels.tsv",        "bm25_eval.json",
                                 "bm25_eval.json.txt", "dense_eval.json",
                                 "dense_eval.json.txt"};
  for (const auto& lang : kToyLanguages) {
    files.push_back("filtered/" + lang + ".jsonl");
    for (const char* part : {"train", "valid", "test"}) files.push_back("split/" + lang + "." + part + ".jsonl");
    files.push_back("clean/" + lang + ".train.jsonl");
    files.push_back("clean/" + lang + ".train.jsonl.contamination.json");
  }
  return files;
}

}  // namespace qamine::testing
