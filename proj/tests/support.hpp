#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance runner.
// Everything here is written independently of the library code it checks.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qamine/common.hpp"
#include "qamine/encoder.hpp"
#include "qamine/eval.hpp"
#include "qamine/random.hpp"

namespace qamine::testing {

std::filesystem::path toy_dir();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

/// The toy dump ingested in memory (all languages, before filtering).
std::vector<QAPair> toy_pairs();
std::vector<std::string> toy_eval_queries();

QAPair make_pair(std::int64_t id, std::string description, std::string answer,
                 std::vector<std::string> tags = {"c"}, std::int64_t day = 1);

// --- metrics -------------------------------------------------------------

struct NaiveMetrics {
  double mrr = 0;
  double recall = 0;
  double map = 0;
};

/// Direct definitional loops over (run, qrels).
NaiveMetrics naive_metrics(const eval::Run& run, const eval::Qrels& qrels, std::size_t k);

/// Random run and qrels over a small doc-id universe. Some qrels queries are
/// missing from the run; every run query is judged.
std::pair<eval::Run, eval::Qrels> random_instance(Rng& rng, std::size_t max_docs = 50);

// --- encoder -------------------------------------------------------------

encoder::FeatureVector random_features(Rng& rng, std::uint32_t dim, std::size_t nnz);
encoder::EncoderModel random_model(Rng& rng, std::uint32_t dim, std::uint32_t embed, double temperature);
encoder::TrainingBatch random_batch(Rng& rng, std::uint32_t dim, std::size_t n, std::size_t nnz,
                                    std::size_t extra = 0);

/// Central differences over every projection entry.
std::vector<double> numeric_gradient(const encoder::EncoderModel& model, const encoder::TrainingBatch& batch,
                                     const encoder::LossOptions& opts, double h);

/// max |a - n| / max(max|a|, max|n|): error relative to the gradient's scale.
double gradient_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// 64 query/answer pairs where query i and answer i share one marker word
/// and are otherwise filled with words from a common noise vocabulary.
/// `noise_seed` controls the filler so a held-out copy reuses the markers.
std::vector<QAPair> marker_corpus(std::uint64_t noise_seed, std::size_t pairs = 64);

/// MRR@k of each query retrieving its aligned answer among all answers.
double dense_mrr(const encoder::EncoderModel& model, const std::vector<QAPair>& pairs, std::size_t k);

struct EfficacyResult {
  double untrained_mrr = 0;
  double trained_mrr = 0;
  double first_loss = 0;
  double final_loss = 0;  // mean of the last 20 steps
  double log_batch = 0;
};

EfficacyResult run_training_efficacy(std::uint64_t seed);

// --- pipeline ------------------------------------------------------------

/// Runs every subcommand on the toy dump into `dir`. Returns the first
/// non-zero exit status (0 if all succeeded).
int run_toy_pipeline(const std::filesystem::path& dir, std::uint64_t seed, std::string* log = nullptr);

/// Primary artifacts of run_toy_pipeline (relative paths), excluding manifests.
std::vector<std::string> toy_pipeline_artifacts();

}  // namespace qamine::testing
