#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qamine/common.hpp"
#include "qamine/sampler.hpp"

namespace qamine::encoder {

inline constexpr std::uint32_t kDefaultDim = 1u << 18;
inline constexpr std::uint32_t kDefaultEmbedDim = 128;
inline constexpr double kDefaultTemperature = 0.01;
/// Bumped whenever featurize() output changes for some input.
inline constexpr std::uint32_t kFeaturizerVersion = 1;

/// Sparse, L2-normalized hashed term-frequency vector.
struct FeatureVector {
  std::vector<std::uint32_t> indices;  // strictly increasing, < dim
  std::vector<double> values;
  std::uint32_t dim = 0;

  bool operator==(const FeatureVector&) const = default;
};

/// Token unigrams plus byte trigrams of each token, hashed into [0, dim),
/// counted, then L2-normalized. Uses the shared tokenizer and its 256-token cap.
/// Throws DataError when the text has no tokens.
FeatureVector featurize(std::string_view text, std::uint32_t dim = kDefaultDim);

/// Linear projection (dim x embed_dim, row-major) followed by L2 normalization.
/// The sum over feature rows plays the pooling role; normalization makes the
/// dot product of two encodings their cosine similarity.
class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(std::uint32_t dim, std::uint32_t embed_dim, double temperature, std::uint64_t seed,
               std::vector<double> projection);

  /// Entries uniform in [-1/sqrt(dim), 1/sqrt(dim)) drawn from `seed`.
  static EncoderModel initialize(std::uint32_t dim, std::uint32_t embed_dim,
                                 double temperature = kDefaultTemperature, std::uint64_t seed = 0);

  std::uint32_t dim() const { return dim_; }
  std::uint32_t embed_dim() const { return embed_dim_; }
  double temperature() const { return temperature_; }
  std::uint64_t seed() const { return seed_; }

  std::span<const double> projection() const { return projection_; }
  std::span<const double> row(std::uint32_t r) const {
    return {projection_.data() + static_cast<std::size_t>(r) * embed_dim_, embed_dim_};
  }
  /// Mutable access; invalidates the cached fingerprint.
  std::span<double> mutable_projection() {
    fingerprint_.reset();
    return projection_;
  }

  /// SHA-256 of the checkpoint serialization (cached).
  const std::string& fingerprint() const;

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static EncoderModel load(const std::filesystem::path& path);
  static EncoderModel deserialize(std::string_view bytes);

 private:
  std::uint32_t dim_ = 0;
  std::uint32_t embed_dim_ = 0;
  double temperature_ = kDefaultTemperature;
  std::uint64_t seed_ = 0;
  std::vector<double> projection_;
  mutable std::optional<std::string> fingerprint_;
};

/// Projected, un-normalized embedding.
std::vector<double> project(const EncoderModel& model, const FeatureVector& f);

/// Unit-norm embedding. Throws DataError if the projection norm is < 1e-12.
std::vector<double> encode(const EncoderModel& model, const FeatureVector& f);

double dot(std::span<const double> a, std::span<const double> b);

struct TrainingBatch {
  std::vector<FeatureVector> queries;    // question + "\n" + description
  std::vector<FeatureVector> documents;  // aligned answers; document i is query i's positive
  std::vector<FeatureVector> extra_negatives;  // shared by every query; empty by default
  std::string language;

  void validate() const;
};

struct LossOptions {
  /// Adds the document->query direction and averages the two directions.
  bool symmetric = false;
};

struct LossResult {
  double loss = 0;
  std::vector<double> per_pair;
};

/// InfoNCE over a similarity matrix: rows are queries, columns candidates,
/// column i the positive of row i. Log-sum-exp uses max subtraction.
LossResult info_nce_from_similarities(std::span<const double> sims, std::size_t rows, std::size_t cols,
                                      double temperature);

LossResult info_nce_loss(const EncoderModel& model, const TrainingBatch& batch, const LossOptions& opts = {});

/// Gradient of the mean loss w.r.t. the projection, restricted to the rows
/// touched by the batch features. Rows are sorted ascending.
struct SparseGradient {
  std::uint32_t embed_dim = 0;
  std::vector<std::uint32_t> rows;
  std::vector<double> values;  // rows.size() x embed_dim

  std::vector<double> to_dense(std::uint32_t dim) const;
};

SparseGradient loss_gradient(const EncoderModel& model, const TrainingBatch& batch, const LossOptions& opts = {});

/// Loss and gradient from one forward pass.
std::pair<LossResult, SparseGradient> loss_and_gradient(const EncoderModel& model, const TrainingBatch& batch,
                                                        const LossOptions& opts = {});

/// W <- W - lr * grad on the touched rows.
void apply_update(EncoderModel& model, const SparseGradient& grad, double lr);

struct LanguageSubset {
  std::string name;
  std::vector<FeatureVector> queries;
  std::vector<FeatureVector> documents;
};

/// Featurizes pairs (query text, answer) into a subset.
LanguageSubset make_subset(const std::string& name, const std::vector<QAPair>& pairs, std::uint32_t dim);

struct TrainConfig {
  std::int64_t steps = 1000;
  std::size_t batch_size = 32;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  double peak_lr = 0.01;
  double warmup_fraction = 0.1;
  LossOptions loss;
};

/// Linear warmup to peak over the first warmup_fraction of steps, then linear
/// decay to zero. `step` is 0-based.
double learning_rate(std::int64_t step, std::int64_t steps, double peak, double warmup_fraction = 0.1);

struct LossRecord {
  std::int64_t step = 0;
  std::string language;
  double loss = 0;
  double lr = 0;
};

struct TrainResult {
  EncoderModel model;
  std::vector<LossRecord> trace;
  sampling::SubsetWeights weights;
};

/// Raised when a step produces a non-finite loss.
class TrainingDiverged : public DataError {
 public:
  TrainingDiverged(std::int64_t step, const std::string& language, double loss);
  std::int64_t step;
  std::string language;
  double loss;
};

/// Mini-batch SGD: each step samples a language by subset_probabilities and a
/// batch within it, then applies the analytic gradient.
TrainResult train(EncoderModel model, const std::vector<LanguageSubset>& subsets, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step = {});

std::string loss_trace_csv(const std::vector<LossRecord>& trace);

}  // namespace qamine::encoder
