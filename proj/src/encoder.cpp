#include "qamine/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>
#include <sstream>
#include <unordered_map>

#include "qamine/io.hpp"
#include "qamine/random.hpp"
#include "qamine/text.hpp"

namespace qamine::encoder {

// ---------------------------------------------------------------------------
// Featurization

FeatureVector featurize(std::string_view text, std::uint32_t dim) {
  if (dim == 0) throw ConfigError("feature dimension must be positive");
  auto tokens = tokenize(text, kMaxTokens);
  if (tokens.empty()) throw DataError("text has no tokens to featurize");

  std::unordered_map<std::uint32_t, double> counts;
  auto add = [&](char kind, std::string_view piece) {
    std::string key;
    key.reserve(piece.size() + 2);
    key.push_back(kind);
    key.push_back('\x1f');
    key.append(piece);
    counts[static_cast<std::uint32_t>(fnv1a64(key) % dim)] += 1.0;
  };
  for (const auto& tok : tokens) {
    add('u', tok);
    for (std::size_t i = 0; i + 3 <= tok.size(); ++i) add('t', std::string_view(tok).substr(i, 3));
  }

  FeatureVector f;
  f.dim = dim;
  f.indices.reserve(counts.size());
  for (const auto& [idx, _] : counts) f.indices.push_back(idx);
  std::sort(f.indices.begin(), f.indices.end());
  double norm2 = 0;
  for (auto idx : f.indices) {
    double c = counts[idx];
    f.values.push_back(c);
    norm2 += c * c;
  }
  double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : f.values) v *= inv;
  return f;
}

// ---------------------------------------------------------------------------
// Model

namespace {

constexpr char kCheckpointMagic[8] = {'Q', 'A', 'M', 'I', 'N', 'E', 'E', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

EncoderModel::EncoderModel(std::uint32_t dim, std::uint32_t embed_dim, double temperature, std::uint64_t seed,
                           std::vector<double> projection)
    : dim_(dim), embed_dim_(embed_dim), temperature_(temperature), seed_(seed), projection_(std::move(projection)) {
  if (dim_ == 0 || embed_dim_ == 0) throw ConfigError("model dimensions must be positive");
  if (!(temperature_ > 0) || !std::isfinite(temperature_)) throw ConfigError("temperature must be positive");
  if (projection_.size() != static_cast<std::size_t>(dim_) * embed_dim_) {
    throw ConfigError("projection size does not match dim x embed_dim");
  }
  for (double v : projection_) {
    if (!std::isfinite(v)) throw DataError("projection has a non-finite entry");
  }
}

EncoderModel EncoderModel::initialize(std::uint32_t dim, std::uint32_t embed_dim, double temperature,
                                      std::uint64_t seed) {
  Rng rng(seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> w(static_cast<std::size_t>(dim) * embed_dim);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return EncoderModel(dim, embed_dim, temperature, seed, std::move(w));
}

std::string EncoderModel::serialize() const {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put<std::uint32_t>(out, kFeaturizerVersion);
  binio::put<std::uint64_t>(out, dim_);
  binio::put<std::uint64_t>(out, embed_dim_);
  binio::put<double>(out, temperature_);
  binio::put<std::uint64_t>(out, seed_);
  for (double v : projection_) binio::put<float>(out, static_cast<float>(v));
  return std::move(out).str();
}

EncoderModel EncoderModel::deserialize(std::string_view bytes) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw DataError("not an encoder checkpoint (bad magic)");
  }
  auto version = binio::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  auto featurizer = binio::get<std::uint32_t>(in);
  if (featurizer != kFeaturizerVersion) {
    throw DataError("checkpoint was trained with featurizer version " + std::to_string(featurizer));
  }
  auto dim = binio::get<std::uint64_t>(in);
  auto embed = binio::get<std::uint64_t>(in);
  auto temperature = binio::get<double>(in);
  auto seed = binio::get<std::uint64_t>(in);
  if (dim == 0 || embed == 0 || dim > (1ULL << 31) || embed > (1ULL << 16)) {
    throw DataError("checkpoint has implausible dimensions");
  }
  std::vector<double> w(dim * embed);
  for (auto& v : w) v = binio::get<float>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint");
  return EncoderModel(static_cast<std::uint32_t>(dim), static_cast<std::uint32_t>(embed), temperature, seed, std::move(w));
}

void EncoderModel::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

EncoderModel EncoderModel::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

const std::string& EncoderModel::fingerprint() const {
  if (!fingerprint_) fingerprint_ = sha256_hex(serialize());
  return *fingerprint_;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> project(const EncoderModel& model, const FeatureVector& f) {
  if (f.dim != model.dim()) {
    throw ConfigError("feature dim " + std::to_string(f.dim) + " does not match model dim " +
                      std::to_string(model.dim()));
  }
  std::vector<double> u(model.embed_dim(), 0.0);
  for (std::size_t k = 0; k < f.indices.size(); ++k) {
    auto row = model.row(f.indices[k]);
    double v = f.values[k];
    for (std::size_t e = 0; e < u.size(); ++e) u[e] += v * row[e];
  }
  return u;
}

namespace {

double normalize_in_place(std::vector<double>& u) {
  double norm = std::sqrt(dot(u, u));
  if (!(norm >= 1e-12)) throw DataError("degenerate embedding (projected norm below 1e-12)");
  for (auto& x : u) x /= norm;
  return norm;
}

}  // namespace

std::vector<double> encode(const EncoderModel& model, const FeatureVector& f) {
  auto u = project(model, f);
  normalize_in_place(u);
  return u;
}

// ---------------------------------------------------------------------------
// Loss and gradient

void TrainingBatch::validate() const {
  if (queries.size() < 2) throw ConfigError("batch must hold at least 2 pairs");
  if (queries.size() != documents.size()) throw ConfigError("queries and documents are not aligned");
}

namespace {

// Row-wise softmax cross-entropy with the diagonal as target. Writes the
// softmax probabilities into `probs` (rows x cols) and returns per-row losses.
std::vector<double> softmax_xent(std::span<const double> logits, std::size_t rows, std::size_t cols,
                                 std::vector<double>& probs) {
  probs.assign(rows * cols, 0.0);
  std::vector<double> losses(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = logits.data() + i * cols;
    double m = *std::max_element(z, z + cols);
    double sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      double e = std::exp(z[j] - m);
      probs[i * cols + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < cols; ++j) probs[i * cols + j] /= sum;
    losses[i] = (m + std::log(sum)) - z[i];
  }
  return losses;
}

struct Encoded {
  std::vector<std::vector<double>> unit;
  std::vector<double> norms;
};

Encoded encode_all(const EncoderModel& model, std::span<const FeatureVector> fs) {
  Encoded out;
  out.unit.reserve(fs.size());
  for (const auto& f : fs) {
    auto u = project(model, f);
    out.norms.push_back(normalize_in_place(u));
    out.unit.push_back(std::move(u));
  }
  return out;
}

class GradientAccumulator {
 public:
  explicit GradientAccumulator(std::uint32_t embed_dim) : embed_(embed_dim) {}

  void add(const FeatureVector& f, std::span<const double> du) {
    for (std::size_t k = 0; k < f.indices.size(); ++k) {
      auto [it, inserted] = slot_.try_emplace(f.indices[k], rows_.size());
      if (inserted) {
        rows_.push_back(f.indices[k]);
        values_.resize(values_.size() + embed_, 0.0);
      }
      double* dst = values_.data() + it->second * embed_;
      double v = f.values[k];
      for (std::size_t e = 0; e < embed_; ++e) dst[e] += v * du[e];
    }
  }

  SparseGradient finish() && {
    std::vector<std::size_t> order(rows_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows_[a] < rows_[b]; });
    SparseGradient g;
    g.embed_dim = embed_;
    g.rows.reserve(rows_.size());
    g.values.reserve(values_.size());
    for (std::size_t i : order) {
      g.rows.push_back(rows_[i]);
      g.values.insert(g.values.end(), values_.begin() + static_cast<std::ptrdiff_t>(i * embed_),
                      values_.begin() + static_cast<std::ptrdiff_t>((i + 1) * embed_));
    }
    return g;
  }

 private:
  std::uint32_t embed_;
  std::unordered_map<std::uint32_t, std::size_t> slot_;
  std::vector<std::uint32_t> rows_;
  std::vector<double> values_;
};

// dL/du for u = norm * unit, given dL/d(unit).
std::vector<double> through_normalization(std::span<const double> unit, double norm, std::span<const double> dunit) {
  double radial = dot(unit, dunit);
  std::vector<double> du(unit.size());
  for (std::size_t e = 0; e < unit.size(); ++e) du[e] = (dunit[e] - unit[e] * radial) / norm;
  return du;
}

std::pair<LossResult, std::optional<SparseGradient>> forward_backward(const EncoderModel& model,
                                                                      const TrainingBatch& batch,
                                                                      const LossOptions& opts, bool want_grad) {
  batch.validate();
  const std::size_t n = batch.queries.size();
  std::vector<const FeatureVector*> candidates;
  for (const auto& d : batch.documents) candidates.push_back(&d);
  for (const auto& d : batch.extra_negatives) candidates.push_back(&d);
  const std::size_t m = candidates.size();

  auto q = encode_all(model, batch.queries);
  Encoded d;
  for (const auto* f : candidates) {
    auto u = project(model, *f);
    d.norms.push_back(normalize_in_place(u));
    d.unit.push_back(std::move(u));
  }

  const double temperature = model.temperature();
  std::vector<double> logits(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) logits[i * m + j] = dot(q.unit[i], d.unit[j]) / temperature;
  }

  std::vector<double> probs;
  auto forward = softmax_xent(logits, n, m, probs);
  const double w_forward = opts.symmetric ? 0.5 : 1.0;
  // dL/dS, where L is the batch mean and S the raw cosine matrix.
  std::vector<double> g(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      g[i * m + j] = w_forward * (probs[i * m + j] - (i == j ? 1.0 : 0.0)) / (static_cast<double>(n) * temperature);
    }
  }

  LossResult result;
  result.per_pair = forward;
  if (opts.symmetric) {
    // Document i against all n queries; transposed n x n block.
    std::vector<double> t(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) t[i * n + j] = logits[j * m + i];
    }
    std::vector<double> tprobs;
    auto backward = softmax_xent(t, n, n, tprobs);
    for (std::size_t i = 0; i < n; ++i) {
      result.per_pair[i] = 0.5 * (forward[i] + backward[i]);
      for (std::size_t j = 0; j < n; ++j) {
        g[j * m + i] += 0.5 * (tprobs[i * n + j] - (i == j ? 1.0 : 0.0)) / (static_cast<double>(n) * temperature);
      }
    }
  }
  double total = 0;
  for (double l : result.per_pair) total += l;
  result.loss = total / static_cast<double>(n);
  if (!want_grad) return {std::move(result), std::nullopt};

  const std::size_t embed = model.embed_dim();
  GradientAccumulator acc(model.embed_dim());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> dq(embed, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double gij = g[i * m + j];
      for (std::size_t e = 0; e < embed; ++e) dq[e] += gij * d.unit[j][e];
    }
    acc.add(batch.queries[i], through_normalization(q.unit[i], q.norms[i], dq));
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> dd(embed, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double gij = g[i * m + j];
      for (std::size_t e = 0; e < embed; ++e) dd[e] += gij * q.unit[i][e];
    }
    acc.add(*candidates[j], through_normalization(d.unit[j], d.norms[j], dd));
  }
  return {std::move(result), std::move(acc).finish()};
}

}  // namespace

LossResult info_nce_from_similarities(std::span<const double> sims, std::size_t rows, std::size_t cols,
                                      double temperature) {
  if (rows < 1 || cols < rows) throw ConfigError("similarity matrix must have cols >= rows >= 1");
  if (sims.size() != rows * cols) throw ConfigError("similarity matrix size mismatch");
  std::vector<double> logits(sims.begin(), sims.end());
  for (auto& z : logits) z /= temperature;
  std::vector<double> probs;
  LossResult r;
  r.per_pair = softmax_xent(logits, rows, cols, probs);
  double total = 0;
  for (double l : r.per_pair) total += l;
  r.loss = total / static_cast<double>(rows);
  return r;
}

LossResult info_nce_loss(const EncoderModel& model, const TrainingBatch& batch, const LossOptions& opts) {
  return forward_backward(model, batch, opts, false).first;
}

SparseGradient loss_gradient(const EncoderModel& model, const TrainingBatch& batch, const LossOptions& opts) {
  return std::move(*forward_backward(model, batch, opts, true).second);
}

std::pair<LossResult, SparseGradient> loss_and_gradient(const EncoderModel& model, const TrainingBatch& batch,
                                                        const LossOptions& opts) {
  auto [loss, grad] = forward_backward(model, batch, opts, true);
  return {std::move(loss), std::move(*grad)};
}

std::vector<double> SparseGradient::to_dense(std::uint32_t dim) const {
  std::vector<double> dense(static_cast<std::size_t>(dim) * embed_dim, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(r * embed_dim), embed_dim,
                dense.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(rows[r]) * embed_dim));
  }
  return dense;
}

void apply_update(EncoderModel& model, const SparseGradient& grad, double lr) {
  if (lr == 0.0) return;
  auto w = model.mutable_projection();
  const std::size_t embed = model.embed_dim();
  for (std::size_t r = 0; r < grad.rows.size(); ++r) {
    double* dst = w.data() + static_cast<std::size_t>(grad.rows[r]) * embed;
    const double* src = grad.values.data() + r * embed;
    for (std::size_t e = 0; e < embed; ++e) dst[e] -= lr * src[e];
  }
}

// ---------------------------------------------------------------------------
// Training

LanguageSubset make_subset(const std::string& name, const std::vector<QAPair>& pairs, std::uint32_t dim) {
  LanguageSubset subset;
  subset.name = name;
  for (const auto& p : pairs) {
    try {
      auto qf = featurize(query_text(p), dim);
      auto df = featurize(p.answer, dim);
      subset.queries.push_back(std::move(qf));
      subset.documents.push_back(std::move(df));
    } catch (const DataError&) {
      // Token-free text cannot be embedded; such pairs never enter a batch.
    }
  }
  return subset;
}

double learning_rate(std::int64_t step, std::int64_t steps, double peak, double warmup_fraction) {
  auto warmup = static_cast<std::int64_t>(std::ceil(warmup_fraction * static_cast<double>(steps)));
  warmup = std::clamp<std::int64_t>(warmup, 1, steps);
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (steps == warmup) return peak;
  return peak * static_cast<double>(steps - step) / static_cast<double>(steps - warmup);
}

TrainingDiverged::TrainingDiverged(std::int64_t step_, const std::string& language_, double loss_)
    : DataError("non-finite loss at step " + std::to_string(step_) + " (language " + language_ +
                ", loss " + std::to_string(loss_) + ")"),
      step(step_),
      language(language_),
      loss(loss_) {}

TrainResult train(EncoderModel model, const std::vector<LanguageSubset>& subsets, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step) {
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (subsets.empty()) throw ConfigError("no training subsets");
  if (!std::isfinite(cfg.peak_lr) || cfg.peak_lr < 0) throw ConfigError("learning rate must be finite and >= 0");
  std::vector<std::int64_t> sizes;
  for (const auto& s : subsets) {
    if (s.queries.empty()) throw ConfigError("training subset '" + s.name + "' is empty");
    sizes.push_back(static_cast<std::int64_t>(s.queries.size()));
  }
  TrainResult result;
  result.weights = sampling::subset_probabilities(sizes, cfg.alpha);
  std::uint64_t stream = cfg.seed;
  Rng rng(splitmix64(stream));

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    auto drawn = sampling::sample_batch(result.weights, cfg.batch_size, rng);
    const auto& subset = subsets[drawn.subset];
    TrainingBatch batch;
    batch.language = subset.name;
    for (auto idx : drawn.members) {
      batch.queries.push_back(subset.queries[idx]);
      batch.documents.push_back(subset.documents[idx]);
    }
    LossResult loss;
    SparseGradient grad;
    try {
      std::tie(loss, grad) = loss_and_gradient(model, batch, cfg.loss);
    } catch (const DataError&) {
      // weights blew up past what encode() accepts
      if (step == 0) throw;
      throw TrainingDiverged(step, subset.name, std::numeric_limits<double>::quiet_NaN());
    }
    if (!std::isfinite(loss.loss)) throw TrainingDiverged(step, subset.name, loss.loss);
    double lr = learning_rate(step, cfg.steps, cfg.peak_lr, cfg.warmup_fraction);
    apply_update(model, grad, lr);
    LossRecord rec{step, subset.name, loss.loss, lr};
    if (on_step) on_step(rec);
    result.trace.push_back(std::move(rec));
  }
  result.model = std::move(model);
  return result;
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::string out = "step,language,loss,lr\n";
  char buf[64];
  for (const auto& r : trace) {
    out += std::to_string(r.step);
    out += ',';
    out += r.language;
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", r.loss, r.lr);
    out += buf;
  }
  return out;
}

}  // namespace qamine::encoder
