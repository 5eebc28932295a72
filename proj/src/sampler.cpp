#include "qamine/sampler.hpp"

#include <cmath>
#include <unordered_set>

#include "qamine/common.hpp"

namespace qamine::sampling {

SubsetWeights subset_probabilities(const std::vector<std::int64_t>& sizes, double alpha) {
  if (sizes.empty()) throw ConfigError("subset size list is empty");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  for (auto n : sizes) {
    if (n <= 0) throw ConfigError("subset sizes must be positive (got " + std::to_string(n) + ")");
  }
  SubsetWeights w;
  w.sizes = sizes;
  w.alpha = alpha;
  // Scale by the largest size first so n^alpha cannot overflow for big alpha.
  double largest = 0;
  for (auto n : sizes) largest = std::max(largest, static_cast<double>(n));
  double total = 0;
  for (auto n : sizes) {
    double v = std::pow(static_cast<double>(n) / largest, alpha);
    w.probs.push_back(v);
    total += v;
  }
  for (auto& p : w.probs) p /= total;
  return w;
}

std::size_t sample_subset(const SubsetWeights& weights, Rng& rng) {
  double u = rng.uniform01();
  double cumulative = 0;
  for (std::size_t i = 0; i < weights.probs.size(); ++i) {
    cumulative += weights.probs[i];
    if (u < cumulative) return i;
  }
  // Rounding left u above the final partial sum.
  return weights.probs.size() - 1;
}

SampledBatch sample_batch(const SubsetWeights& weights, std::size_t batch_size, Rng& rng) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 for in-batch negatives");
  SampledBatch batch;
  batch.subset = sample_subset(weights, rng);
  auto n = static_cast<std::uint64_t>(weights.sizes[batch.subset]);
  batch.members.reserve(batch_size);
  if (n < batch_size) {
    batch.with_replacement = true;
    for (std::size_t i = 0; i < batch_size; ++i) batch.members.push_back(rng.below(n));
    return batch;
  }
  // Rejection draws; cheap because batch_size <= n and batches are small
  // relative to typical subsets. Falls back to a partial shuffle when dense.
  if (batch_size * 2 > n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::size_t j = i + rng.below(n - i);
      std::swap(all[i], all[j]);
      batch.members.push_back(all[i]);
    }
    return batch;
  }
  std::unordered_set<std::size_t> seen;
  while (batch.members.size() < batch_size) {
    auto pick = static_cast<std::size_t>(rng.below(n));
    if (seen.insert(pick).second) batch.members.push_back(pick);
  }
  return batch;
}

nlohmann::ordered_json sampler_manifest(const SubsetWeights& weights, const std::vector<std::string>& names,
                                        std::size_t batch_size, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["rng"] = std::string(Rng::kAlgorithm);
  j["seed"] = seed;
  j["alpha"] = weights.alpha;
  j["batch_size"] = batch_size;
  auto subsets = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < weights.sizes.size(); ++i) {
    subsets.push_back({{"name", i < names.size() ? names[i] : std::to_string(i)},
                       {"size", weights.sizes[i]},
                       {"prob", weights.probs[i]}});
  }
  j["subsets"] = std::move(subsets);
  return j;
}

}  // namespace qamine::sampling
