#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "qamine/random.hpp"

namespace qamine::sampling {

/// Smoothed multinomial over language subsets: p_i = n_i^alpha / sum_j n_j^alpha.
struct SubsetWeights {
  std::vector<std::int64_t> sizes;
  double alpha = 0.5;
  std::vector<double> probs;
};

/// Throws ConfigError on an empty list, a non-positive size or alpha < 0.
SubsetWeights subset_probabilities(const std::vector<std::int64_t>& sizes, double alpha = 0.5);

struct SampledBatch {
  std::size_t subset = 0;
  std::vector<std::size_t> members;  // indices into the chosen subset
  bool with_replacement = false;     // subset was smaller than the batch
};

/// Draws a subset index from `weights.probs`, then `batch_size` members of
/// that subset uniformly without replacement (with replacement, flagged, when
/// the subset is too small). Advances `rng` in place.
SampledBatch sample_batch(const SubsetWeights& weights, std::size_t batch_size, Rng& rng);

/// Draws only the subset index (one uniform variate against the CDF).
std::size_t sample_subset(const SubsetWeights& weights, Rng& rng);

nlohmann::ordered_json sampler_manifest(const SubsetWeights& weights, const std::vector<std::string>& names,
                                        std::size_t batch_size, std::uint64_t seed);

}  // namespace qamine::sampling
