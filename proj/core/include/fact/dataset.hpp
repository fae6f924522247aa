#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fact/rng.hpp"
#include "fact/tensor.hpp"

namespace fact {

// A feature matrix with optional class labels. Unlabeled datasets model the
// target client's covariate-only data.
struct Dataset {
  Tensor features;          // N x d
  std::vector<int> labels;  // empty means unlabeled, else size N
  std::string domain_tag;
  int num_classes = 0;

  size_t size() const { return features.rows(); }
  size_t dim() const { return features.cols(); }
  bool labeled() const { return !labels.empty(); }

  // Throws InputError on label/shape inconsistencies.
  void validate() const;

  // Copy with labels removed.
  Dataset without_labels() const;
};

// Class-conditional Gaussian layout shared by every domain of an experiment.
struct BaseTask {
  std::vector<std::vector<double>> class_means;  // K x d
  double class_sigma = 0.35;                     // within-class scatter

  size_t num_classes() const { return class_means.size(); }
  size_t dim() const { return class_means.empty() ? 0 : class_means[0].size(); }
};

// K classes placed on the unit circle; defaults to the 3-class layout at
// angles 90, 210 and 330 degrees in 2-d.
BaseTask circular_base_task(size_t num_classes = 3, double sigma = 0.35);

// Affine feature-space map: x -> permute(R(angle) * (scale . x)) + translation.
// The rotation acts on the first two coordinates.
struct AffineTransform {
  double rotation = 0.0;  // radians
  std::vector<double> scale;        // empty = all ones
  std::vector<double> translation;  // empty = zero
  std::vector<size_t> permutation;  // empty = identity

  std::vector<double> apply(const std::vector<double>& x) const;
  // Throws ConfigError when not invertible (zero scale, invalid permutation).
  void validate(size_t dim) const;
};

// Everything needed to synthesize one domain deterministically.
struct DomainSpec {
  std::string name;
  BaseTask base;
  AffineTransform transform;
  double noise_sigma = 0.0;  // post-transform isotropic Gaussian noise
  size_t n_samples = 0;
  uint64_t seed = 0;
};

// Samples a labeled domain: balanced labels (counts differ by at most one),
// features = transform(mean_c + sigma * gauss) + noise. Bitwise deterministic
// per spec.
Dataset make_domain(const DomainSpec& spec);

// Random permutation, then disjoint shards whose sizes differ by at most one.
// n_clients == 1 returns the input unchanged.
std::vector<Dataset> split_domain(const Dataset& ds, size_t n_clients, Rng& rng);

// Stratified split; the test part receives round(test_fraction * N) samples,
// allocated per class by largest remainder. Throws ConfigError if any class
// would be empty on either side.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             Rng& rng);

// Per-feature z-scoring, in place. Off by default in experiment pipelines so
// domain shift survives preprocessing.
void standardize_features(Dataset& ds);

// CSV with header f0..f{d-1},label; the label cell is empty when unlabeled.
void write_csv(const Dataset& ds, const std::string& path);

}  // namespace fact
