#include "fact/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "fact/errors.hpp"

namespace fact {

void Dataset::validate() const {
  if (features.ndim() != 2) {
    throw InputError("Dataset: features must be 2-d, got " + features.shape_str());
  }
  if (size() < 1) throw InputError("Dataset: empty");
  if (labeled()) {
    if (labels.size() != size()) {
      throw InputError("Dataset: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(size()) + " samples");
    }
    for (int y : labels) {
      if (y < 0 || y >= num_classes) {
        throw InputError("Dataset: label " + std::to_string(y) + " outside [0, " +
                         std::to_string(num_classes) + ")");
      }
    }
  }
}

Dataset Dataset::without_labels() const {
  Dataset out = *this;
  out.labels.clear();
  return out;
}

BaseTask circular_base_task(size_t num_classes, double sigma) {
  BaseTask task;
  task.class_sigma = sigma;
  // First class at 90 degrees, the rest evenly spaced.
  for (size_t c = 0; c < num_classes; ++c) {
    double angle = std::numbers::pi / 2.0 +
                   2.0 * std::numbers::pi * static_cast<double>(c) /
                       static_cast<double>(num_classes);
    task.class_means.push_back({std::cos(angle), std::sin(angle)});
  }
  return task;
}

void AffineTransform::validate(size_t dim) const {
  if (!scale.empty()) {
    if (scale.size() != dim) {
      throw ConfigError("transform: scale has " + std::to_string(scale.size()) +
                        " entries for dimension " + std::to_string(dim));
    }
    for (double s : scale) {
      if (s == 0.0 || !std::isfinite(s)) {
        throw ConfigError("transform: degenerate scale entry, not invertible");
      }
    }
  }
  if (!translation.empty() && translation.size() != dim) {
    throw ConfigError("transform: translation has " + std::to_string(translation.size()) +
                      " entries for dimension " + std::to_string(dim));
  }
  if (!permutation.empty()) {
    if (permutation.size() != dim) {
      throw ConfigError("transform: permutation size mismatch");
    }
    std::vector<bool> seen(dim, false);
    for (size_t p : permutation) {
      if (p >= dim || seen[p]) {
        throw ConfigError("transform: invalid feature permutation");
      }
      seen[p] = true;
    }
  }
}

std::vector<double> AffineTransform::apply(const std::vector<double>& x) const {
  std::vector<double> y = x;
  if (!scale.empty()) {
    for (size_t i = 0; i < y.size(); ++i) y[i] *= scale[i];
  }
  if (y.size() >= 2 && rotation != 0.0) {
    double c = std::cos(rotation), s = std::sin(rotation);
    double y0 = c * y[0] - s * y[1];
    double y1 = s * y[0] + c * y[1];
    y[0] = y0;
    y[1] = y1;
  }
  if (!permutation.empty()) {
    std::vector<double> z(y.size());
    for (size_t i = 0; i < y.size(); ++i) z[i] = y[permutation[i]];
    y = std::move(z);
  }
  if (!translation.empty()) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += translation[i];
  }
  return y;
}

Dataset make_domain(const DomainSpec& spec) {
  const size_t k = spec.base.num_classes();
  const size_t d = spec.base.dim();
  if (k == 0 || d == 0) throw ConfigError("make_domain: empty base task");
  if (spec.n_samples < k) {
    throw ConfigError("make_domain: need at least one sample per class");
  }
  spec.transform.validate(d);

  Rng rng(spec.seed);

  // Balanced label pool: counts differ by at most one, extras to low classes.
  std::vector<int> labels;
  labels.reserve(spec.n_samples);
  for (size_t c = 0; c < k; ++c) {
    size_t count = spec.n_samples / k + (c < spec.n_samples % k ? 1 : 0);
    labels.insert(labels.end(), count, static_cast<int>(c));
  }
  rng.shuffle(labels);

  Tensor features({spec.n_samples, d});
  std::vector<double> x(d);
  for (size_t i = 0; i < spec.n_samples; ++i) {
    const auto& mean = spec.base.class_means[static_cast<size_t>(labels[i])];
    for (size_t j = 0; j < d; ++j) x[j] = mean[j] + spec.base.class_sigma * rng.normal();
    std::vector<double> y = spec.transform.apply(x);
    if (spec.noise_sigma > 0.0) {
      for (size_t j = 0; j < d; ++j) y[j] += spec.noise_sigma * rng.normal();
    }
    for (size_t j = 0; j < d; ++j) features.at(i, j) = y[j];
  }

  Dataset ds{std::move(features), std::move(labels), spec.name, static_cast<int>(k)};
  ds.validate();
  return ds;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<size_t>& rows,
                  const std::string& tag) {
  const size_t d = ds.dim();
  Tensor features({rows.size(), d});
  std::vector<int> labels;
  labels.reserve(ds.labeled() ? rows.size() : 0);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < d; ++j) features.at(i, j) = ds.features.at(rows[i], j);
    if (ds.labeled()) labels.push_back(ds.labels[rows[i]]);
  }
  return Dataset{std::move(features), std::move(labels), tag, ds.num_classes};
}

}  // namespace

std::vector<Dataset> split_domain(const Dataset& ds, size_t n_clients, Rng& rng) {
  ds.validate();
  if (n_clients < 1) throw InputError("split_domain: n_clients must be >= 1");
  if (n_clients > ds.size()) {
    throw InputError("split_domain: " + std::to_string(n_clients) +
                     " clients for " + std::to_string(ds.size()) + " samples");
  }
  if (n_clients == 1) return {ds};

  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<Dataset> shards;
  size_t offset = 0;
  for (size_t s = 0; s < n_clients; ++s) {
    size_t count = ds.size() / n_clients + (s < ds.size() % n_clients ? 1 : 0);
    std::vector<size_t> rows(order.begin() + offset, order.begin() + offset + count);
    shards.push_back(take_rows(ds, rows, ds.domain_tag + "/shard" + std::to_string(s)));
    offset += count;
  }
  return shards;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             Rng& rng) {
  ds.validate();
  if (!ds.labeled()) throw InputError("train_test_split: requires labels");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InputError("train_test_split: fraction must lie in (0,1)");
  }

  // Shuffled index list per class.
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(ds.num_classes));
  for (size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<size_t>(ds.labels[i])].push_back(i);
  }
  for (auto& idx : by_class) rng.shuffle(idx);

  // Per-class test quotas by largest remainder, totalling round(f * N).
  size_t total_test = static_cast<size_t>(std::llround(test_fraction *
                                                       static_cast<double>(ds.size())));
  std::vector<size_t> quota(by_class.size());
  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t c = 0; c < by_class.size(); ++c) {
    double exact = test_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<size_t>(exact);
    assigned += quota[c];
    remainders.push_back({exact - static_cast<double>(quota[c]), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t r = 0; assigned < total_test && r < remainders.size(); ++r) {
    ++quota[remainders[r].second];
    ++assigned;
  }

  std::vector<size_t> test_rows, train_rows;
  for (size_t c = 0; c < by_class.size(); ++c) {
    if (quota[c] == 0 || quota[c] == by_class[c].size()) {
      throw ConfigError("train_test_split: class " + std::to_string(c) +
                        " would be empty in one split");
    }
    for (size_t i = 0; i < by_class[c].size(); ++i) {
      (i < quota[c] ? test_rows : train_rows).push_back(by_class[c][i]);
    }
  }
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  return {take_rows(ds, train_rows, ds.domain_tag + "/train"),
          take_rows(ds, test_rows, ds.domain_tag + "/test")};
}

void standardize_features(Dataset& ds) {
  const size_t n = ds.size(), d = ds.dim();
  for (size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += ds.features.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double c = ds.features.at(i, j) - mean;
      var += c * c;
    }
    double sd = std::sqrt(var / static_cast<double>(n));
    if (sd == 0.0) sd = 1.0;
    for (size_t i = 0; i < n; ++i) {
      ds.features.at(i, j) = (ds.features.at(i, j) - mean) / sd;
    }
  }
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  out.precision(17);
  for (size_t j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
  out << "label\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    for (size_t j = 0; j < ds.dim(); ++j) out << ds.features.at(i, j) << ",";
    if (ds.labeled()) out << ds.labels[i];
    out << "\n";
  }
  if (!out) throw IoError("write_csv: write failed for " + path);
}

}  // namespace fact
