#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fact/dataset.hpp"
#include "fact/federation.hpp"
#include "fact/model.hpp"

namespace fact {

inline constexpr int kConfigSchemaVersion = 1;

// Synthetic task shared by every domain: classes on the unit circle in 2-d.
struct TaskConfig {
  int num_classes = 3;
  double class_sigma = 0.35;
  size_t samples_per_domain = 600;  // training samples per domain
  double test_fraction = 0.5;       // target-only held-out fraction
};

// One domain: either a synthetic affine-shifted copy of the base task or an
// IDX file pair (with separate test files when used as the target).
struct DomainConfig {
  std::string name;
  double rotation_deg = 0.0;
  std::vector<double> scale;        // empty = ones
  std::vector<double> translation;  // empty = zeros
  std::vector<size_t> permutation;  // empty = identity
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  std::string images, labels;            // idx mode
  std::string test_images, test_labels;  // idx mode, target only

  bool is_idx() const { return !images.empty(); }
};

struct SweepConfig {
  std::string axis;           // rounds | clients | sources
  std::vector<long> values;   // unused for axis=sources (subsets are enumerated)
};

struct ExperimentConfig {
  std::string name = "run";
  TaskConfig task;
  std::vector<DomainConfig> domains;
  std::string target_domain;
  Variant variant = Variant::fact;
  int rounds = 30;
  long total_epochs = 120;  // per-stage epoch budget across all rounds
  HyperParams hyper;        // total_epochs field is derived, not configured
  std::vector<uint64_t> seeds;
  size_t clients_per_domain = 1;
  bool standardize = false;
  bool sample_size_weighting = false;
  std::optional<SweepConfig> sweep;

  void validate() const;  // throws ConfigError
};

// Strict parse: unknown keys anywhere are ConfigErrors, as are missing
// required fields and a wrong schema_version.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON of the resolved config (sorted keys, version included).
std::string config_to_json(const ExperimentConfig& cfg);
// FNV-1a of the canonical JSON, 16 hex digits. Key order in the source file
// cannot influence it.
std::string config_fingerprint(const ExperimentConfig& cfg);

// Splits the total epoch budget over rounds: every round receives
// floor(total/rounds) epochs per training stage, the final round absorbs the
// remainder. Throws ConfigError if any round would get zero epochs.
std::vector<RoundBudget> make_round_budgets(long total_epochs, int rounds);

struct ResultRow {
  std::string config_label;
  std::string fingerprint;
  uint64_t seed = 0;
  double target_accuracy = 0.0;
  std::optional<double> best_idd;
  int selected_round = 0;
  double wall_time_ms = 0.0;       // reported separately; not reproducible
  std::vector<double> idd_trace;   // per-round recorded idd
  std::vector<double> acc_trace;   // per-round diagnostic target accuracy
};

struct SummaryRow {
  std::string config_label;
  std::string fingerprint;
  size_t n = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // sample std; 0 for a single seed
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summaries;
};

// Per-(config, seed) byproducts for callers that want to persist them.
struct RunArtifacts {
  std::string config_label;
  uint64_t seed = 0;
  std::vector<std::string> client_ids;  // sources in order, then the target
  std::vector<RoundRecord> history;
  ModelParams best_model;
};
using ArtifactSink = std::function<void(const RunArtifacts&)>;

// Runs every seed of the config (in parallel workers when FACT_WORKERS > 1),
// evaluates the selected model on the target test split and appends one row
// per seed plus a summary. The sink, when given, receives artifacts in seed
// order after all runs finish.
ResultTable run_experiment(const ExperimentConfig& cfg, ArtifactSink sink = nullptr);

// Control condition: the same pipeline with the inter-domain-distance stage
// skipped and final-round model selection.
ResultTable baseline_source_only(const ExperimentConfig& cfg, ArtifactSink sink = nullptr);

// Resolved per-point configs of a sweep, labels included; exposed so callers
// can inspect that non-swept fields are untouched.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg,
                                           const std::string& axis);

// All source-domain subsets: sizes >= 2 run as-is, singletons run with the
// domain split across two clients.
ResultTable sweep_sources(const ExperimentConfig& cfg, ArtifactSink sink = nullptr);
// Varies communication rounds under the fixed total epoch budget.
ResultTable sweep_rounds(const ExperimentConfig& cfg, ArtifactSink sink = nullptr);
// Splits every source domain across n clients for each sweep value.
ResultTable sweep_client_splits(const ExperimentConfig& cfg, ArtifactSink sink = nullptr);

// Worker count: FACT_WORKERS env var, else hardware concurrency.
size_t worker_count();

}  // namespace fact
