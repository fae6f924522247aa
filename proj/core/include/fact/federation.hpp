#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fact/dataset.hpp"
#include "fact/model.hpp"
#include "fact/nn.hpp"
#include "fact/optim.hpp"
#include "fact/rng.hpp"

namespace fact {

enum class Role { source, target };

enum class Variant { fact, fact_nf, source_only };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // throws ConfigError

struct ClientState {
  std::string id;
  Role role = Role::source;
  Dataset dataset;  // labeled for sources, unlabeled for the target
  ModelParams local_params;
  std::string domain_tag;
};

// Per-round telemetry.
struct RoundRecord {
  int round = 0;
  std::pair<std::string, std::string> pair;
  double src_loss_1 = 0.0, src_loss_2 = 0.0;
  std::optional<double> ft_loss_1, ft_loss_2;  // absent without fine-tuning
  std::optional<double> idd;                   // absent when the idd stage is skipped
  std::optional<double> target_accuracy;       // diagnostic only

  bool operator==(const RoundRecord&) const = default;
};

struct Snapshot {
  ModelParams params;
  double idd = 0.0;
  int round = 0;
};

struct ServerState {
  ModelParams global_params;
  int round = 0;
  std::vector<RoundRecord> history;
  std::optional<Snapshot> best_snapshot;  // min recorded idd, earliest round on ties
};

// Per-round epoch budget for the three training stages.
struct RoundBudget {
  int source = 1;
  int finetune = 1;
  int idd = 1;

  bool operator==(const RoundBudget&) const = default;
};

struct ProtocolConfig {
  int rounds = 1;
  RoundBudget epochs;  // uniform budget; per_round overrides when non-empty
  std::vector<RoundBudget> per_round;
  Variant variant = Variant::fact;
  uint64_t rng_seed = 0;
  bool sample_size_weighting = false;  // off: exact 1/2 aggregation weights

  // Budget of round r with variant stages applied (finetune zeroed for
  // fact_nf, idd zeroed for source_only).
  RoundBudget round_budget(int r) const;
  // Scheduler denominator: total stage epochs across all rounds.
  long total_epochs() const;
  void validate() const;  // throws ConfigError
};

// Uniform pair draw over the unordered source pairs; consumes exactly one
// bounded draw from the rng.
std::pair<size_t, size_t> select_pair(size_t num_sources, Rng& rng);

// Server Step 0: copy the global model into the two selected clients.
void cross_initialize(const ServerState& server, ClientState& first,
                      ClientState& second);

// Mini-batch cross-entropy training of the full local model for `epochs`
// epochs. The schedule progress of epoch e is (start_epoch + e) /
// hyper.total_epochs. Returns the final epoch's mean loss.
double source_train(ClientState& client, const HyperParams& hyper, int epochs,
                    long start_epoch, Rng& rng);

// Same loop with the generator frozen: only the head moves.
double fine_tune(ClientState& client, const HyperParams& hyper, int epochs,
                 long start_epoch, Rng& rng);

// Element-wise convex combination of shape-congruent partitions. Weights must
// be non-negative and sum to 1 within 1e-9.
std::vector<Tensor> fedavg(const std::vector<const std::vector<Tensor>*>& parts,
                           const std::vector<double>& weights);

struct IddMinimizeResult {
  std::vector<Tensor> generator;
  double mean_idd = 0.0;  // averaged over the final epoch
};

// Updates the shared generator to minimize the inter-domain distance between
// the two frozen heads on the target client's unlabeled data.
IddMinimizeResult idd_minimize(const ClientState& target,
                               const std::vector<Tensor>& generator,
                               const std::vector<Tensor>& head1,
                               const std::vector<Tensor>& head2, const LayerSpec& spec,
                               const HyperParams& hyper, int epochs, long start_epoch,
                               Rng& rng);

// Fraction of correct argmax predictions; argmax ties resolve to the smallest
// class index.
double evaluate(const ModelParams& params, const Dataset& ds);

// Min-idd model selection: a strictly smaller recorded idd makes the current
// global model the snapshot; ties keep the earlier round. Records without an
// idd never select.
void update_best_snapshot(ServerState& server, const RoundRecord& record);

// One full round: pair selection, cross-initialization, source training,
// generator aggregation, optional head fine-tuning, idd minimization, head
// aggregation, bookkeeping. Transactional: on error the server state is
// restored and the exception rethrown. `target_eval`, when given, is scored
// into the record as a diagnostic.
RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const ProtocolConfig& config, const HyperParams& hyper,
                      Rng& pair_rng, const Dataset* target_eval = nullptr);

struct ProtocolResult {
  ModelParams final_params;  // min-idd snapshot, or last round without idd
  ServerState server;
};

// Initializes the global model from config.rng_seed and runs all rounds.
ProtocolResult run_protocol(std::vector<ClientState>& clients,
                            const ProtocolConfig& config, const HyperParams& hyper,
                            const Dataset* target_eval = nullptr);

// Round history as CSV with columns round, pair, src_loss_1, src_loss_2,
// ft_loss_1, ft_loss_2, idd, target_acc. Absent optionals are empty cells.
std::string history_csv(const std::vector<RoundRecord>& history);

}  // namespace fact
