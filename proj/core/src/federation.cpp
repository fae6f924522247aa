#include "fact/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fact/errors.hpp"

namespace fact {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::fact: return "fact";
    case Variant::fact_nf: return "fact-nf";
    case Variant::source_only: return "source-only";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "fact") return Variant::fact;
  if (name == "fact-nf" || name == "fact_nf") return Variant::fact_nf;
  if (name == "source-only" || name == "source_only") return Variant::source_only;
  throw ConfigError("unknown variant '" + name + "' (fact | fact-nf | source-only)");
}

RoundBudget ProtocolConfig::round_budget(int r) const {
  RoundBudget b = per_round.empty() ? epochs : per_round.at(static_cast<size_t>(r));
  if (variant == Variant::fact_nf) b.finetune = 0;
  if (variant == Variant::source_only) b.idd = 0;
  return b;
}

long ProtocolConfig::total_epochs() const {
  long total = 0;
  for (int r = 0; r < rounds; ++r) {
    RoundBudget b = round_budget(r);
    total += b.source + b.finetune + b.idd;
  }
  return total;
}

void ProtocolConfig::validate() const {
  if (rounds < 1) throw ConfigError("protocol: rounds must be >= 1");
  if (!per_round.empty() && per_round.size() != static_cast<size_t>(rounds)) {
    throw ConfigError("protocol: per-round budget list must have one entry per round");
  }
  for (int r = 0; r < rounds; ++r) {
    RoundBudget b = round_budget(r);
    if (b.source < 1) throw ConfigError("protocol: source epochs must be >= 1");
    if (variant == Variant::fact && b.finetune < 1) {
      throw ConfigError("protocol: fine-tune epochs must be >= 1 for variant fact");
    }
    if (b.idd < 0) throw ConfigError("protocol: idd epochs must be >= 0");
  }
}

std::pair<size_t, size_t> select_pair(size_t num_sources, Rng& rng) {
  if (num_sources < 2) {
    throw ConfigError("select_pair: need at least 2 source clients; split a domain "
                      "with split_domain to create more");
  }
  uint64_t k = rng.uniform(num_sources * (num_sources - 1) / 2);
  // Unrank k over pairs (i, j), i < j, ordered by i then j.
  size_t i = 0;
  uint64_t row = num_sources - 1;
  while (k >= row) {
    k -= row;
    --row;
    ++i;
  }
  return {i, i + 1 + static_cast<size_t>(k)};
}

void cross_initialize(const ServerState& server, ClientState& first,
                      ClientState& second) {
  for (ClientState* c : {&first, &second}) {
    if (c->local_params.spec != server.global_params.spec) {
      throw ProtocolError("cross_initialize: client " + c->id +
                          " layer spec differs from the global model");
    }
    c->local_params = server.global_params;
  }
}

namespace {

Tensor gather_rows(const Tensor& features, const std::vector<size_t>& order,
                   size_t begin, size_t end) {
  const size_t d = features.cols();
  Tensor batch({end - begin, d});
  for (size_t i = begin; i < end; ++i) {
    for (size_t j = 0; j < d; ++j) batch.at(i - begin, j) = features.at(order[i], j);
  }
  return batch;
}

double schedule_progress(long epoch, long total) {
  if (total <= 0) return 0.0;
  double p = static_cast<double>(epoch) / static_cast<double>(total);
  return std::clamp(p, 0.0, 1.0);
}

// Shared mini-batch cross-entropy loop for source training and fine-tuning.
double ce_train_loop(ClientState& client, const HyperParams& hyper, int epochs,
                     long start_epoch, Rng& rng, PartitionMask mask) {
  if (client.role != Role::source) {
    throw ConfigError("training: client " + client.id + " is not a source client");
  }
  if (epochs < 1) throw InputError("training: epochs must be >= 1");
  if (client.dataset.size() == 0 || !client.dataset.labeled()) {
    throw ConfigError("training: client " + client.id + " has no labeled data");
  }
  hyper.validate();

  const size_t n = client.dataset.size();
  SgdOptimizer opt(client.local_params.spec, hyper.momentum, hyper.weight_decay);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  double epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    double rate = lr_schedule(hyper.eta0,
                              schedule_progress(start_epoch + e, hyper.total_epochs));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t begin = 0; begin < n; begin += hyper.batch_size) {
      size_t end = std::min(n, begin + hyper.batch_size);
      Tensor batch = gather_rows(client.dataset.features, order, begin, end);
      std::vector<int> labels(end - begin);
      for (size_t i = begin; i < end; ++i) {
        labels[i - begin] = client.dataset.labels[order[i]];
      }
      BackwardSpec spec;
      spec.loss = BackwardSpec::Loss::cross_entropy;
      spec.labels = labels;
      spec.wrt_generator = mask.generator;
      spec.wrt_head = mask.head;
      BackwardResult res = backward(client.local_params, batch, spec, &rng);
      opt.step(client.local_params, res.grads, rate, mask);
      loss_sum += res.loss * static_cast<double>(end - begin);
    }
    epoch_loss = loss_sum / static_cast<double>(n);
  }
  return epoch_loss;
}

}  // namespace

double source_train(ClientState& client, const HyperParams& hyper, int epochs,
                    long start_epoch, Rng& rng) {
  return ce_train_loop(client, hyper, epochs, start_epoch, rng,
                       PartitionMask{true, true});
}

double fine_tune(ClientState& client, const HyperParams& hyper, int epochs,
                 long start_epoch, Rng& rng) {
  return ce_train_loop(client, hyper, epochs, start_epoch, rng,
                       PartitionMask{false, true});
}

std::vector<Tensor> fedavg(const std::vector<const std::vector<Tensor>*>& parts,
                           const std::vector<double>& weights) {
  if (parts.empty()) throw InputError("fedavg: no partitions");
  if (parts.size() != weights.size()) {
    throw InputError("fedavg: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(parts.size()) + " partitions");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InputError("fedavg: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InputError("fedavg: weights sum to " + std::to_string(sum) + ", expected 1");
  }
  const std::vector<Tensor>& first = *parts[0];
  for (const auto* p : parts) {
    if (p->size() != first.size()) throw DimensionError("fedavg: partition size mismatch");
    for (size_t t = 0; t < first.size(); ++t) {
      if (!(*p)[t].same_shape(first[t])) {
        throw DimensionError("fedavg: tensor " + std::to_string(t) + " shape mismatch");
      }
    }
  }
  std::vector<Tensor> out;
  out.reserve(first.size());
  for (size_t t = 0; t < first.size(); ++t) {
    Tensor acc(first[t].shape());
    for (size_t p = 0; p < parts.size(); ++p) {
      const Tensor& src = (*parts[p])[t];
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += weights[p] * src[i];
    }
    out.push_back(std::move(acc));
  }
  return out;
}

IddMinimizeResult idd_minimize(const ClientState& target,
                               const std::vector<Tensor>& generator,
                               const std::vector<Tensor>& head1,
                               const std::vector<Tensor>& head2, const LayerSpec& spec,
                               const HyperParams& hyper, int epochs, long start_epoch,
                               Rng& rng) {
  if (target.role != Role::target) {
    throw ConfigError("idd_minimize: client " + target.id + " is not the target");
  }
  if (target.dataset.size() == 0) {
    throw ConfigError("idd_minimize: target has no data");
  }
  if (epochs < 1) throw InputError("idd_minimize: epochs must be >= 1");
  hyper.validate();

  ModelParams primary{generator, head1, spec};
  // The rival shares the generator; only its head is read by backward().
  ModelParams rival{{}, head2, spec};

  const size_t n = target.dataset.size();
  SgdOptimizer opt(spec, hyper.momentum, hyper.weight_decay);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  double epoch_idd = 0.0;
  for (int e = 0; e < epochs; ++e) {
    double rate = lr_schedule(hyper.eta0,
                              schedule_progress(start_epoch + e, hyper.total_epochs));
    rng.shuffle(order);
    double idd_sum = 0.0;
    for (size_t begin = 0; begin < n; begin += hyper.batch_size) {
      size_t end = std::min(n, begin + hyper.batch_size);
      Tensor batch = gather_rows(target.dataset.features, order, begin, end);
      BackwardSpec bspec;
      bspec.loss = BackwardSpec::Loss::idd;
      bspec.rival = &rival;
      bspec.wrt_generator = true;
      bspec.wrt_head = false;
      BackwardResult res = backward(primary, batch, bspec, &rng);
      opt.step(primary, res.grads, rate, PartitionMask{true, false});
      idd_sum += res.loss * static_cast<double>(end - begin);
    }
    epoch_idd = idd_sum / static_cast<double>(n);
  }
  return {std::move(primary.generator), epoch_idd};
}

double evaluate(const ModelParams& params, const Dataset& ds) {
  if (ds.size() == 0 || !ds.labeled()) {
    throw InputError("evaluate: needs a non-empty labeled dataset");
  }
  ForwardResult res = forward(params, ds.features, Mode::eval);
  const size_t n = res.probs.rows(), k = res.probs.cols();
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const double* pi = res.probs.data() + i * k;
    size_t arg = 0;
    for (size_t j = 1; j < k; ++j) {
      if (pi[j] > pi[arg]) arg = j;  // ties keep the smallest index
    }
    if (static_cast<int>(arg) == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

void update_best_snapshot(ServerState& server, const RoundRecord& record) {
  if (record.idd && (!server.best_snapshot || *record.idd < server.best_snapshot->idd)) {
    server.best_snapshot = Snapshot{server.global_params, *record.idd, record.round};
  }
}

namespace {

long epochs_before_round(const ProtocolConfig& config, int round) {
  long total = 0;
  for (int r = 0; r < round; ++r) {
    RoundBudget b = config.round_budget(r);
    total += b.source + b.finetune + b.idd;
  }
  return total;
}

std::vector<double> aggregation_weights(const ProtocolConfig& config,
                                        const ClientState& a, const ClientState& b) {
  if (!config.sample_size_weighting) return {0.5, 0.5};
  double na = static_cast<double>(a.dataset.size());
  double nb = static_cast<double>(b.dataset.size());
  return {na / (na + nb), nb / (na + nb)};
}

}  // namespace

RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const ProtocolConfig& config, const HyperParams& hyper,
                      Rng& pair_rng, const Dataset* target_eval) {
  std::vector<size_t> sources;
  size_t target_idx = clients.size();
  for (size_t i = 0; i < clients.size(); ++i) {
    if (clients[i].role == Role::source) {
      sources.push_back(i);
    } else {
      if (target_idx != clients.size()) {
        throw ConfigError("run_round: more than one target client");
      }
      target_idx = i;
    }
  }
  if (sources.size() < 2) {
    throw ConfigError("run_round: need at least 2 source clients; use split_domain");
  }
  if (target_idx == clients.size()) {
    throw ConfigError("run_round: no target client");
  }

  auto [pi, pj] = select_pair(sources.size(), pair_rng);
  ClientState& first = clients[sources[pi]];
  ClientState& second = clients[sources[pj]];
  ClientState& target = clients[target_idx];

  // Transactional: restore on any failure below.
  ServerState server_backup = server;
  ModelParams first_backup = first.local_params;
  ModelParams second_backup = second.local_params;
  ModelParams target_backup = target.local_params;

  try {
    const int round = server.round;
    const RoundBudget budget = config.round_budget(round);
    long epoch_base = epochs_before_round(config, round);

    RoundRecord record;
    record.round = round;
    record.pair = {first.id, second.id};

    cross_initialize(server, first, second);

    // Source training: both clients share the same schedule window.
    {
      Rng rng1(derive_seed(config.rng_seed, static_cast<uint64_t>(round), 1, 0));
      Rng rng2(derive_seed(config.rng_seed, static_cast<uint64_t>(round), 1, 1));
      record.src_loss_1 = source_train(first, hyper, budget.source, epoch_base, rng1);
      record.src_loss_2 = source_train(second, hyper, budget.source, epoch_base, rng2);
    }
    long epoch_cursor = epoch_base + budget.source;

    // Server step 1: aggregate the feature generators and broadcast back.
    std::vector<double> weights = aggregation_weights(config, first, second);
    std::vector<Tensor> shared_generator =
        fedavg({&first.local_params.generator, &second.local_params.generator}, weights);
    first.local_params.generator = shared_generator;
    second.local_params.generator = shared_generator;

    if (budget.finetune > 0) {
      Rng rng1(derive_seed(config.rng_seed, static_cast<uint64_t>(round), 2, 0));
      Rng rng2(derive_seed(config.rng_seed, static_cast<uint64_t>(round), 2, 1));
      record.ft_loss_1 = fine_tune(first, hyper, budget.finetune, epoch_cursor, rng1);
      record.ft_loss_2 = fine_tune(second, hyper, budget.finetune, epoch_cursor, rng2);
      epoch_cursor += budget.finetune;
    }

    // Server step 2 + inter-domain distance minimization on the target.
    if (budget.idd > 0) {
      Rng rng_t(derive_seed(config.rng_seed, static_cast<uint64_t>(round), 3, 0));
      IddMinimizeResult idd_res = idd_minimize(
          target, shared_generator, first.local_params.head, second.local_params.head,
          server.global_params.spec, hyper, budget.idd, epoch_cursor, rng_t);
      shared_generator = std::move(idd_res.generator);
      record.idd = idd_res.mean_idd;
    }

    // Server step 3: collect the generator, aggregate the heads.
    std::vector<Tensor> shared_head =
        fedavg({&first.local_params.head, &second.local_params.head}, weights);
    server.global_params.generator = std::move(shared_generator);
    server.global_params.head = std::move(shared_head);
    target.local_params = server.global_params;

    if (target_eval) {
      record.target_accuracy = evaluate(server.global_params, *target_eval);
    }

    server.round = round + 1;
    server.history.push_back(record);
    update_best_snapshot(server, record);
    return record;
  } catch (...) {
    server = std::move(server_backup);
    first.local_params = std::move(first_backup);
    second.local_params = std::move(second_backup);
    target.local_params = std::move(target_backup);
    throw;
  }
}

ProtocolResult run_protocol(std::vector<ClientState>& clients,
                            const ProtocolConfig& config, const HyperParams& hyper,
                            const Dataset* target_eval) {
  config.validate();
  if (clients.empty()) throw ConfigError("run_protocol: no clients");
  const LayerSpec& spec = clients.front().local_params.spec;
  for (const ClientState& c : clients) {
    if (c.local_params.spec != spec) {
      throw ConfigError("run_protocol: client " + c.id + " layer spec differs");
    }
    if (c.role == Role::source && !c.dataset.labeled()) {
      throw ConfigError("run_protocol: source client " + c.id + " lacks labels");
    }
    if (c.role == Role::target && c.dataset.labeled()) {
      throw ConfigError("run_protocol: target client " + c.id + " must be unlabeled");
    }
  }

  HyperParams scheduled = hyper;
  scheduled.total_epochs = config.total_epochs();
  scheduled.validate();

  Rng master(config.rng_seed);
  ServerState server;
  server.global_params = init_params(spec, master);

  for (int r = 0; r < config.rounds; ++r) {
    run_round(server, clients, config, scheduled, master, target_eval);
  }

  ModelParams final_params =
      server.best_snapshot ? server.best_snapshot->params : server.global_params;
  return {std::move(final_params), std::move(server)};
}

std::string history_csv(const std::vector<RoundRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "round,pair,src_loss_1,src_loss_2,ft_loss_1,ft_loss_2,idd,target_acc\n";
  for (const RoundRecord& r : history) {
    out << r.round << "," << r.pair.first << "|" << r.pair.second << ","
        << r.src_loss_1 << "," << r.src_loss_2 << ",";
    if (r.ft_loss_1) out << *r.ft_loss_1;
    out << ",";
    if (r.ft_loss_2) out << *r.ft_loss_2;
    out << ",";
    if (r.idd) out << *r.idd;
    out << ",";
    if (r.target_accuracy) out << *r.target_accuracy;
    out << "\n";
  }
  return out.str();
}

}  // namespace fact
