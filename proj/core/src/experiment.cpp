#include "fact/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fact/errors.hpp"
#include "fact/idx_io.hpp"

namespace fact {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
  }
}

DomainConfig parse_domain(const json& j) {
  if (!j.is_object()) throw ConfigError("config: each domain must be an object");
  check_keys(j,
             {"name", "rotation_deg", "scale", "translation", "permutation",
              "noise_sigma", "seed", "images", "labels", "test_images", "test_labels"},
             "domain");
  DomainConfig d;
  if (!j.contains("name")) throw ConfigError("config: domain without a name");
  d.name = j.at("name").get<std::string>();
  d.rotation_deg = get_or(j, "rotation_deg", 0.0);
  d.scale = get_or(j, "scale", std::vector<double>{});
  d.translation = get_or(j, "translation", std::vector<double>{});
  d.permutation = get_or(j, "permutation", std::vector<size_t>{});
  d.noise_sigma = get_or(j, "noise_sigma", 0.0);
  d.seed = get_or(j, "seed", uint64_t{0});
  d.images = get_or(j, "images", std::string{});
  d.labels = get_or(j, "labels", std::string{});
  d.test_images = get_or(j, "test_images", std::string{});
  d.test_labels = get_or(j, "test_labels", std::string{});
  if (d.images.empty() != d.labels.empty()) {
    throw ConfigError("config: domain " + d.name + " needs both images and labels");
  }
  return d;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (domains.empty()) throw ConfigError("config: no domains");
  for (size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].name.empty()) throw ConfigError("config: empty domain name");
    for (size_t k = i + 1; k < domains.size(); ++k) {
      if (domains[i].name == domains[k].name) {
        throw ConfigError("config: duplicate domain name " + domains[i].name);
      }
    }
  }
  size_t target_hits = 0;
  for (const DomainConfig& d : domains) {
    if (d.name == target_domain) ++target_hits;
  }
  if (target_hits != 1) {
    throw ConfigError("config: target_domain must name exactly one domain");
  }
  if (domains.size() < 2) {
    throw ConfigError("config: need at least one source domain besides the target");
  }
  if (task.num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
  if (!(task.class_sigma > 0.0)) throw ConfigError("config: class_sigma must be > 0");
  if (task.samples_per_domain < static_cast<size_t>(task.num_classes)) {
    throw ConfigError("config: samples_per_domain below one per class");
  }
  if (!(task.test_fraction > 0.0 && task.test_fraction < 1.0)) {
    throw ConfigError("config: test_fraction must lie in (0,1)");
  }
  if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
  if (total_epochs < rounds) {
    throw ConfigError("config: total_epochs must be >= rounds");
  }
  HyperParams h = hyper;
  h.total_epochs = 1;  // derived later from the protocol budget
  h.validate();
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  if (clients_per_domain < 1) {
    throw ConfigError("config: clients_per_domain must be >= 1");
  }
  if (sweep) {
    if (sweep->axis != "rounds" && sweep->axis != "clients" && sweep->axis != "sources") {
      throw ConfigError("config: sweep axis must be rounds, clients or sources");
    }
    if (sweep->axis != "sources" && sweep->values.empty()) {
      throw ConfigError("config: sweep values must be non-empty");
    }
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(j,
             {"schema_version", "name", "task", "domains", "target_domain", "variant",
              "protocol", "hyper", "seeds", "repeats", "clients_per_domain",
              "standardize_features", "sample_size_weighting", "sweep"},
             "top level");
  if (!j.contains("schema_version")) {
    throw ConfigError("config: missing schema_version");
  }
  int version = j.at("schema_version").get<int>();
  if (version != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(version));
  }

  ExperimentConfig cfg;
  cfg.name = get_or(j, "name", std::string{"run"});

  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t, {"num_classes", "class_sigma", "samples_per_domain", "test_fraction"},
               "task");
    cfg.task.num_classes = get_or(t, "num_classes", cfg.task.num_classes);
    cfg.task.class_sigma = get_or(t, "class_sigma", cfg.task.class_sigma);
    cfg.task.samples_per_domain =
        get_or(t, "samples_per_domain", cfg.task.samples_per_domain);
    cfg.task.test_fraction = get_or(t, "test_fraction", cfg.task.test_fraction);
  }

  if (!j.contains("domains")) throw ConfigError("config: missing domains");
  for (const json& jd : j.at("domains")) cfg.domains.push_back(parse_domain(jd));
  if (!j.contains("target_domain")) throw ConfigError("config: missing target_domain");
  cfg.target_domain = j.at("target_domain").get<std::string>();
  cfg.variant = parse_variant(get_or(j, "variant", std::string{"fact"}));

  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    check_keys(p, {"rounds", "total_epochs"}, "protocol");
    cfg.rounds = get_or(p, "rounds", cfg.rounds);
    cfg.total_epochs = get_or(p, "total_epochs", cfg.total_epochs);
  }

  if (j.contains("hyper")) {
    const json& h = j.at("hyper");
    check_keys(h, {"eta0", "batch_size", "momentum", "weight_decay"}, "hyper");
    cfg.hyper.eta0 = get_or(h, "eta0", cfg.hyper.eta0);
    cfg.hyper.batch_size = get_or(h, "batch_size", cfg.hyper.batch_size);
    cfg.hyper.momentum = get_or(h, "momentum", cfg.hyper.momentum);
    cfg.hyper.weight_decay = get_or(h, "weight_decay", cfg.hyper.weight_decay);
  }

  if (!j.contains("seeds")) throw ConfigError("config: missing seeds");
  cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  if (j.contains("repeats")) {
    size_t repeats = j.at("repeats").get<size_t>();
    if (repeats != cfg.seeds.size()) {
      throw ConfigError("config: repeats (" + std::to_string(repeats) +
                        ") must equal the number of seeds (" +
                        std::to_string(cfg.seeds.size()) + ")");
    }
  }
  cfg.clients_per_domain = get_or(j, "clients_per_domain", size_t{1});
  cfg.standardize = get_or(j, "standardize_features", false);
  cfg.sample_size_weighting = get_or(j, "sample_size_weighting", false);

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"axis", "values"}, "sweep");
    SweepConfig sw;
    if (!s.contains("axis")) throw ConfigError("config: sweep without axis");
    sw.axis = s.at("axis").get<std::string>();
    sw.values = get_or(s, "values", std::vector<long>{});
    cfg.sweep = sw;
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["name"] = cfg.name;
  j["task"] = {{"num_classes", cfg.task.num_classes},
               {"class_sigma", cfg.task.class_sigma},
               {"samples_per_domain", cfg.task.samples_per_domain},
               {"test_fraction", cfg.task.test_fraction}};
  json domains = json::array();
  for (const DomainConfig& d : cfg.domains) {
    json jd = {{"name", d.name},
               {"rotation_deg", d.rotation_deg},
               {"scale", d.scale},
               {"translation", d.translation},
               {"permutation", d.permutation},
               {"noise_sigma", d.noise_sigma},
               {"seed", d.seed}};
    if (d.is_idx()) {
      jd["images"] = d.images;
      jd["labels"] = d.labels;
      jd["test_images"] = d.test_images;
      jd["test_labels"] = d.test_labels;
    }
    domains.push_back(jd);
  }
  j["domains"] = domains;
  j["target_domain"] = cfg.target_domain;
  j["variant"] = variant_name(cfg.variant);
  j["protocol"] = {{"rounds", cfg.rounds}, {"total_epochs", cfg.total_epochs}};
  j["hyper"] = {{"eta0", cfg.hyper.eta0},
                {"batch_size", cfg.hyper.batch_size},
                {"momentum", cfg.hyper.momentum},
                {"weight_decay", cfg.hyper.weight_decay}};
  j["seeds"] = cfg.seeds;
  j["clients_per_domain"] = cfg.clients_per_domain;
  j["standardize_features"] = cfg.standardize;
  j["sample_size_weighting"] = cfg.sample_size_weighting;
  if (cfg.sweep) {
    j["sweep"] = {{"axis", cfg.sweep->axis}, {"values", cfg.sweep->values}};
  }
  return j.dump();  // object keys are emitted sorted: canonical
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  std::string canon = config_to_json(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<RoundBudget> make_round_budgets(long total_epochs, int rounds) {
  if (rounds < 1) throw ConfigError("budget: rounds must be >= 1");
  if (total_epochs < rounds) {
    throw ConfigError("budget: total epochs " + std::to_string(total_epochs) +
                      " below one per round for " + std::to_string(rounds) + " rounds");
  }
  long base = total_epochs / rounds;
  long last = total_epochs - base * (rounds - 1);
  std::vector<RoundBudget> budgets(static_cast<size_t>(rounds));
  for (int r = 0; r < rounds; ++r) {
    int e = static_cast<int>(r + 1 == rounds ? last : base);
    budgets[static_cast<size_t>(r)] = RoundBudget{e, e, e};
  }
  return budgets;
}

namespace {

struct BuiltData {
  std::vector<Dataset> source_clients;
  Dataset target_train;  // unlabeled
  Dataset target_test;   // labeled
};

constexpr uint64_t kDomainStream = 0x0d07a117;
constexpr uint64_t kSplitStream = 0x051d0117;
constexpr uint64_t kShardStream = 0x05a4d517;

Dataset build_synthetic(const ExperimentConfig& cfg, const DomainConfig& dc,
                        uint64_t run_seed, bool is_target) {
  DomainSpec spec;
  spec.name = dc.name;
  spec.base = circular_base_task(static_cast<size_t>(cfg.task.num_classes),
                                 cfg.task.class_sigma);
  spec.transform.rotation = dc.rotation_deg * std::numbers::pi / 180.0;
  spec.transform.scale = dc.scale;
  spec.transform.translation = dc.translation;
  spec.transform.permutation = dc.permutation;
  spec.noise_sigma = dc.noise_sigma;
  // The target also carries its held-out test samples; sources train on all.
  spec.n_samples =
      is_target ? static_cast<size_t>(std::llround(
                      static_cast<double>(cfg.task.samples_per_domain) /
                      (1.0 - cfg.task.test_fraction)))
                : cfg.task.samples_per_domain;
  spec.seed = derive_seed(run_seed, dc.seed, kDomainStream);
  return make_domain(spec);
}

BuiltData build_data(const ExperimentConfig& cfg, uint64_t run_seed) {
  BuiltData out;
  for (const DomainConfig& dc : cfg.domains) {
    const bool is_target = dc.name == cfg.target_domain;
    Dataset ds;
    if (dc.is_idx()) {
      ds = load_idx(dc.images, dc.labels);
      ds.domain_tag = dc.name;
    } else {
      ds = build_synthetic(cfg, dc, run_seed, is_target);
    }
    if (cfg.standardize) standardize_features(ds);

    if (is_target) {
      if (dc.is_idx()) {
        if (dc.test_images.empty() || dc.test_labels.empty()) {
          throw ConfigError("config: idx target domain " + dc.name +
                            " needs test_images/test_labels");
        }
        out.target_test = load_idx(dc.test_images, dc.test_labels);
        out.target_test.domain_tag = dc.name + "/test";
        if (cfg.standardize) standardize_features(out.target_test);
        out.target_train = ds.without_labels();
        out.target_train.domain_tag = dc.name + "/train";
      } else {
        Rng rng(derive_seed(run_seed, dc.seed, kSplitStream));
        auto [train, test] = train_test_split(ds, cfg.task.test_fraction, rng);
        out.target_train = train.without_labels();
        out.target_test = std::move(test);
      }
    } else {
      if (cfg.clients_per_domain > 1) {
        Rng rng(derive_seed(run_seed, dc.seed, kShardStream));
        for (Dataset& shard : split_domain(ds, cfg.clients_per_domain, rng)) {
          out.source_clients.push_back(std::move(shard));
        }
      } else {
        out.source_clients.push_back(std::move(ds));
      }
    }
  }
  if (out.source_clients.empty()) {
    throw ConfigError("config: no source domains");
  }
  return out;
}

struct SingleRun {
  ResultRow row;
  RunArtifacts artifacts;
};

SingleRun run_single(const ExperimentConfig& cfg, uint64_t run_seed,
                     const std::string& label, const std::string& fingerprint) {
  auto t0 = std::chrono::steady_clock::now();
  std::string stage = "data";
  try {
    BuiltData data = build_data(cfg, run_seed);

    stage = "protocol";
    size_t input_dim = data.source_clients.front().dim();
    int num_classes = data.target_test.num_classes;
    for (const Dataset& ds : data.source_clients) {
      num_classes = std::max(num_classes, ds.num_classes);
      if (ds.dim() != input_dim || data.target_train.dim() != input_dim) {
        throw ConfigError("config: feature dimensions differ across domains");
      }
    }
    LayerSpec spec = make_mlp_spec(input_dim, static_cast<size_t>(num_classes));

    std::vector<ClientState> clients;
    for (Dataset& ds : data.source_clients) {
      ds.num_classes = num_classes;
      clients.push_back(ClientState{ds.domain_tag, Role::source, ds,
                                    zero_params(spec), ds.domain_tag});
    }
    clients.push_back(ClientState{cfg.target_domain, Role::target, data.target_train,
                                  zero_params(spec), cfg.target_domain});

    ProtocolConfig pc;
    pc.rounds = cfg.rounds;
    pc.per_round = make_round_budgets(cfg.total_epochs, cfg.rounds);
    pc.variant = cfg.variant;
    pc.rng_seed = run_seed;
    pc.sample_size_weighting = cfg.sample_size_weighting;

    ProtocolResult res = run_protocol(clients, pc, cfg.hyper, &data.target_test);

    stage = "evaluate";
    SingleRun out;
    out.row.config_label = label;
    out.row.fingerprint = fingerprint;
    out.row.seed = run_seed;
    out.row.target_accuracy = evaluate(res.final_params, data.target_test);
    if (res.server.best_snapshot) {
      out.row.best_idd = res.server.best_snapshot->idd;
      out.row.selected_round = res.server.best_snapshot->round;
    } else {
      out.row.selected_round = cfg.rounds - 1;
    }
    for (const RoundRecord& r : res.server.history) {
      if (r.idd) out.row.idd_trace.push_back(*r.idd);
      if (r.target_accuracy) out.row.acc_trace.push_back(*r.target_accuracy);
    }
    out.row.wall_time_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    std::vector<std::string> client_ids;
    for (const ClientState& c : clients) client_ids.push_back(c.id);
    out.artifacts = RunArtifacts{label, run_seed, std::move(client_ids),
                                 std::move(res.server.history),
                                 std::move(res.final_params)};
    return out;
  } catch (const std::exception& e) {
    throw std::runtime_error("[seed " + std::to_string(run_seed) + ", stage " + stage +
                             "] " + e.what());
  }
}

SummaryRow summarize(const std::string& label, const std::string& fingerprint,
                     const std::vector<const ResultRow*>& rows) {
  SummaryRow s;
  s.config_label = label;
  s.fingerprint = fingerprint;
  s.n = rows.size();
  double sum = 0.0;
  for (const ResultRow* r : rows) sum += r->target_accuracy;
  s.acc_mean = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
  if (rows.size() > 1) {
    double ss = 0.0;
    for (const ResultRow* r : rows) {
      double d = r->target_accuracy - s.acc_mean;
      ss += d * d;
    }
    s.acc_std = std::sqrt(ss / static_cast<double>(rows.size() - 1));
  }
  return s;
}

// Runs every (config, seed) task on a small worker pool; rows and artifacts
// are assembled in task order so the output is independent of scheduling.
ResultTable run_many(const std::vector<ExperimentConfig>& configs, ArtifactSink sink) {
  struct Task {
    const ExperimentConfig* cfg;
    std::string label;
    std::string fingerprint;
    uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const ExperimentConfig& cfg : configs) {
    cfg.validate();
    std::string fp = config_fingerprint(cfg);
    for (uint64_t seed : cfg.seeds) tasks.push_back(Task{&cfg, cfg.name, fp, seed});
  }

  std::vector<std::optional<SingleRun>> slots(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<size_t> next{0};
  size_t workers = std::min(worker_count(), std::max<size_t>(tasks.size(), 1));

  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        slots[i] = run_single(*tasks[i].cfg, tasks[i].seed, tasks[i].label,
                              tasks[i].fingerprint);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ResultTable table;
  for (std::optional<SingleRun>& s : slots) {
    table.rows.push_back(std::move(s->row));
    if (sink) sink(s->artifacts);
  }
  size_t offset = 0;
  for (const ExperimentConfig& cfg : configs) {
    std::vector<const ResultRow*> rows;
    for (size_t k = 0; k < cfg.seeds.size(); ++k) rows.push_back(&table.rows[offset + k]);
    table.summaries.push_back(
        summarize(cfg.name, config_fingerprint(cfg), rows));
    offset += cfg.seeds.size();
  }
  return table;
}

}  // namespace

size_t worker_count() {
  if (const char* env = std::getenv("FACT_WORKERS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<size_t>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

ResultTable run_experiment(const ExperimentConfig& cfg, ArtifactSink sink) {
  return run_many({cfg}, std::move(sink));
}

ResultTable baseline_source_only(const ExperimentConfig& cfg, ArtifactSink sink) {
  ExperimentConfig base = cfg;
  base.variant = Variant::source_only;
  if (base.name.find("source-only") == std::string::npos) {
    base.name += "-source-only";
  }
  return run_many({base}, std::move(sink));
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg,
                                           const std::string& axis) {
  cfg.validate();
  std::vector<ExperimentConfig> out;
  if (axis == "rounds") {
    if (!cfg.sweep || cfg.sweep->values.empty()) {
      throw ConfigError("sweep: rounds axis needs values");
    }
    for (long v : cfg.sweep->values) {
      ExperimentConfig c = cfg;
      c.rounds = static_cast<int>(v);
      c.name = "rounds=" + std::to_string(v);
      c.sweep.reset();
      c.validate();
      out.push_back(std::move(c));
    }
  } else if (axis == "clients") {
    if (!cfg.sweep || cfg.sweep->values.empty()) {
      throw ConfigError("sweep: clients axis needs values");
    }
    for (long v : cfg.sweep->values) {
      ExperimentConfig c = cfg;
      c.clients_per_domain = static_cast<size_t>(v);
      c.name = "clients=" + std::to_string(v);
      c.sweep.reset();
      c.validate();
      out.push_back(std::move(c));
    }
  } else if (axis == "sources") {
    std::vector<const DomainConfig*> sources;
    const DomainConfig* target = nullptr;
    for (const DomainConfig& d : cfg.domains) {
      if (d.name == cfg.target_domain) {
        target = &d;
      } else {
        sources.push_back(&d);
      }
    }
    size_t n = sources.size();
    // Subsets ordered by size, then by index combination.
    for (size_t size = 1; size <= n; ++size) {
      std::vector<size_t> combo(size);
      for (size_t i = 0; i < size; ++i) combo[i] = i;
      while (true) {
        ExperimentConfig c = cfg;
        c.domains.clear();
        std::string label = "sources=";
        for (size_t i = 0; i < size; ++i) {
          c.domains.push_back(*sources[combo[i]]);
          if (i) label += "+";
          label += sources[combo[i]]->name;
        }
        c.domains.push_back(*target);
        // A single selected source is distributed across two clients so the
        // pair-sampling step stays applicable.
        if (size == 1 && c.clients_per_domain < 2) c.clients_per_domain = 2;
        c.name = label;
        c.sweep.reset();
        c.validate();
        out.push_back(std::move(c));

        // Next combination.
        size_t k = size;
        while (k > 0 && combo[k - 1] == n - size + (k - 1)) --k;
        if (k == 0) break;
        ++combo[k - 1];
        for (size_t i = k; i < size; ++i) combo[i] = combo[i - 1] + 1;
      }
    }
  } else {
    throw ConfigError("sweep: unknown axis '" + axis + "' (rounds | clients | sources)");
  }
  return out;
}

ResultTable sweep_sources(const ExperimentConfig& cfg, ArtifactSink sink) {
  return run_many(expand_sweep(cfg, "sources"), std::move(sink));
}

ResultTable sweep_rounds(const ExperimentConfig& cfg, ArtifactSink sink) {
  return run_many(expand_sweep(cfg, "rounds"), std::move(sink));
}

ResultTable sweep_client_splits(const ExperimentConfig& cfg, ArtifactSink sink) {
  return run_many(expand_sweep(cfg, "clients"), std::move(sink));
}

}  // namespace fact
