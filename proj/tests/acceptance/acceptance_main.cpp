// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "fact/errors.hpp"
#include "fact/experiment.hpp"
#include "fact/federation.hpp"
#include "fact/idx_io.hpp"
#include "fact/nn.hpp"
#include "fact/optim.hpp"
#include "gradient_check.hpp"
#include "test_util.hpp"

using namespace fact;
using fact::testing::finite_difference_check;
using fact::testing::make_blobs;
using fact::testing::make_source_client;
using fact::testing::make_target_client;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

// ---- criterion 1: gradient oracle ------------------------------------------

LayerSpec random_small_spec(Rng& rng) {
  size_t d = 1 + rng.uniform(4);
  size_t k = 2 + rng.uniform(3);
  LayerSpec spec;
  size_t in = d;
  size_t hidden_layers = rng.uniform(3);
  for (size_t i = 0; i < hidden_layers; ++i) {
    size_t h = 2 + rng.uniform(4);
    spec.generator.push_back(LayerDesc::Linear(in, h));
    if (rng.uniform(2)) spec.generator.push_back(LayerDesc::Relu());
    in = h;
  }
  spec.head.push_back(LayerDesc::Linear(in, k));
  spec.head.push_back(LayerDesc::Softmax());
  spec.validate();
  return spec;
}

void criterion_gradient_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(18131);
  double worst = 0.0;
  size_t nets = 0;
  const double margin = 1e-3;  // stay clear of relu/L1 kinks

  auto random_batch = [&rng](size_t n, size_t d) {
    Tensor x({n, d});
    for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform_real(-2.0, 2.0);
    return x;
  };

  for (int trial = 0; trial < 80; ++trial) {
    LayerSpec spec;
    ModelParams p;
    Tensor x;
    do {
      spec = random_small_spec(rng);
      p = init_params(spec, rng);
      x = random_batch(1 + rng.uniform(5), spec.input_dim());
    } while (fact::testing::kink_margin(p, x, nullptr) < margin);
    std::vector<int> labels(x.rows());
    for (int& y : labels) y = static_cast<int>(rng.uniform(spec.num_classes()));

    BackwardSpec bspec;
    bspec.labels = labels;
    int mask = trial % 4;
    bspec.wrt_generator = mask != 1 && !spec.generator.empty();
    bspec.wrt_head = mask != 2 || !bspec.wrt_generator;
    worst = std::max(worst, finite_difference_check(p, x, bspec, trial).max_rel_err);
    ++nets;
  }
  for (int trial = 0; trial < 30; ++trial) {
    LayerSpec spec;
    ModelParams p, rival;
    Tensor x;
    do {
      spec = random_small_spec(rng);
      p = init_params(spec, rng);
      rival = init_params(spec, rng);
      x = random_batch(1 + rng.uniform(4), spec.input_dim());
    } while (fact::testing::kink_margin(p, x, &rival) < margin);

    BackwardSpec bspec;
    bspec.loss = BackwardSpec::Loss::idd;
    bspec.rival = &rival;
    bspec.wrt_generator = !spec.generator.empty();
    bspec.wrt_head = spec.generator.empty() || trial % 2 == 0;
    worst = std::max(worst, finite_difference_check(p, x, bspec, trial).max_rel_err);
    ++nets;
  }

  double secs = elapsed_s(t0);
  bool pass = nets >= 100 && worst < 1e-4 && secs < 30.0;
  report(1, "gradient oracle", pass,
         std::to_string(nets) + " nets, max rel err " + fmt(worst, 8) + ", " +
             fmt(secs, 1) + " s");
}

// ---- criterion 2: protocol invariants --------------------------------------

void criterion_protocol_invariants() {
  auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string why;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      why = what;
    }
  };

  LayerSpec spec = make_mlp_spec(2, 3, {8});
  Rng rng(5);

  // Cross-initialization bitwise equality.
  {
    ServerState server;
    server.global_params = init_params(spec, rng);
    ClientState a = make_source_client("a", make_blobs(3, 30, 1), spec);
    ClientState b = make_source_client("b", make_blobs(3, 30, 2), spec);
    cross_initialize(server, a, b);
    expect(a.local_params == server.global_params &&
               b.local_params == server.global_params,
           "cross-init equality");
  }

  // FedAvg equal weights == arithmetic mean within 1 ulp.
  {
    ModelParams a = init_params(spec, rng);
    ModelParams b = init_params(spec, rng);
    std::vector<Tensor> avg = fedavg({&a.generator, &b.generator}, {0.5, 0.5});
    for (size_t t = 0; t < avg.size(); ++t) {
      for (size_t i = 0; i < avg[t].size(); ++i) {
        double mean = (a.generator[t][i] + b.generator[t][i]) / 2.0;
        if (ulp_distance(avg[t][i], mean) > 1) expect(false, "fedavg exactness");
      }
    }
  }

  // Partition freezing, bitwise.
  {
    ClientState c = make_source_client("c", make_blobs(3, 60, 3), spec);
    Rng init_rng(9);
    c.local_params = init_params(spec, init_rng);
    HyperParams hyper;
    hyper.total_epochs = 4;
    uint64_t gen_hash = params_hash(c.local_params.generator);
    Rng train_rng(4);
    fine_tune(c, hyper, 2, 0, train_rng);
    expect(params_hash(c.local_params.generator) == gen_hash,
           "fine_tune froze the generator");

    ModelParams m1 = init_params(spec, init_rng);
    ModelParams m2 = init_params(spec, init_rng);
    ClientState t = make_target_client("t", make_blobs(3, 60, 4, 30.0), spec);
    uint64_t h1 = params_hash(m1.head), h2 = params_hash(m2.head);
    Rng idd_rng(6);
    idd_minimize(t, m1.generator, m1.head, m2.head, spec, hyper, 2, 0, idd_rng);
    expect(params_hash(m1.head) == h1 && params_hash(m2.head) == h2,
           "idd_minimize froze the heads");
  }

  // Min-idd argmin selection with earliest-round tie-break.
  {
    ServerState server;
    Rng sel_rng(7);
    auto rec = [](double idd, int round) {
      RoundRecord r;
      r.round = round;
      r.idd = idd;
      return r;
    };
    server.global_params = init_params(spec, sel_rng);
    update_best_snapshot(server, rec(0.5, 0));
    server.global_params = init_params(spec, sel_rng);
    ModelParams expected = server.global_params;
    update_best_snapshot(server, rec(0.2, 1));
    server.global_params = init_params(spec, sel_rng);
    update_best_snapshot(server, rec(0.3, 2));
    server.global_params = init_params(spec, sel_rng);
    update_best_snapshot(server, rec(0.2, 3));
    expect(server.best_snapshot && server.best_snapshot->round == 1 &&
               server.best_snapshot->params == expected,
           "min-idd argmin with earliest tie-break");
  }

  // Full-run determinism per seed.
  {
    auto build = [&spec]() {
      std::vector<ClientState> clients;
      clients.push_back(make_source_client("s0", make_blobs(3, 48, 100, 0.0), spec));
      clients.push_back(make_source_client("s1", make_blobs(3, 48, 101, 15.0), spec));
      clients.push_back(make_source_client("s2", make_blobs(3, 48, 102, 345.0), spec));
      clients.push_back(make_target_client("t", make_blobs(3, 48, 103, 40.0), spec));
      return clients;
    };
    ProtocolConfig pc;
    pc.rounds = 3;
    pc.rng_seed = 13;
    HyperParams hyper;
    hyper.batch_size = 16;
    auto c1 = build();
    auto c2 = build();
    ProtocolResult r1 = run_protocol(c1, pc, hyper);
    ProtocolResult r2 = run_protocol(c2, pc, hyper);
    expect(r1.final_params == r2.final_params && r1.server.history == r2.server.history,
           "seeded determinism");
  }

  double secs = elapsed_s(t0);
  if (secs >= 60.0) expect(false, "runtime budget");
  report(2, "protocol invariants", pass,
         pass ? "all invariants hold, " + fmt(secs, 1) + " s" : why);
}

// ---- criterion 3: identical-heads fixed point -------------------------------

void criterion_identical_heads() {
  LayerSpec spec = make_mlp_spec(2, 3);
  Rng rng(21);
  ModelParams model = init_params(spec, rng);
  ClientState target = make_target_client("t", make_blobs(3, 90, 8, 45.0), spec);

  HyperParams hyper;
  hyper.weight_decay = 0.0;
  hyper.total_epochs = 1;
  uint64_t gen_hash = params_hash(model.generator);
  Rng idd_rng(3);
  IddMinimizeResult res = idd_minimize(target, model.generator, model.head, model.head,
                                       spec, hyper, 1, 0, idd_rng);
  bool pass = res.mean_idd == 0.0 && params_hash(res.generator) == gen_hash;
  report(3, "identical-heads fixed point", pass,
         "idd=" + fmt(res.mean_idd, 12) + ", generator " +
             (params_hash(res.generator) == gen_hash ? "bitwise unchanged" : "changed"));
}

// ---- criteria 4-8: scaled study replications --------------------------------

ExperimentConfig study_config() {
  ExperimentConfig cfg;
  cfg.name = "fact";
  cfg.task.num_classes = 3;
  cfg.task.class_sigma = 0.35;
  cfg.task.samples_per_domain = 600;
  cfg.task.test_fraction = 0.5;
  cfg.domains = {
      DomainConfig{.name = "rot000", .rotation_deg = 0.0, .seed = 11},
      DomainConfig{.name = "rot020", .rotation_deg = 20.0, .seed = 12},
      DomainConfig{.name = "rot340", .rotation_deg = 340.0, .seed = 13},
      DomainConfig{.name = "rot060", .rotation_deg = 60.0, .seed = 14},
  };
  cfg.target_domain = "rot060";
  cfg.variant = Variant::fact;
  cfg.rounds = 30;
  cfg.total_epochs = 120;
  cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return cfg;
}

double mean_accuracy(const ResultTable& t) { return t.summaries.at(0).acc_mean; }
double std_accuracy(const ResultTable& t) { return t.summaries.at(0).acc_std; }

void run_studies() {
  ExperimentConfig cfg = study_config();

  // Criterion 4: baseline first, then the adaptation gain.
  auto t0 = std::chrono::steady_clock::now();
  ResultTable base = baseline_source_only(cfg);
  double base_acc = mean_accuracy(base);
  std::printf("  source-only baseline accuracy: %s +- %s\n", fmt(base_acc).c_str(),
              fmt(std_accuracy(base)).c_str());

  ResultTable fact_table = run_experiment(cfg);
  double fact_acc = mean_accuracy(fact_table);
  std::printf("  fact accuracy:                 %s +- %s\n", fmt(fact_acc).c_str(),
              fmt(std_accuracy(fact_table)).c_str());
  double secs = elapsed_s(t0);
  report(4, "adaptation gain over source-only", fact_acc - base_acc >= 0.08,
         "fact " + fmt(fact_acc) + " vs baseline " + fmt(base_acc) + ", gain " +
             fmt(fact_acc - base_acc) + ", " + fmt(secs, 1) + " s (budget 300 s: " +
             (secs < 300.0 ? "ok" : "exceeded") + ")");

  // Criterion 5: fine-tuning ablation direction.
  ExperimentConfig nf = cfg;
  nf.variant = Variant::fact_nf;
  nf.name = "fact-nf";
  ResultTable nf_table = run_experiment(nf);
  double nf_acc = mean_accuracy(nf_table);
  report(5, "fine-tuning ablation (fact vs fact-nf)", fact_acc >= nf_acc - 0.01,
         "fact " + fmt(fact_acc) + " vs fact-nf " + fmt(nf_acc));

  // Criterion 6: client-split robustness at 5 shards per source.
  ExperimentConfig split = cfg;
  split.clients_per_domain = 5;
  split.name = "clients=5";
  ResultTable split_table = run_experiment(split);
  double split_acc = mean_accuracy(split_table);
  report(6, "client-split robustness", std::abs(split_acc - fact_acc) < 0.05,
         "unsplit " + fmt(fact_acc) + " vs 5 shards " + fmt(split_acc) + ", delta " +
             fmt(std::abs(split_acc - fact_acc)));

  // Criterion 7: communication restriction, R in {6, 30} at 120 total epochs.
  ExperimentConfig r6 = cfg;
  r6.rounds = 6;
  r6.name = "rounds=6";
  ResultTable r6_table = run_experiment(r6);
  double r6_acc = mean_accuracy(r6_table);
  double r6_std = std_accuracy(r6_table);
  bool within = std::abs(r6_acc - fact_acc) < 0.06;
  bool not_worse = fact_acc >= r6_acc - r6_std;
  report(7, "communication restriction", within && not_worse,
         "R=6 " + fmt(r6_acc) + " +- " + fmt(r6_std) + " vs R=30 " + fmt(fact_acc) +
             ", delta " + fmt(std::abs(r6_acc - fact_acc)));

  // Criterion 8: min-idd selection close to the per-run best round.
  double gap_sum = 0.0, gap_max = 0.0;
  for (const ResultRow& row : fact_table.rows) {
    double best = 0.0;
    for (double a : row.acc_trace) best = std::max(best, a);
    double gap = best - row.target_accuracy;
    gap_sum += gap;
    gap_max = std::max(gap_max, gap);
  }
  double gap_mean = gap_sum / static_cast<double>(fact_table.rows.size());
  report(8, "min-idd selection quality", gap_mean <= 0.03,
         "mean gap to best round " + fmt(gap_mean) + ", max " + fmt(gap_max));
}

// ---- criterion 9: idx fixture round trip ------------------------------------

void criterion_idx() {
  const std::vector<unsigned char> images = {
      0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02,
      0x00, 0x00, 0x00, 0x02, 0x00, 0x40, 0x80, 0xff, 0xff, 0x00, 0x00, 0xff};
  const std::vector<unsigned char> labels = {0x00, 0x00, 0x08, 0x01, 0x00,
                                             0x00, 0x00, 0x02, 0x01, 0x00};
  auto write = [](const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  };
  std::string img = "acceptance_images.idx", lab = "acceptance_labels.idx";
  write(img, images);
  write(lab, labels);

  bool pass = true;
  std::string why = "fixture parsed bit-exactly, bad magic rejected";
  try {
    Dataset ds = load_idx(img, lab);
    pass = pass && ds.size() == 2 && ds.dim() == 4;
    pass = pass && ds.labels == std::vector<int>{1, 0};
    pass = pass && ds.features.at(0, 0) == 0.0 && ds.features.at(0, 3) == 1.0;
    pass = pass && ds.features.at(0, 1) == 64.0 / 255.0;
    pass = pass && ds.features.at(0, 2) == 128.0 / 255.0;
    pass = pass && ds.features.at(1, 0) == 1.0 && ds.features.at(1, 1) == 0.0;

    std::vector<unsigned char> bad = images;
    bad[3] = 0x01;
    write(img, bad);
    try {
      load_idx(img, lab);
      pass = false;
      why = "bad magic accepted";
    } catch (const FormatError&) {
    }
  } catch (const std::exception& e) {
    pass = false;
    why = e.what();
  }
  std::remove(img.c_str());
  std::remove(lab.c_str());
  report(9, "idx fixture round-trip", pass, why);
}

}  // namespace

int main() {
  std::printf("fact acceptance suite\n");
  criterion_gradient_oracle();
  criterion_protocol_invariants();
  criterion_identical_heads();
  run_studies();
  criterion_idx();
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
