#include <doctest.h>

#include <algorithm>
#include <limits>

#include "fact/errors.hpp"
#include "fact/federation.hpp"
#include "test_util.hpp"

using namespace fact;
using namespace fact::testing;

namespace {

struct Fixture {
  LayerSpec spec = make_mlp_spec(2, 3, {8});
  std::vector<ClientState> clients;

  explicit Fixture(int n_sources = 3) {
    for (int i = 0; i < n_sources; ++i) {
      Dataset ds = make_blobs(3, 48, 100 + uint64_t(i), 10.0 * i, 0.3,
                              "src" + std::to_string(i));
      clients.push_back(make_source_client("src" + std::to_string(i), ds, spec));
    }
    Dataset t = make_blobs(3, 48, 999, 45.0, 0.3, "tgt");
    clients.push_back(make_target_client("tgt", t, spec));
  }

  ProtocolConfig config(int rounds, Variant variant = Variant::fact) const {
    ProtocolConfig pc;
    pc.rounds = rounds;
    pc.epochs = RoundBudget{1, 1, 1};
    pc.variant = variant;
    pc.rng_seed = 42;
    return pc;
  }

  HyperParams hyper() const {
    HyperParams h;
    h.eta0 = 0.02;
    h.batch_size = 16;
    h.total_epochs = 1;  // run_protocol overrides from the budget
    return h;
  }
};

}  // namespace

TEST_CASE("two identical protocol runs agree bitwise") {
  Fixture f1, f2;
  ProtocolConfig pc = f1.config(3);
  ProtocolResult r1 = run_protocol(f1.clients, pc, f1.hyper());
  ProtocolResult r2 = run_protocol(f2.clients, pc, f2.hyper());

  CHECK(r1.final_params == r2.final_params);
  REQUIRE(r1.server.history.size() == 3);
  CHECK(r1.server.history == r2.server.history);
  CHECK(r1.server.global_params == r2.server.global_params);
}

TEST_CASE("a round updates the global head to the mean of the tuned heads") {
  Fixture f;
  ProtocolConfig pc = f.config(1);
  HyperParams hyper = f.hyper();
  hyper.total_epochs = pc.total_epochs();

  Rng master(pc.rng_seed);
  ServerState server;
  server.global_params = init_params(f.spec, master);
  RoundRecord rec = run_round(server, f.clients, pc, hyper, master);

  // Locate the trained pair by id.
  const ClientState* first = nullptr;
  const ClientState* second = nullptr;
  for (const ClientState& c : f.clients) {
    if (c.id == rec.pair.first) first = &c;
    if (c.id == rec.pair.second) second = &c;
  }
  REQUIRE(first != nullptr);
  REQUIRE(second != nullptr);
  std::vector<Tensor> expected =
      fedavg({&first->local_params.head, &second->local_params.head}, {0.5, 0.5});
  CHECK(server.global_params.head == expected);
  CHECK(rec.ft_loss_1.has_value());
  CHECK(rec.idd.has_value());
  CHECK(*rec.idd >= 0.0);
  CHECK(server.round == 1);
}

TEST_CASE("fact-nf rounds skip fine-tuning") {
  Fixture f;
  ProtocolConfig pc = f.config(2, Variant::fact_nf);
  ProtocolResult res = run_protocol(f.clients, pc, f.hyper());
  for (const RoundRecord& r : res.server.history) {
    CHECK_FALSE(r.ft_loss_1.has_value());
    CHECK_FALSE(r.ft_loss_2.has_value());
    CHECK(r.idd.has_value());
  }
}

TEST_CASE("source-only rounds skip idd and select the final round") {
  Fixture f;
  ProtocolConfig pc = f.config(2, Variant::source_only);
  ProtocolResult res = run_protocol(f.clients, pc, f.hyper());
  for (const RoundRecord& r : res.server.history) {
    CHECK_FALSE(r.idd.has_value());
    CHECK(r.ft_loss_1.has_value());
  }
  CHECK_FALSE(res.server.best_snapshot.has_value());
  CHECK(res.final_params == res.server.global_params);
}

TEST_CASE("min-idd snapshot matches the history minimum") {
  Fixture f;
  ProtocolConfig pc = f.config(4);
  ProtocolResult res = run_protocol(f.clients, pc, f.hyper());
  REQUIRE(res.server.best_snapshot.has_value());
  double min_idd = std::numeric_limits<double>::infinity();
  int min_round = -1;
  for (const RoundRecord& r : res.server.history) {
    REQUIRE(r.idd.has_value());
    if (*r.idd < min_idd) {
      min_idd = *r.idd;
      min_round = r.round;
    }
  }
  CHECK(res.server.best_snapshot->idd == min_idd);
  CHECK(res.server.best_snapshot->round == min_round);
  CHECK(res.final_params == res.server.best_snapshot->params);
}

TEST_CASE("single-round protocol snapshots that round") {
  Fixture f;
  ProtocolConfig pc = f.config(1);
  ProtocolResult res = run_protocol(f.clients, pc, f.hyper());
  REQUIRE(res.server.best_snapshot.has_value());
  CHECK(res.server.best_snapshot->round == 0);
  CHECK(res.final_params == res.server.best_snapshot->params);
}

TEST_CASE("snapshot selection over an injected history") {
  LayerSpec spec = make_mlp_spec(2, 2);
  ServerState server;
  Rng rng(1);

  auto record_with = [&](double idd, int round) {
    RoundRecord r;
    r.round = round;
    r.idd = idd;
    return r;
  };

  server.global_params = init_params(spec, rng);
  ModelParams round0 = server.global_params;
  update_best_snapshot(server, record_with(0.5, 0));
  CHECK(server.best_snapshot->round == 0);

  server.global_params = init_params(spec, rng);
  ModelParams round1 = server.global_params;
  update_best_snapshot(server, record_with(0.2, 1));
  CHECK(server.best_snapshot->round == 1);

  server.global_params = init_params(spec, rng);
  update_best_snapshot(server, record_with(0.3, 2));
  CHECK(server.best_snapshot->round == 1);  // 0.2 still the minimum

  // Tie resolves toward the earlier round.
  server.global_params = init_params(spec, rng);
  update_best_snapshot(server, record_with(0.2, 3));
  CHECK(server.best_snapshot->round == 1);
  CHECK(server.best_snapshot->params == round1);

  // Records without idd never select.
  RoundRecord no_idd;
  no_idd.round = 4;
  update_best_snapshot(server, no_idd);
  CHECK(server.best_snapshot->round == 1);
  (void)round0;
}

TEST_CASE("a failing round restores the server transactionally") {
  Fixture f;
  ProtocolConfig pc = f.config(2);
  HyperParams hyper = f.hyper();
  hyper.total_epochs = pc.total_epochs();

  Rng master(pc.rng_seed);
  ServerState server;
  server.global_params = init_params(f.spec, master);
  run_round(server, f.clients, pc, hyper, master);

  // Poison the target so the idd stage produces a non-finite gradient after
  // the sources already trained.
  ClientState* target = nullptr;
  for (ClientState& c : f.clients) {
    if (c.role == Role::target) target = &c;
  }
  REQUIRE(target != nullptr);
  target->dataset.features[0] = std::numeric_limits<double>::quiet_NaN();

  ServerState before = server;
  CHECK_THROWS_AS(run_round(server, f.clients, pc, hyper, master), NumericalError);
  CHECK(server.round == before.round);
  CHECK(server.global_params == before.global_params);
  CHECK(server.history == before.history);
  REQUIRE(server.best_snapshot.has_value());
  CHECK(server.best_snapshot->round == before.best_snapshot->round);
  CHECK(server.best_snapshot->idd == before.best_snapshot->idd);
  CHECK(server.best_snapshot->params == before.best_snapshot->params);
}

TEST_CASE("protocol preconditions") {
  Fixture f;
  ProtocolConfig pc = f.config(1);

  std::vector<ClientState> no_target(f.clients.begin(), f.clients.end() - 1);
  CHECK_THROWS_AS(run_protocol(no_target, pc, f.hyper()), ConfigError);

  std::vector<ClientState> one_source{f.clients[0], f.clients.back()};
  CHECK_THROWS_WITH_AS(run_protocol(one_source, pc, f.hyper()),
                       doctest::Contains("split_domain"), ConfigError);

  ProtocolConfig bad = pc;
  bad.rounds = 0;
  CHECK_THROWS_AS(run_protocol(f.clients, bad, f.hyper()), ConfigError);

  // A labeled target violates the role contract.
  Fixture g;
  g.clients.back().dataset = make_blobs(3, 30, 1);
  CHECK_THROWS_AS(run_protocol(g.clients, pc, g.hyper()), ConfigError);
}

TEST_CASE("history csv lists one line per round with stable columns") {
  Fixture f;
  ProtocolConfig pc = f.config(2);
  ProtocolResult res = run_protocol(f.clients, pc, f.hyper());
  std::string csv = history_csv(res.server.history);
  CHECK(csv.starts_with(
      "round,pair,src_loss_1,src_loss_2,ft_loss_1,ft_loss_2,idd,target_acc\n"));
  size_t lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 3);  // header + 2 rounds
}
