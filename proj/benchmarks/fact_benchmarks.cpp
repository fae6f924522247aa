#include <benchmark/benchmark.h>

#include "fact/dataset.hpp"
#include "fact/federation.hpp"
#include "fact/nn.hpp"
#include "fact/optim.hpp"

namespace {

using namespace fact;

Dataset bench_blobs(size_t n, double rot = 0.0, uint64_t seed = 1) {
  DomainSpec spec;
  spec.name = "bench";
  spec.base = circular_base_task(3, 0.35);
  spec.transform.rotation = rot;
  spec.n_samples = n;
  spec.seed = seed;
  return make_domain(spec);
}

void BM_forward(benchmark::State& state) {
  LayerSpec spec = make_mlp_spec(2, 3);
  Rng rng(1);
  ModelParams params = init_params(spec, rng);
  Dataset ds = bench_blobs(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    ForwardResult res = forward(params, ds.features, Mode::eval);
    benchmark::DoNotOptimize(res.probs.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward)->Arg(128)->Arg(600);

void BM_backward_cross_entropy(benchmark::State& state) {
  LayerSpec spec = make_mlp_spec(2, 3);
  Rng rng(1);
  ModelParams params = init_params(spec, rng);
  Dataset ds = bench_blobs(static_cast<size_t>(state.range(0)));
  BackwardSpec bspec;
  bspec.labels = ds.labels;
  for (auto _ : state) {
    BackwardResult res = backward(params, ds.features, bspec);
    benchmark::DoNotOptimize(res.grads.generator.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_backward_cross_entropy)->Arg(128)->Arg(600);

void BM_backward_idd(benchmark::State& state) {
  LayerSpec spec = make_mlp_spec(2, 3);
  Rng rng(1);
  ModelParams params = init_params(spec, rng);
  ModelParams rival = init_params(spec, rng);
  Dataset ds = bench_blobs(static_cast<size_t>(state.range(0)));
  BackwardSpec bspec;
  bspec.loss = BackwardSpec::Loss::idd;
  bspec.rival = &rival;
  bspec.wrt_head = false;
  for (auto _ : state) {
    BackwardResult res = backward(params, ds.features, bspec);
    benchmark::DoNotOptimize(res.grads.generator.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_backward_idd)->Arg(128)->Arg(600);

void BM_sgd_step(benchmark::State& state) {
  LayerSpec spec = make_mlp_spec(2, 3);
  Rng rng(1);
  ModelParams params = init_params(spec, rng);
  Gradients grads = zero_gradients(spec);
  for (Tensor& t : grads.generator) {
    for (double& v : t.values()) v = 0.01;
  }
  SgdOptimizer opt(spec, 0.9, 5e-4);
  for (auto _ : state) {
    opt.step(params, grads, 1e-6);
    benchmark::DoNotOptimize(params.generator.data());
  }
}
BENCHMARK(BM_sgd_step);

void BM_make_domain(benchmark::State& state) {
  DomainSpec spec;
  spec.name = "bench";
  spec.base = circular_base_task(3, 0.35);
  spec.transform.rotation = 0.7;
  spec.n_samples = static_cast<size_t>(state.range(0));
  spec.seed = 2;
  for (auto _ : state) {
    Dataset ds = make_domain(spec);
    benchmark::DoNotOptimize(ds.features.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_make_domain)->Arg(600)->Arg(6000);

void BM_protocol_round(benchmark::State& state) {
  LayerSpec spec = make_mlp_spec(2, 3);
  std::vector<ClientState> clients;
  for (int i = 0; i < 3; ++i) {
    Dataset ds = bench_blobs(600, 0.1 * i, 10 + static_cast<uint64_t>(i));
    clients.push_back(ClientState{"s" + std::to_string(i), Role::source, ds,
                                  zero_params(spec), "s"});
  }
  Dataset tgt = bench_blobs(600, 1.0, 99);
  clients.push_back(ClientState{"t", Role::target, tgt.without_labels(),
                                zero_params(spec), "t"});
  ProtocolConfig pc;
  pc.rounds = 1;
  pc.rng_seed = 7;
  HyperParams hyper;
  hyper.total_epochs = 3;
  Rng master(7);
  ServerState server0;
  server0.global_params = init_params(spec, master);
  for (auto _ : state) {
    ServerState server = server0;
    run_round(server, clients, pc, hyper, master);
    benchmark::DoNotOptimize(server.global_params.generator.data());
  }
}
BENCHMARK(BM_protocol_round);

}  // namespace

BENCHMARK_MAIN();
