#include "fact/optim.hpp"

#include "fact/errors.hpp"

namespace fact {

SgdOptimizer::SgdOptimizer(const LayerSpec& spec, double momentum, double weight_decay)
    : velocity_(zero_gradients(spec)), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InputError("SgdOptimizer: momentum must lie in [0,1)");
  }
  if (!(weight_decay >= 0.0)) {
    throw InputError("SgdOptimizer: weight_decay must be >= 0");
  }
}

namespace {

void check_congruent(const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                     const char* part) {
  if (params.size() != grads.size()) {
    throw DimensionError(std::string("sgd step: ") + part + " partition size mismatch");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i])) {
      throw DimensionError(std::string("sgd step: ") + part + " tensor " +
                           std::to_string(i) + " shape mismatch");
    }
  }
}

void step_partition(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                    std::vector<Tensor>& velocity, double rate, double momentum,
                    double weight_decay) {
  for (size_t t = 0; t < params.size(); ++t) {
    Tensor& theta = params[t];
    const Tensor& g = grads[t];
    Tensor& v = velocity[t];
    for (size_t i = 0; i < theta.size(); ++i) {
      double step = g[i] + weight_decay * theta[i];
      v[i] = momentum * v[i] + step;
      theta[i] -= rate * v[i];
    }
  }
}

}  // namespace

void SgdOptimizer::step(ModelParams& params, const Gradients& grads, double rate,
                        PartitionMask mask) {
  check_congruent(params.generator, grads.generator, "generator");
  check_congruent(params.head, grads.head, "head");
  if (!grads.all_finite()) {
    throw NumericalError("sgd step: non-finite gradient, aborting the update");
  }
  if (mask.generator) {
    step_partition(params.generator, grads.generator, velocity_.generator, rate,
                   momentum_, weight_decay_);
  }
  if (mask.head) {
    step_partition(params.head, grads.head, velocity_.head, rate, momentum_,
                   weight_decay_);
  }
}

void SgdOptimizer::reset() {
  for (Tensor& t : velocity_.generator) {
    for (double& v : t.values()) v = 0.0;
  }
  for (Tensor& t : velocity_.head) {
    for (double& v : t.values()) v = 0.0;
  }
}

}  // namespace fact
