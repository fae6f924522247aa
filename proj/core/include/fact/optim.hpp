#pragma once

#include "fact/model.hpp"

namespace fact {

// Selects which parameter partitions an update touches. Frozen partitions are
// left bitwise unchanged: no gradient, no decay, no momentum accumulation.
struct PartitionMask {
  bool generator = true;
  bool head = true;
};

// SGD with momentum and decoupled-from-nothing weight decay:
//   v <- momentum * v + (g + weight_decay * theta)
//   theta <- theta - rate * v
// Velocity buffers live in the optimizer and are congruent with the params.
class SgdOptimizer {
 public:
  SgdOptimizer(const LayerSpec& spec, double momentum, double weight_decay);

  // Throws NumericalError on non-finite gradients, leaving params untouched.
  void step(ModelParams& params, const Gradients& grads, double rate,
            PartitionMask mask = {});

  void reset();

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  Gradients velocity_;
  double momentum_;
  double weight_decay_;
};

}  // namespace fact
