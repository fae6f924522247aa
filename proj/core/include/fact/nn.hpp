#pragma once

#include <span>

#include "fact/model.hpp"
#include "fact/rng.hpp"
#include "fact/tensor.hpp"

namespace fact {

enum class Mode { train, eval };

struct ForwardResult {
  Tensor latent;  // generator output, batch x latent_dim
  Tensor probs;   // head output, batch x classes, rows sum to 1
};

// Runs x (batch x input_dim) through generator and head. Dropout layers are
// active only in train mode and require an rng; variates are consumed in
// layer order, so two calls with equally-seeded rngs see identical masks.
ForwardResult forward(const ModelParams& params, const Tensor& x, Mode mode,
                      Rng* rng = nullptr);

// Mean negative log-probability of the true class. labels[i] in [0, classes).
double cross_entropy(const Tensor& probs, std::span<const int> labels);

// Inter-domain distance: mean over the batch of the per-sample L1 distance
// between two heads' class-probability rows.
double idd_loss(const Tensor& probs1, const Tensor& probs2);

// Selects which loss drives backward and which partitions receive gradients.
struct BackwardSpec {
  enum class Loss { cross_entropy, idd };
  Loss loss = Loss::cross_entropy;
  std::span<const int> labels;         // cross_entropy only
  const ModelParams* rival = nullptr;  // idd only: second head, same generator
  bool wrt_generator = true;
  bool wrt_head = true;
};

struct BackwardResult {
  double loss = 0.0;
  Tensor probs;      // primary head probabilities for the batch
  Gradients grads;   // partitions excluded by the spec are exactly zero
};

// Fused forward + reverse pass. Gradients of the rival head (idd) are not
// computed; the rival's generator partition is ignored.
BackwardResult backward(const ModelParams& params, const Tensor& x,
                        const BackwardSpec& spec, Rng* rng = nullptr);

// Polynomial decay eta0 * (1 + 10 p)^(-3/4) for training progress p in [0,1].
double lr_schedule(double eta0, double p);

}  // namespace fact
