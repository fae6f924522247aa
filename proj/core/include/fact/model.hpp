#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fact/rng.hpp"
#include "fact/tensor.hpp"

namespace fact {

enum class LayerKind { linear, relu, softmax, dropout };

struct LayerDesc {
  LayerKind kind = LayerKind::linear;
  size_t in_dim = 0;   // linear only
  size_t out_dim = 0;  // linear only
  double drop_prob = 0.0;  // dropout only

  static LayerDesc Linear(size_t in, size_t out) { return {LayerKind::linear, in, out, 0.0}; }
  static LayerDesc Relu() { return {LayerKind::relu, 0, 0, 0.0}; }
  static LayerDesc Softmax() { return {LayerKind::softmax, 0, 0, 0.0}; }
  static LayerDesc Dropout(double p) { return {LayerKind::dropout, 0, 0, p}; }

  bool operator==(const LayerDesc&) const = default;
};

// Architecture descriptor split into the shared feature generator and the
// per-domain classification head. The head must end in a softmax.
struct LayerSpec {
  std::vector<LayerDesc> generator;
  std::vector<LayerDesc> head;

  // Throws DimensionError if the linear chain is inconsistent or the head
  // does not end in softmax.
  void validate() const;

  size_t input_dim() const;    // expected feature dimension
  size_t latent_dim() const;   // generator output == head input dimension
  size_t num_classes() const;  // head output dimension

  bool operator==(const LayerSpec&) const = default;
};

// Desk-scale reference architecture: generator FC(input,64)+ReLU,
// FC(64,32)+ReLU; head FC(32,classes)+Softmax.
LayerSpec make_mlp_spec(size_t input_dim, size_t num_classes,
                        const std::vector<size_t>& generator_hidden = {64, 32});

// Partitioned parameter set: the unit of federated exchange. Parameter
// tensors are stored per partition in layer order, weight then bias for each
// linear layer.
struct ModelParams {
  std::vector<Tensor> generator;
  std::vector<Tensor> head;
  LayerSpec spec;

  bool congruent_with(const ModelParams& other) const { return spec == other.spec; }
  size_t parameter_count() const;

  bool operator==(const ModelParams&) const = default;
};

// Same partition/shape structure as the ModelParams they differentiate.
struct Gradients {
  std::vector<Tensor> generator;
  std::vector<Tensor> head;

  bool all_finite() const;
};

struct HyperParams {
  double eta0 = 0.005;      // initial learning rate
  size_t batch_size = 128;
  long total_epochs = 1;    // planned total, denominator of schedule progress
  double momentum = 0.9;
  double weight_decay = 5e-4;

  void validate() const;  // throws InputError
};

// Zero parameters of the right shapes for `spec`.
ModelParams zero_params(const LayerSpec& spec);
Gradients zero_gradients(const LayerSpec& spec);

// Glorot-uniform initialization in +-sqrt(6/(fan_in+fan_out)), zero biases.
ModelParams init_params(const LayerSpec& spec, Rng& rng);

// FNV-1a over the raw bytes of both partitions; used for freezing checks.
uint64_t params_hash(const std::vector<Tensor>& partition);

}  // namespace fact
