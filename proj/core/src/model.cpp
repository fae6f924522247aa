#include "fact/model.hpp"

#include <cmath>
#include <cstring>

#include "fact/errors.hpp"

namespace fact {

namespace {

// Walks a layer chain and returns {first_in, last_out}; 0 means "no linear
// layer seen". Throws on inconsistent chained dimensions.
std::pair<size_t, size_t> linear_extents(const std::vector<LayerDesc>& layers,
                                         const char* part) {
  size_t first_in = 0, last_out = 0;
  for (const LayerDesc& l : layers) {
    if (l.kind != LayerKind::linear) continue;
    if (l.in_dim == 0 || l.out_dim == 0) {
      throw DimensionError(std::string(part) + ": linear layer with zero extent");
    }
    if (first_in == 0) first_in = l.in_dim;
    if (last_out != 0 && l.in_dim != last_out) {
      throw DimensionError(std::string(part) + ": linear chain mismatch, expected in=" +
                           std::to_string(last_out) + " got " + std::to_string(l.in_dim));
    }
    last_out = l.out_dim;
  }
  return {first_in, last_out};
}

}  // namespace

void LayerSpec::validate() const {
  auto [gen_in, gen_out] = linear_extents(generator, "generator");
  auto [head_in, head_out] = linear_extents(head, "head");
  if (head_in == 0) throw DimensionError("head: needs at least one linear layer");
  if (head.empty() || head.back().kind != LayerKind::softmax) {
    throw DimensionError("head: terminal layer must be softmax");
  }
  if (gen_out != 0 && gen_out != head_in) {
    throw DimensionError("generator output dim " + std::to_string(gen_out) +
                         " != head input dim " + std::to_string(head_in));
  }
  for (const LayerDesc& l : generator) {
    if (l.kind == LayerKind::softmax) {
      throw DimensionError("generator: softmax only allowed as head terminal");
    }
  }
  auto check_dropout = [](const std::vector<LayerDesc>& layers, const char* part) {
    for (const LayerDesc& l : layers) {
      if (l.kind == LayerKind::dropout && !(l.drop_prob >= 0.0 && l.drop_prob < 1.0)) {
        throw DimensionError(std::string(part) + ": dropout probability outside [0,1)");
      }
    }
  };
  check_dropout(generator, "generator");
  check_dropout(head, "head");
}

size_t LayerSpec::input_dim() const {
  auto [gen_in, gen_out] = linear_extents(generator, "generator");
  if (gen_in != 0) return gen_in;
  return linear_extents(head, "head").first;
}

size_t LayerSpec::latent_dim() const {
  auto [gen_in, gen_out] = linear_extents(generator, "generator");
  if (gen_out != 0) return gen_out;
  return linear_extents(head, "head").first;
}

size_t LayerSpec::num_classes() const { return linear_extents(head, "head").second; }

LayerSpec make_mlp_spec(size_t input_dim, size_t num_classes,
                        const std::vector<size_t>& generator_hidden) {
  LayerSpec spec;
  size_t in = input_dim;
  for (size_t h : generator_hidden) {
    spec.generator.push_back(LayerDesc::Linear(in, h));
    spec.generator.push_back(LayerDesc::Relu());
    in = h;
  }
  spec.head.push_back(LayerDesc::Linear(in, num_classes));
  spec.head.push_back(LayerDesc::Softmax());
  spec.validate();
  return spec;
}

size_t ModelParams::parameter_count() const {
  size_t n = 0;
  for (const Tensor& t : generator) n += t.size();
  for (const Tensor& t : head) n += t.size();
  return n;
}

bool Gradients::all_finite() const {
  for (const Tensor& t : generator) {
    if (!t.all_finite()) return false;
  }
  for (const Tensor& t : head) {
    if (!t.all_finite()) return false;
  }
  return true;
}

void HyperParams::validate() const {
  if (!(eta0 > 0.0)) throw InputError("HyperParams: eta0 must be > 0");
  if (batch_size < 1) throw InputError("HyperParams: batch_size must be >= 1");
  if (total_epochs < 1) throw InputError("HyperParams: total_epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InputError("HyperParams: momentum must lie in [0,1)");
  }
  if (!(weight_decay >= 0.0)) throw InputError("HyperParams: weight_decay must be >= 0");
}

namespace {

std::vector<Tensor> zero_partition(const std::vector<LayerDesc>& layers) {
  std::vector<Tensor> out;
  for (const LayerDesc& l : layers) {
    if (l.kind != LayerKind::linear) continue;
    out.push_back(Tensor::zeros({l.out_dim, l.in_dim}));
    out.push_back(Tensor::zeros({l.out_dim}));
  }
  return out;
}

void init_partition(const std::vector<LayerDesc>& layers, std::vector<Tensor>& params,
                    Rng& rng) {
  size_t idx = 0;
  for (const LayerDesc& l : layers) {
    if (l.kind != LayerKind::linear) continue;
    double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
    Tensor& w = params[idx];
    for (double& v : w.values()) v = rng.uniform_real(-bound, bound);
    idx += 2;  // bias stays zero
  }
}

}  // namespace

ModelParams zero_params(const LayerSpec& spec) {
  spec.validate();
  return ModelParams{zero_partition(spec.generator), zero_partition(spec.head), spec};
}

Gradients zero_gradients(const LayerSpec& spec) {
  return Gradients{zero_partition(spec.generator), zero_partition(spec.head)};
}

ModelParams init_params(const LayerSpec& spec, Rng& rng) {
  ModelParams p = zero_params(spec);
  init_partition(spec.generator, p.generator, rng);
  init_partition(spec.head, p.head, rng);
  return p;
}

uint64_t params_hash(const std::vector<Tensor>& partition) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* bytes, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Tensor& t : partition) {
    for (size_t e : t.shape()) mix(&e, sizeof(e));
    mix(t.data(), t.size() * sizeof(double));
  }
  return h;
}

}  // namespace fact
