#include "fact/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fact/errors.hpp"

namespace fact {

namespace {

// Per-partition forward cache: acts[0] is the input, acts[i+1] the output of
// layer i. Dropout masks (scale factors) are kept for the reverse pass.
struct PartitionCache {
  std::vector<Tensor> acts;
  std::vector<Tensor> masks;  // indexed by layer, empty tensor if unused
};

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const size_t n = x.rows(), in = x.cols(), out = w.rows();
  Tensor y({n, out});
  for (size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * in;
    double* yi = y.data() + i * out;
    for (size_t o = 0; o < out; ++o) {
      const double* wo = w.data() + o * in;
      double acc = b[o];
      for (size_t j = 0; j < in; ++j) acc += wo[j] * xi[j];
      yi[o] = acc;
    }
  }
  return y;
}

Tensor softmax_rows(const Tensor& z) {
  Tensor p(z.shape());
  const size_t n = z.rows(), k = z.cols();
  for (size_t i = 0; i < n; ++i) {
    const double* zi = z.data() + i * k;
    double* pi = p.data() + i * k;
    double m = zi[0];
    for (size_t j = 1; j < k; ++j) m = std::max(m, zi[j]);
    double sum = 0.0;
    for (size_t j = 0; j < k; ++j) {
      pi[j] = std::exp(zi[j] - m);
      sum += pi[j];
    }
    for (size_t j = 0; j < k; ++j) pi[j] /= sum;
  }
  return p;
}

Tensor partition_forward(const std::vector<LayerDesc>& layers,
                         const std::vector<Tensor>& params, const Tensor& x,
                         Mode mode, Rng* rng, const char* part,
                         PartitionCache* cache) {
  Tensor cur = x;
  if (cache) {
    cache->acts.clear();
    cache->masks.assign(layers.size(), Tensor());
    cache->acts.push_back(cur);
  }
  size_t param_idx = 0;
  for (size_t li = 0; li < layers.size(); ++li) {
    const LayerDesc& l = layers[li];
    switch (l.kind) {
      case LayerKind::linear: {
        if (cur.cols() != l.in_dim) {
          throw DimensionError(std::string(part) + " layer " + std::to_string(li) +
                               " (linear): expected input dim " + std::to_string(l.in_dim) +
                               ", got " + std::to_string(cur.cols()));
        }
        cur = linear_forward(cur, params[param_idx], params[param_idx + 1]);
        param_idx += 2;
        break;
      }
      case LayerKind::relu: {
        for (double& v : cur.values()) v = v > 0.0 ? v : 0.0;
        break;
      }
      case LayerKind::softmax: {
        cur = softmax_rows(cur);
        break;
      }
      case LayerKind::dropout: {
        if (mode == Mode::train) {
          if (!rng) {
            throw InputError(std::string(part) + " layer " + std::to_string(li) +
                             ": dropout in train mode requires an rng");
          }
          const double keep = 1.0 - l.drop_prob;
          Tensor mask(cur.shape());
          for (size_t i = 0; i < cur.size(); ++i) {
            mask[i] = rng->uniform_real() < keep ? 1.0 / keep : 0.0;
            cur[i] *= mask[i];
          }
          if (cache) cache->masks[li] = std::move(mask);
        }
        break;
      }
    }
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

// Reverse pass over layers [0, start). `dout` is the gradient w.r.t.
// acts[start]. Returns the gradient w.r.t. the partition input; per-parameter
// gradients are accumulated into *grads when given.
Tensor partition_backward(const std::vector<LayerDesc>& layers,
                          const std::vector<Tensor>& params,
                          const PartitionCache& cache, Tensor dout, size_t start,
                          std::vector<Tensor>* grads) {
  // Parameter index of each linear layer.
  std::vector<size_t> pidx(layers.size(), 0);
  size_t count = 0;
  for (size_t li = 0; li < layers.size(); ++li) {
    if (layers[li].kind == LayerKind::linear) {
      pidx[li] = count;
      count += 2;
    }
  }
  for (size_t li = start; li-- > 0;) {
    const LayerDesc& l = layers[li];
    const Tensor& input = cache.acts[li];
    switch (l.kind) {
      case LayerKind::linear: {
        const Tensor& w = params[pidx[li]];
        const size_t n = dout.rows(), out = w.rows(), in = w.cols();
        if (grads) {
          Tensor& dw = (*grads)[pidx[li]];
          Tensor& db = (*grads)[pidx[li] + 1];
          for (size_t i = 0; i < n; ++i) {
            const double* di = dout.data() + i * out;
            const double* xi = input.data() + i * in;
            for (size_t o = 0; o < out; ++o) {
              double d = di[o];
              db[o] += d;
              double* dwo = dw.data() + o * in;
              for (size_t j = 0; j < in; ++j) dwo[j] += d * xi[j];
            }
          }
        }
        Tensor dx({n, in});
        for (size_t i = 0; i < n; ++i) {
          const double* di = dout.data() + i * out;
          double* dxi = dx.data() + i * in;
          for (size_t o = 0; o < out; ++o) {
            const double* wo = w.data() + o * in;
            double d = di[o];
            for (size_t j = 0; j < in; ++j) dxi[j] += d * wo[j];
          }
        }
        dout = std::move(dx);
        break;
      }
      case LayerKind::relu: {
        for (size_t i = 0; i < dout.size(); ++i) {
          if (input[i] <= 0.0) dout[i] = 0.0;
        }
        break;
      }
      case LayerKind::softmax: {
        // dz_j = p_j (dp_j - sum_k dp_k p_k), rowwise.
        const Tensor& p = cache.acts[li + 1];
        const size_t n = p.rows(), k = p.cols();
        for (size_t i = 0; i < n; ++i) {
          const double* pi = p.data() + i * k;
          double* di = dout.data() + i * k;
          double dot = 0.0;
          for (size_t j = 0; j < k; ++j) dot += di[j] * pi[j];
          for (size_t j = 0; j < k; ++j) di[j] = pi[j] * (di[j] - dot);
        }
        break;
      }
      case LayerKind::dropout: {
        const Tensor& mask = cache.masks[li];
        if (mask.size() > 0) {
          for (size_t i = 0; i < dout.size(); ++i) dout[i] *= mask[i];
        }
        break;
      }
    }
  }
  return dout;
}

void check_batch_input(const LayerSpec& spec, const Tensor& x) {
  if (x.ndim() != 2) {
    throw DimensionError("forward: input must be 2-d (batch x features), got " +
                         x.shape_str());
  }
  // Per-layer dims are checked as the partitions are walked.
}

}  // namespace

ForwardResult forward(const ModelParams& params, const Tensor& x, Mode mode, Rng* rng) {
  check_batch_input(params.spec, x);
  Tensor latent = params.spec.generator.empty()
                      ? x
                      : partition_forward(params.spec.generator, params.generator, x,
                                          mode, rng, "generator", nullptr);
  Tensor probs = partition_forward(params.spec.head, params.head, latent, mode, rng,
                                   "head", nullptr);
  return {std::move(latent), std::move(probs)};
}

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
  const size_t n = probs.rows(), k = probs.cols();
  if (labels.size() != n) {
    throw InputError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(n));
  }
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<size_t>(y) >= k) {
      throw InputError("cross_entropy: label " + std::to_string(y) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    total -= std::log(probs.at(i, static_cast<size_t>(y)));
  }
  return total / static_cast<double>(n);
}

double idd_loss(const Tensor& probs1, const Tensor& probs2) {
  if (!probs1.same_shape(probs2)) {
    throw InputError("idd_loss: shape mismatch " + probs1.shape_str() + " vs " +
                     probs2.shape_str());
  }
  const size_t n = probs1.rows();
  double total = 0.0;
  for (size_t i = 0; i < probs1.size(); ++i) {
    total += std::abs(probs1[i] - probs2[i]);
  }
  return total / static_cast<double>(n);
}

BackwardResult backward(const ModelParams& params, const Tensor& x,
                        const BackwardSpec& spec, Rng* rng) {
  check_batch_input(params.spec, x);
  const bool has_generator = !params.spec.generator.empty();

  PartitionCache gen_cache;
  Tensor latent = has_generator
                      ? partition_forward(params.spec.generator, params.generator, x,
                                          Mode::train, rng, "generator", &gen_cache)
                      : x;

  BackwardResult result;
  result.grads = zero_gradients(params.spec);

  PartitionCache head_cache;
  Tensor probs = partition_forward(params.spec.head, params.head, latent, Mode::train,
                                   rng, "head", &head_cache);
  const size_t n = probs.rows(), k = probs.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Tensor dlatent;
  if (spec.loss == BackwardSpec::Loss::cross_entropy) {
    result.loss = cross_entropy(probs, spec.labels);
    // Fused softmax + cross-entropy: d logits = (p - onehot)/n, entering the
    // reverse pass just below the terminal softmax.
    Tensor dlogits = probs;
    for (size_t i = 0; i < n; ++i) {
      double* di = dlogits.data() + i * k;
      for (size_t j = 0; j < k; ++j) di[j] *= inv_n;
      di[spec.labels[i]] -= inv_n;
    }
    dlatent = partition_backward(params.spec.head, params.head, head_cache,
                                 std::move(dlogits), params.spec.head.size() - 1,
                                 spec.wrt_head ? &result.grads.head : nullptr);
  } else {
    if (!spec.rival) throw InputError("backward: idd loss requires a rival head");
    if (spec.rival->spec != params.spec) {
      throw DimensionError("backward: rival head spec differs from primary spec");
    }
    PartitionCache rival_cache;
    Tensor rival_probs =
        partition_forward(spec.rival->spec.head, spec.rival->head, latent, Mode::train,
                          rng, "head", &rival_cache);
    result.loss = idd_loss(probs, rival_probs);
    // d idd / d p1 = sign(p1 - p2)/n; the rival path contributes the mirror
    // image to the shared latent.
    Tensor dp1(probs.shape());
    Tensor dp2(probs.shape());
    for (size_t i = 0; i < probs.size(); ++i) {
      double diff = probs[i] - rival_probs[i];
      double s = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
      dp1[i] = s;
      dp2[i] = -s;
    }
    Tensor d1 = partition_backward(params.spec.head, params.head, head_cache,
                                   std::move(dp1), params.spec.head.size(),
                                   spec.wrt_head ? &result.grads.head : nullptr);
    Tensor d2 = partition_backward(spec.rival->spec.head, spec.rival->head, rival_cache,
                                   std::move(dp2), spec.rival->spec.head.size(), nullptr);
    dlatent = std::move(d1);
    for (size_t i = 0; i < dlatent.size(); ++i) dlatent[i] += d2[i];
  }

  if (has_generator && spec.wrt_generator) {
    partition_backward(params.spec.generator, params.generator, gen_cache,
                       std::move(dlatent), params.spec.generator.size(),
                       &result.grads.generator);
  }
  result.probs = std::move(probs);
  return result;
}

double lr_schedule(double eta0, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InputError("lr_schedule: progress " + std::to_string(p) + " outside [0,1]");
  }
  if (!(eta0 > 0.0)) throw InputError("lr_schedule: eta0 must be > 0");
  return eta0 * std::pow(1.0 + 10.0 * p, -0.75);
}

}  // namespace fact
