#include "fedala/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fedala/error.hpp"
#include "fedala/rng.hpp"

namespace fedala {

namespace {

// Numerically stable log-sum-exp; also writes softmax probabilities.
double log_softmax_into(std::span<const double> z, std::span<double> probs) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    probs[c] = std::exp(z[c] - zmax);
    sum += probs[c];
  }
  for (auto& p : probs) p /= sum;
  return zmax + std::log(sum);
}

// out[r] = bias[r] + sum_c w[r, c] * x[c]
void affine(const LayerTensor& w, const LayerTensor& b, std::span<const double> x,
            std::span<double> out) {
  const std::size_t rows = w.shape[0];
  const std::size_t cols = w.shape[1];
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data.data() + r * cols;
    double acc = b.data[r];
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
}

void require_batch(const ModelArch& arch, const Batch& batch) {
  if (batch.size() == 0) throw InvalidArgument("batch is empty");
  if (batch.input_dim != arch.input_dim || batch.features.size() != batch.size() * arch.input_dim)
    throw InvalidArgument("batch feature width does not match the architecture");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= arch.num_classes)
      throw InvalidArgument("batch label out of range: " + std::to_string(y));
}

}  // namespace

std::string to_string(ArchKind kind) {
  return kind == ArchKind::kLinearSoftmax ? "linear-softmax" : "mlp-1-hidden";
}

ArchKind arch_kind_from_string(const std::string& s) {
  if (s == "linear-softmax") return ArchKind::kLinearSoftmax;
  if (s == "mlp-1-hidden") return ArchKind::kMlp1Hidden;
  throw InvalidArgument("unknown model kind '" + s + "'");
}

void ModelArch::validate() const {
  if (input_dim == 0) throw InvalidArgument("input_dim must be positive");
  if (num_classes == 0) throw InvalidArgument("num_classes must be positive");
  if (kind == ArchKind::kMlp1Hidden && hidden_dim == 0)
    throw InvalidArgument("hidden_dim must be positive for mlp-1-hidden");
}

ModelParams make_params(const ModelArch& arch) {
  arch.validate();
  ModelParams p;
  if (arch.kind == ArchKind::kLinearSoftmax) {
    p.layers.emplace_back("fc.weight", std::vector<std::size_t>{arch.num_classes, arch.input_dim}, 0);
    p.layers.emplace_back("fc.bias", std::vector<std::size_t>{arch.num_classes}, 0);
  } else {
    p.layers.emplace_back("hidden.weight", std::vector<std::size_t>{arch.hidden_dim, arch.input_dim}, 0);
    p.layers.emplace_back("hidden.bias", std::vector<std::size_t>{arch.hidden_dim}, 0);
    p.layers.emplace_back("out.weight", std::vector<std::size_t>{arch.num_classes, arch.hidden_dim}, 1);
    p.layers.emplace_back("out.bias", std::vector<std::size_t>{arch.num_classes}, 1);
  }
  return p;
}

ModelParams init_params(const ModelArch& arch, std::uint64_t seed) {
  ModelParams p = make_params(arch);
  Rng rng(seed);
  for (auto& t : p.layers) {
    if (t.shape.size() != 2) continue;  // biases stay zero
    const double a = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
    for (auto& x : t.data) x = rng.uniform(-a, a);
  }
  return p;
}

void require_arch_layout(const ModelArch& arch, const ModelParams& params) {
  struct Expected {
    std::size_t rows, cols;
    int layer;
  };
  std::vector<Expected> expected;
  if (arch.kind == ArchKind::kLinearSoftmax) {
    expected = {{arch.num_classes, arch.input_dim, 0}, {arch.num_classes, 0, 0}};
  } else {
    expected = {{arch.hidden_dim, arch.input_dim, 0},
                {arch.hidden_dim, 0, 0},
                {arch.num_classes, arch.hidden_dim, 1},
                {arch.num_classes, 0, 1}};
  }
  bool ok = params.layers.size() == expected.size();
  for (std::size_t i = 0; ok && i < expected.size(); ++i) {
    const auto& t = params.layers[i];
    const auto& e = expected[i];
    const auto want = e.cols == 0 ? std::vector<std::size_t>{e.rows} : std::vector<std::size_t>{e.rows, e.cols};
    ok = t.shape == want && t.layer == e.layer && t.data.size() == shape_numel(want);
  }
  if (!ok) throw InvalidArgument("parameters do not match the " + to_string(arch.kind) + " layout");
}

std::uint64_t fingerprint(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const auto& t : params.layers) {
    for (double x : t.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      h = (h ^ bits) * 0x100000001b3ULL;
    }
  }
  return h;
}

void logits(const ModelArch& arch, const ModelParams& params, std::span<const double> x,
            std::span<double> out) {
  if (arch.kind == ArchKind::kLinearSoftmax) {
    affine(params.layers[0], params.layers[1], x, out);
    return;
  }
  std::vector<double> h(arch.hidden_dim);
  affine(params.layers[0], params.layers[1], x, h);
  for (auto& v : h) v = std::max(0.0, v);
  affine(params.layers[2], params.layers[3], h, out);
}

LossResult forward_loss(const ModelArch& arch, const ModelParams& params, const Batch& batch) {
  require_arch_layout(arch, params);
  require_batch(arch, batch);
  if (!params.all_finite()) throw NumericError("forward_loss: non-finite parameter");
  for (double x : batch.features)
    if (!std::isfinite(x)) throw NumericError("forward_loss: non-finite feature");

  LossResult res;
  ForwardCache& cache = res.cache;
  cache.arch = arch;
  cache.batch = batch;
  cache.params_fingerprint = fingerprint(params);

  const std::size_t n = batch.size();
  const std::size_t classes = arch.num_classes;
  cache.probs.resize(n * classes);
  std::vector<double> z(classes);
  double total = 0.0;

  if (arch.kind == ArchKind::kMlp1Hidden) {
    cache.hidden_pre.resize(n * arch.hidden_dim);
    cache.hidden.resize(n * arch.hidden_dim);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (arch.kind == ArchKind::kLinearSoftmax) {
      affine(params.layers[0], params.layers[1], batch.row(i), z);
    } else {
      std::span<double> pre(cache.hidden_pre.data() + i * arch.hidden_dim, arch.hidden_dim);
      std::span<double> h(cache.hidden.data() + i * arch.hidden_dim, arch.hidden_dim);
      affine(params.layers[0], params.layers[1], batch.row(i), pre);
      for (std::size_t k = 0; k < h.size(); ++k) h[k] = std::max(0.0, pre[k]);
      affine(params.layers[2], params.layers[3], h, z);
    }
    std::span<double> probs(cache.probs.data() + i * classes, classes);
    const double lse = log_softmax_into(z, probs);
    total += lse - z[static_cast<std::size_t>(batch.labels[i])];
  }
  res.loss = total / static_cast<double>(n);
  if (!std::isfinite(res.loss)) throw NumericError("forward_loss: non-finite loss");
  cache.valid = true;
  return res;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache) {
  if (!cache.valid) throw InvalidState("backward: cache was not produced by forward_loss");
  if (fingerprint(params) != cache.params_fingerprint)
    throw InvalidState("backward: cache is stale (parameters changed since forward_loss)");
  const ModelArch& arch = cache.arch;
  const Batch& batch = cache.batch;
  const std::size_t n = batch.size();
  const std::size_t classes = arch.num_classes;
  const double inv_n = 1.0 / static_cast<double>(n);

  ModelParams grad = params.zeros_like();
  std::vector<double> dz(classes);
  std::vector<double> dh(arch.hidden_dim);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < classes; ++c) dz[c] = cache.probs[i * classes + c] * inv_n;
    dz[static_cast<std::size_t>(batch.labels[i])] -= inv_n;

    const bool mlp = arch.kind == ArchKind::kMlp1Hidden;
    std::span<const double> head_in =
        mlp ? std::span<const double>(cache.hidden.data() + i * arch.hidden_dim, arch.hidden_dim)
            : batch.row(i);
    LayerTensor& gw = grad.layers[mlp ? 2 : 0];
    LayerTensor& gb = grad.layers[mlp ? 3 : 1];
    const std::size_t width = head_in.size();
    for (std::size_t c = 0; c < classes; ++c) {
      double* row = gw.data.data() + c * width;
      for (std::size_t k = 0; k < width; ++k) row[k] += dz[c] * head_in[k];
      gb.data[c] += dz[c];
    }
    if (!mlp) continue;

    const LayerTensor& w2 = params.layers[2];
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      const double* row = w2.data.data() + c * arch.hidden_dim;
      for (std::size_t k = 0; k < arch.hidden_dim; ++k) dh[k] += row[k] * dz[c];
    }
    std::span<const double> x = batch.row(i);
    LayerTensor& g1 = grad.layers[0];
    LayerTensor& gb1 = grad.layers[1];
    for (std::size_t k = 0; k < arch.hidden_dim; ++k) {
      if (cache.hidden_pre[i * arch.hidden_dim + k] <= 0.0) continue;  // relu'(0) = 0
      double* row = g1.data.data() + k * arch.input_dim;
      for (std::size_t d = 0; d < arch.input_dim; ++d) row[d] += dh[k] * x[d];
      gb1.data[k] += dh[k];
    }
  }
  return grad;
}

void sgd_step(ModelParams& params, const ModelParams& grad, double lr) {
  require_compatible(params, grad, "sgd_step");
  if (lr < 0.0) throw InvalidArgument("sgd_step: learning rate must be non-negative");
  for (std::size_t i = 0; i < params.layers.size(); ++i)
    saxpy_inplace(params.layers[i], -lr, grad.layers[i]);
}

EvalResult evaluate(const ModelArch& arch, const ModelParams& params,
                    std::span<const double> features, std::span<const int> labels) {
  require_arch_layout(arch, params);
  EvalResult r;
  r.count = labels.size();
  if (r.count == 0) return r;
  if (features.size() != labels.size() * arch.input_dim)
    throw InvalidArgument("evaluate: feature width does not match the architecture");
  std::vector<double> z(arch.num_classes), probs(arch.num_classes);
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    logits(arch, params, features.subspan(i * arch.input_dim, arch.input_dim), z);
    const double lse = log_softmax_into(z, probs);
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= arch.num_classes)
      throw InvalidArgument("evaluate: label out of range: " + std::to_string(labels[i]));
    const auto y = static_cast<std::size_t>(labels[i]);
    total += lse - z[y];
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == y) ++hits;
  }
  r.loss = total / static_cast<double>(r.count);
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.count);
  if (!std::isfinite(r.loss)) throw NumericError("evaluate: non-finite loss");
  return r;
}

}  // namespace fedala
