#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedala/tensor.hpp"

namespace fedala {

enum class ArchKind { kLinearSoftmax, kMlp1Hidden };

std::string to_string(ArchKind kind);
// Accepts "linear-softmax" and "mlp-1-hidden".
ArchKind arch_kind_from_string(const std::string& s);

struct ModelArch {
  ArchKind kind = ArchKind::kLinearSoftmax;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // mlp only
  std::size_t num_classes = 2;

  // 1 for linear-softmax, 2 for the mlp ([hidden, output]).
  int num_logical_layers() const { return kind == ArchKind::kLinearSoftmax ? 1 : 2; }
  void validate() const;
};

// A mini-batch. Features are row-major [size() x input_dim].
struct Batch {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t input_dim = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * input_dim, input_dim);
  }
};

// Activations saved by forward_loss for the backward pass.
struct ForwardCache {
  ModelArch arch;
  std::uint64_t params_fingerprint = 0;
  Batch batch;
  std::vector<double> hidden_pre;  // mlp: [n x hidden]
  std::vector<double> hidden;      // mlp: relu(hidden_pre)
  std::vector<double> probs;       // [n x classes]
  bool valid = false;
};

struct LossResult {
  double loss = 0.0;
  ForwardCache cache;
};

// Parameters with the layout of `arch`: linear-softmax is
// [fc.weight (C x D), fc.bias (C)] in layer 0; the mlp is
// [hidden.weight (H x D), hidden.bias (H)] in layer 0 and
// [out.weight (C x H), out.bias (C)] in layer 1. The classification head is
// always the last logical layer.
ModelParams make_params(const ModelArch& arch);

// Weights uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
ModelParams init_params(const ModelArch& arch, std::uint64_t seed);

// Throws InvalidArgument if `params` does not have the layout of `arch`.
void require_arch_layout(const ModelArch& arch, const ModelParams& params);

// Mean softmax cross-entropy over the batch.
LossResult forward_loss(const ModelArch& arch, const ModelParams& params, const Batch& batch);

// Gradient of the mean loss. `cache` must come from forward_loss on the same
// parameters; a stale cache raises InvalidState.
ModelParams backward(const ModelParams& params, const ForwardCache& cache);

// params -= lr * grad
void sgd_step(ModelParams& params, const ModelParams& grad, double lr);

// Logits for a single row, written to `out` (size num_classes).
void logits(const ModelArch& arch, const ModelParams& params, std::span<const double> x,
            std::span<double> out);

std::uint64_t fingerprint(const ModelParams& params);

struct EvalResult {
  double loss = 0.0;      // mean cross-entropy
  double accuracy = 0.0;  // fraction of argmax hits
  std::size_t count = 0;
};

// Loss and accuracy over row-major `features` [labels.size() x input_dim].
// Ties in the argmax resolve to the lowest class id.
EvalResult evaluate(const ModelArch& arch, const ModelParams& params,
                    std::span<const double> features, std::span<const int> labels);

}  // namespace fedala
