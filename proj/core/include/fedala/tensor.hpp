#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fedala {

// One named parameter tensor. `layer` is the logical layer it belongs to:
// a weight matrix and its bias share a layer index, and the layer range of
// adaptive aggregation counts logical layers from the top.
struct LayerTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major
  int layer = 0;

  LayerTensor() = default;
  LayerTensor(std::string name, std::vector<std::size_t> shape, int layer = 0);
  LayerTensor(std::string name, std::vector<std::size_t> shape, std::vector<double> data,
              int layer = 0);

  std::size_t size() const { return data.size(); }
  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  // Same shape, all elements set to `value`.
  LayerTensor filled_like(double value) const;

  friend bool operator==(const LayerTensor&, const LayerTensor&) = default;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// Ordered list of layer tensors. Order is fixed per architecture.
struct ModelParams {
  std::vector<LayerTensor> layers;

  std::size_t num_tensors() const { return layers.size(); }
  // Number of logical layers (max layer index + 1; 0 when empty).
  int num_logical_layers() const;
  std::size_t num_parameters() const;

  // Same names/shapes/layer indices in the same order.
  bool compatible_with(const ModelParams& other) const;

  // True if every element is finite.
  bool all_finite() const;

  ModelParams zeros_like() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Learned element-wise weights over the top-p logical layers, one tensor per
// parameter tensor in those layers (same name and shape).
struct AggregationWeights {
  std::vector<LayerTensor> tensors;

  bool empty() const { return tensors.empty(); }
  std::size_t num_elements() const;

  friend bool operator==(const AggregationWeights&, const AggregationWeights&) = default;
};

// Throws InvalidArgument unless a and b have identical shapes.
void require_same_shape(const LayerTensor& a, const LayerTensor& b, const char* op);
void require_compatible(const ModelParams& a, const ModelParams& b, const char* op);

LayerTensor hadamard(const LayerTensor& a, const LayerTensor& b);

// dst += scale * src
void saxpy_inplace(LayerTensor& dst, double scale, const LayerTensor& src);

// Clamps every element to [0, 1]; NaN becomes 1.
void clip01_inplace(LayerTensor& w);

// Index of the first parameter tensor that belongs to the top `p` logical
// layers; tensors before it are overwritten by the global model.
std::size_t top_layers_begin(const ModelParams& params, int p);

// Element-wise interpolation of a local and global model. Tensors below the
// top-p range take the global values; within it,
//   out = local + (global - local) * w.
// An element with w == 1 yields the global value exactly.
ModelParams interpolate(const ModelParams& local, const ModelParams& global,
                        const AggregationWeights& w);

// Checks that `w` lines up with the top tensors of `params`.
void require_weights_cover_top(const ModelParams& params, const AggregationWeights& w);

}  // namespace fedala
