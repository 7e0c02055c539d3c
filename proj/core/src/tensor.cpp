#include "fedala/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "fedala/error.hpp"

namespace fedala {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

LayerTensor::LayerTensor(std::string name_, std::vector<std::size_t> shape_, int layer_)
    : name(std::move(name_)), shape(std::move(shape_)), data(shape_numel(shape), 0.0), layer(layer_) {
  for (auto d : shape)
    if (d == 0) throw InvalidArgument("tensor '" + name + "': zero-sized dimension");
}

LayerTensor::LayerTensor(std::string name_, std::vector<std::size_t> shape_,
                         std::vector<double> data_, int layer_)
    : name(std::move(name_)), shape(std::move(shape_)), data(std::move(data_)), layer(layer_) {
  if (shape_numel(shape) != data.size())
    throw InvalidArgument("tensor '" + name + "': shape does not match data length");
}

LayerTensor LayerTensor::filled_like(double value) const {
  LayerTensor out = *this;
  std::fill(out.data.begin(), out.data.end(), value);
  return out;
}

int ModelParams::num_logical_layers() const {
  int top = -1;
  for (const auto& t : layers) top = std::max(top, t.layer);
  return top + 1;
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& t : layers) n += t.size();
  return n;
}

bool ModelParams::compatible_with(const ModelParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.name != b.name || a.shape != b.shape || a.layer != b.layer || a.size() != b.size())
      return false;
  }
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& t : layers)
    for (double x : t.data)
      if (!std::isfinite(x)) return false;
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& t : out.layers) std::fill(t.data.begin(), t.data.end(), 0.0);
  return out;
}

std::size_t AggregationWeights::num_elements() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

void require_same_shape(const LayerTensor& a, const LayerTensor& b, const char* op) {
  if (a.shape != b.shape || a.size() != b.size())
    throw InvalidArgument(std::string(op) + ": shape mismatch between '" + a.name + "' and '" +
                          b.name + "'");
}

void require_compatible(const ModelParams& a, const ModelParams& b, const char* op) {
  if (!a.compatible_with(b)) throw InvalidArgument(std::string(op) + ": incompatible models");
}

LayerTensor hadamard(const LayerTensor& a, const LayerTensor& b) {
  require_same_shape(a, b, "hadamard");
  LayerTensor out = a;
  for (std::size_t q = 0; q < out.data.size(); ++q) out.data[q] = a.data[q] * b.data[q];
  return out;
}

void saxpy_inplace(LayerTensor& dst, double scale, const LayerTensor& src) {
  require_same_shape(dst, src, "saxpy");
  for (std::size_t q = 0; q < dst.data.size(); ++q) dst.data[q] += scale * src.data[q];
}

void clip01_inplace(LayerTensor& w) {
  for (double& x : w.data) x = std::max(0.0, std::min(1.0, x));
}

std::size_t top_layers_begin(const ModelParams& params, int p) {
  if (p < 0) throw InvalidArgument("layer range p must be non-negative");
  if (p > params.num_logical_layers())
    throw InvalidArgument("layer range p exceeds the model's " + std::to_string(params.num_logical_layers()) +
                          " logical layers");
  const int first = params.num_logical_layers() - p;
  std::size_t i = 0;
  while (i < params.layers.size() && params.layers[i].layer < first) ++i;
  return i;
}

void require_weights_cover_top(const ModelParams& params, const AggregationWeights& w) {
  const std::size_t n = w.tensors.size();
  if (n > params.layers.size())
    throw InvalidArgument("interpolate: more weight tensors than model tensors");
  const std::size_t begin = params.layers.size() - n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = params.layers[begin + i];
    const auto& wt = w.tensors[i];
    if (t.name != wt.name || t.shape != wt.shape || wt.size() != t.size())
      throw InvalidArgument("interpolate: weight tensor '" + wt.name +
                            "' does not match model tensor '" + t.name + "'");
  }
  // The covered tensors must be whole logical layers.
  if (begin > 0 && begin < params.layers.size() &&
      params.layers[begin - 1].layer == params.layers[begin].layer)
    throw InvalidArgument("interpolate: weights split a logical layer");
}

ModelParams interpolate(const ModelParams& local, const ModelParams& global,
                        const AggregationWeights& w) {
  require_compatible(local, global, "interpolate");
  require_weights_cover_top(local, w);
  ModelParams out = global;
  const std::size_t begin = local.layers.size() - w.tensors.size();
  for (std::size_t i = begin; i < local.layers.size(); ++i) {
    const auto& l = local.layers[i].data;
    const auto& g = global.layers[i].data;
    const auto& wt = w.tensors[i - begin].data;
    auto& o = out.layers[i].data;
    for (std::size_t q = 0; q < o.size(); ++q)
      o[q] = wt[q] == 1.0 ? g[q] : l[q] + (g[q] - l[q]) * wt[q];
  }
  return out;
}

}  // namespace fedala
