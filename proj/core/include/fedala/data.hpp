#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedala/model.hpp"

namespace fedala {

// Labelled samples. Features are row-major [size() x input_dim].
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * input_dim, input_dim);
  }
  // Throws SchemaError on inconsistent sizes or out-of-range labels.
  void validate() const;
  // Per-class sample counts (length num_classes).
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Rows `indices` of `data`, in the given order.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch as_batch(const Dataset& data);

// One isotropic unit-variance Gaussian blob per class; class means are drawn
// uniformly on the sphere of radius `class_sep`. Samples are grouped by class.
Dataset gen_synthetic(std::size_t num_classes, std::size_t input_dim,
                      std::size_t samples_per_class, double class_sep, std::uint64_t seed);

enum class PartitionScheme { kDirichlet, kPathological };

std::string to_string(PartitionScheme scheme);
PartitionScheme partition_scheme_from_string(const std::string& s);

struct PartitionConfig {
  PartitionScheme scheme = PartitionScheme::kDirichlet;
  double dirichlet_beta = 0.1;
  std::size_t classes_per_client = 2;
  std::size_t num_clients = 20;
  std::uint64_t seed = 0;
};

// Minimum samples per client so a train/test split is possible.
inline constexpr std::size_t kMinClientSamples = 2;

// Disjoint index sets covering every row of `data` exactly once.
//   dirichlet: per class c, q_c ~ Dir(beta * 1_N); the class's shuffled
//              samples are cut at floor(cumsum(q_c) * n_c).
//   pathological: classes are dealt round-robin over a seeded class
//              permutation so each client holds exactly classes_per_client
//              distinct labels; each class is split into equal disjoint shards
//              among its holders.
// Throws PartitionError if any client ends with fewer than 2 samples or the
// pathological layout cannot cover every class.
std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data,
                                                        const PartitionConfig& cfg);

std::vector<Dataset> partition(const Dataset& data, const PartitionConfig& cfg);

struct ClientSplit {
  Dataset train;
  Dataset test;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified split with round(test_fraction * n) test rows, clamped to
// [1, n - 1]. Per-class quotas use largest remainders; classes holding a
// single sample keep it in train unless the total cannot be met otherwise.
// Indices come back sorted.
SplitIndices split_indices(const Dataset& data, double test_fraction, std::uint64_t seed);
ClientSplit split_client(const Dataset& data, double test_fraction, std::uint64_t seed);

// ceil(s_percent / 100 * n), at least 1 for non-empty data.
std::size_t sample_count(std::size_t n, double s_percent);

// Uniform sample without replacement of sample_count(n, s_percent) rows.
std::vector<std::size_t> sample_fraction_indices(std::size_t n, double s_percent,
                                                 std::uint64_t seed);
Dataset sample_fraction(const Dataset& data, double s_percent, std::uint64_t seed);

// CSV with header `f0,...,fk,label`. Labels must be contiguous from 0.
Dataset load_csv(const std::filesystem::path& path);

// Shannon entropy (nats) of the label histogram.
double label_entropy(const Dataset& data);

}  // namespace fedala
