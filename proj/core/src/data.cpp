#include "fedala/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fedala/error.hpp"
#include "fedala/rng.hpp"

namespace fedala {

void Dataset::validate() const {
  if (input_dim == 0) throw SchemaError("dataset: input_dim must be positive");
  if (features.size() != labels.size() * input_dim)
    throw SchemaError("dataset: feature matrix does not match label count");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw SchemaError("dataset: label " + std::to_string(y) + " out of range");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.input_dim = data.input_dim;
  out.num_classes = data.num_classes;
  out.labels.reserve(indices.size());
  out.features.reserve(indices.size() * data.input_dim);
  for (std::size_t i : indices) {
    if (i >= data.size()) throw InvalidArgument("subset: index out of range");
    out.labels.push_back(data.labels[i]);
    auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
  }
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b;
  b.input_dim = data.input_dim;
  b.labels.reserve(indices.size());
  b.features.reserve(indices.size() * data.input_dim);
  for (std::size_t i : indices) {
    b.labels.push_back(data.labels[i]);
    auto r = data.row(i);
    b.features.insert(b.features.end(), r.begin(), r.end());
  }
  return b;
}

Batch as_batch(const Dataset& data) {
  Batch b;
  b.input_dim = data.input_dim;
  b.features = data.features;
  b.labels = data.labels;
  return b;
}

Dataset gen_synthetic(std::size_t num_classes, std::size_t input_dim,
                      std::size_t samples_per_class, double class_sep, std::uint64_t seed) {
  if (num_classes == 0 || input_dim == 0 || samples_per_class == 0)
    throw InvalidArgument("gen_synthetic: counts must be positive");
  if (!(class_sep > 0.0)) throw InvalidArgument("gen_synthetic: class_sep must be positive");
  Rng rng(derive_seed(seed, {tag(Stream::kSynthetic)}));
  Dataset d;
  d.input_dim = input_dim;
  d.num_classes = num_classes;
  d.labels.reserve(num_classes * samples_per_class);
  d.features.reserve(num_classes * samples_per_class * input_dim);

  std::vector<double> mean(input_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& m : mean) {
        m = rng.normal();
        norm += m * m;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (auto& m : mean) m *= class_sep / norm;
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      for (std::size_t k = 0; k < input_dim; ++k) d.features.push_back(mean[k] + rng.normal());
      d.labels.push_back(static_cast<int>(c));
    }
  }
  return d;
}

std::string to_string(PartitionScheme scheme) {
  return scheme == PartitionScheme::kDirichlet ? "dirichlet" : "pathological";
}

PartitionScheme partition_scheme_from_string(const std::string& s) {
  if (s == "dirichlet") return PartitionScheme::kDirichlet;
  if (s == "pathological") return PartitionScheme::kPathological;
  throw InvalidArgument("unknown partition scheme '" + s + "'");
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  return by_class;
}

void dirichlet_partition(const Dataset& data, const PartitionConfig& cfg, Rng& rng,
                         std::vector<std::vector<std::size_t>>& clients) {
  if (!(cfg.dirichlet_beta > 0.0)) throw PartitionError("dirichlet_beta must be positive");
  auto by_class = indices_by_class(data);
  const std::size_t n_clients = cfg.num_clients;
  for (auto& idx : by_class) {
    const std::vector<double> q = rng.dirichlet(cfg.dirichlet_beta, n_clients);
    rng.shuffle(idx);
    const auto n_c = static_cast<double>(idx.size());
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n_clients; ++i) {
      cum += q[i];
      std::size_t end =
          i + 1 == n_clients ? idx.size() : std::min(idx.size(), static_cast<std::size_t>(std::floor(cum * n_c)));
      end = std::max(end, start);
      clients[i].insert(clients[i].end(), idx.begin() + static_cast<std::ptrdiff_t>(start),
                        idx.begin() + static_cast<std::ptrdiff_t>(end));
      start = end;
    }
  }
}

void pathological_partition(const Dataset& data, const PartitionConfig& cfg, Rng& rng,
                            std::vector<std::vector<std::size_t>>& clients) {
  const std::size_t n_classes = data.num_classes;
  const std::size_t per_client = cfg.classes_per_client;
  if (per_client == 0 || per_client > n_classes)
    throw PartitionError("classes_per_client must be in [1, num_classes]");
  if (cfg.num_clients * per_client < n_classes)
    throw PartitionError("pathological: num_clients * classes_per_client < num_classes leaves classes unassigned");

  std::vector<std::size_t> perm(n_classes);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  std::vector<std::vector<std::size_t>> holders(n_classes);
  for (std::size_t i = 0; i < cfg.num_clients; ++i)
    for (std::size_t j = 0; j < per_client; ++j) holders[perm[(i * per_client + j) % n_classes]].push_back(i);

  auto by_class = indices_by_class(data);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& idx = by_class[c];
    const auto& h = holders[c];
    if (idx.size() < h.size())
      throw PartitionError("pathological: class " + std::to_string(c) + " has " +
                           std::to_string(idx.size()) + " samples for " + std::to_string(h.size()) +
                           " holders");
    rng.shuffle(idx);
    const std::size_t base = idx.size() / h.size();
    const std::size_t extra = idx.size() % h.size();
    std::size_t start = 0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const std::size_t len = base + (k < extra ? 1 : 0);
      clients[h[k]].insert(clients[h[k]].end(), idx.begin() + static_cast<std::ptrdiff_t>(start),
                           idx.begin() + static_cast<std::ptrdiff_t>(start + len));
      start += len;
    }
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data,
                                                        const PartitionConfig& cfg) {
  data.validate();
  if (cfg.num_clients == 0) throw PartitionError("num_clients must be positive");
  Rng rng(derive_seed(cfg.seed, {tag(Stream::kPartition)}));
  std::vector<std::vector<std::size_t>> clients(cfg.num_clients);
  if (cfg.scheme == PartitionScheme::kDirichlet)
    dirichlet_partition(data, cfg, rng, clients);
  else
    pathological_partition(data, cfg, rng, clients);

  for (std::size_t i = 0; i < clients.size(); ++i) {
    std::sort(clients[i].begin(), clients[i].end());
    if (clients[i].size() < kMinClientSamples)
      throw PartitionError("client " + std::to_string(i) + " received " +
                           std::to_string(clients[i].size()) +
                           " samples (minimum 2); raise the sample count or beta, or change the seed");
  }
  return clients;
}

std::vector<Dataset> partition(const Dataset& data, const PartitionConfig& cfg) {
  auto idx = partition_indices(data, cfg);
  std::vector<Dataset> out;
  out.reserve(idx.size());
  for (const auto& client : idx) out.push_back(subset(data, client));
  return out;
}

SplitIndices split_indices(const Dataset& data, double test_fraction, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 2) throw SplitError("split: need at least 2 samples, got " + std::to_string(n));
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw SplitError("split: test_fraction must be in (0, 1)");
  const auto target = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n))), 1, n - 1);

  Rng rng(derive_seed(seed, {tag(Stream::kSplit)}));
  auto by_class = indices_by_class(data);
  const std::size_t n_classes = by_class.size();
  std::vector<std::size_t> quota(n_classes, 0);
  std::vector<double> remainder(n_classes, 0.0);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double exact = test_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    if (by_class[c].size() > 1) quota[c] = std::min(quota[c], by_class[c].size() - 1);
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  // Hand out the rest by largest remainder. Singleton classes come last and a
  // class never gives up its final training sample while alternatives exist.
  std::vector<std::size_t> order(n_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool sa = by_class[a].size() <= 1, sb = by_class[b].size() <= 1;
    if (sa != sb) return !sa;
    return remainder[a] > remainder[b];
  });
  for (int pass = 0; pass < 2 && assigned < target; ++pass) {
    bool progress = true;
    while (progress && assigned < target) {
      progress = false;
      for (std::size_t c : order) {
        if (assigned >= target) break;
        const std::size_t size = by_class[c].size();
        const std::size_t cap = pass == 1 ? size : (size > 1 ? size - 1 : 0);
        if (quota[c] < cap) {
          ++quota[c];
          ++assigned;
          progress = true;
        }
      }
    }
  }

  SplitIndices out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto idx = by_class[c];
    rng.shuffle(idx);
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

ClientSplit split_client(const Dataset& data, double test_fraction, std::uint64_t seed) {
  auto idx = split_indices(data, test_fraction, seed);
  return {subset(data, idx.train), subset(data, idx.test)};
}

std::size_t sample_count(std::size_t n, double s_percent) {
  if (!(s_percent > 0.0 && s_percent <= 100.0))
    throw InvalidArgument("s_percent must be in (0, 100]");
  if (n == 0) return 0;
  // The small offset keeps exact products (80% of 40) from rounding up.
  const double exact = s_percent * static_cast<double>(n) / 100.0;
  const auto m = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(m, 1, n);
}

std::vector<std::size_t> sample_fraction_indices(std::size_t n, double s_percent,
                                                 std::uint64_t seed) {
  const std::size_t m = sample_count(n, s_percent);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first m slots are a uniform sample.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

Dataset sample_fraction(const Dataset& data, double s_percent, std::uint64_t seed) {
  const auto idx = sample_fraction_indices(data.size(), s_percent, seed);
  return subset(data, idx);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open '" + path.string() + "'");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw SchemaError("csv '" + path.string() + "' is empty");
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header.back() != "label")
    throw SchemaError("csv header must be f0,...,fk,label");
  for (std::size_t k = 0; k + 1 < header.size(); ++k)
    if (header[k] != "f" + std::to_string(k))
      throw SchemaError("csv header column " + std::to_string(k) + " must be 'f" + std::to_string(k) + "'");

  Dataset d;
  d.input_dim = header.size() - 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                    std::to_string(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string cell = trim(cells[k]);
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (k + 1 < cells.size()) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || cell.empty() || !std::isfinite(v))
          throw ParseError(line_no, "column '" + header[k] + "' is not a number: '" + cell + "'");
        d.features.push_back(v);
      } else {
        int y = 0;
        auto [ptr, ec] = std::from_chars(first, last, y);
        if (ec != std::errc() || ptr != last || cell.empty() || y < 0)
          throw ParseError(line_no, "label is not a non-negative integer: '" + cell + "'");
        d.labels.push_back(y);
      }
    }
  }
  if (d.labels.empty()) throw SchemaError("csv '" + path.string() + "' has no data rows");
  const std::set<int> distinct(d.labels.begin(), d.labels.end());
  const int max_label = *distinct.rbegin();
  if (static_cast<std::size_t>(max_label) + 1 != distinct.size())
    throw SchemaError("csv labels must be contiguous from 0 (found max label " +
                      std::to_string(max_label) + " with " + std::to_string(distinct.size()) +
                      " distinct labels)");
  d.num_classes = distinct.size();
  return d;
}

double label_entropy(const Dataset& data) {
  if (data.size() == 0) return 0.0;
  double h = 0.0;
  const auto n = static_cast<double>(data.size());
  for (std::size_t c : data.class_counts()) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace fedala
