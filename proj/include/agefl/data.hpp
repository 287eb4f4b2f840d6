#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "agefl/dataset.hpp"
#include "agefl/error.hpp"
#include "agefl/io.hpp"
#include "agefl/rng.hpp"

namespace agefl {

// Gaussian mixture: class c is centred at separation * z_c with z_c ~ N(0, I)
// drawn once per class, samples add unit isotropic noise. Features are then
// min-max scaled per column to [0, 1] over the whole dataset, which is affine
// and keeps the class geometry. Samples are grouped by class.
inline Dataset synth_generate(std::size_t num_classes, std::size_t input_dim, std::size_t per_class_count,
                              double separation, std::uint64_t seed) {
  if (num_classes == 0 || input_dim == 0) throw ParameterError("synth_generate: empty class or feature space");
  if (!(separation >= 0.0)) throw ParameterError("synth_generate: separation must be non-negative");
  Rng rng(seed);
  std::vector<double> means(num_classes * input_dim);
  for (auto& m : means) m = separation * rng.normal();

  Dataset ds;
  ds.input_dim = input_dim;
  ds.features.reserve(num_classes * per_class_count * input_dim);
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t s = 0; s < per_class_count; ++s) {
      for (std::size_t j = 0; j < input_dim; ++j) ds.features.push_back(means[c * input_dim + j] + rng.normal());
      ds.labels.push_back(static_cast<int>(c));
    }

  for (std::size_t j = 0; j < input_dim && !ds.empty(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t s = 0; s < ds.size(); ++s) {
      lo = std::min(lo, ds.features[s * input_dim + j]);
      hi = std::max(hi, ds.features[s * input_dim + j]);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t s = 0; s < ds.size(); ++s) {
      auto& v = ds.features[s * input_dim + j];
      v = std::clamp((v - lo) / span, 0.0, 1.0);
    }
  }
  return ds;
}

struct ShardPlan {
  std::vector<std::set<int>> classes;  // classes[client]

  std::size_t num_clients() const noexcept { return classes.size(); }

  void validate() const {
    if (classes.empty()) throw ParameterError("shard plan has no clients");
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (classes[c].empty()) throw ParameterError("client " + std::to_string(c) + " has no classes in the shard plan");
  }

  friend bool operator==(const ShardPlan&, const ShardPlan&) = default;
};

// Ten clients in five pairs; pair p holds labels {2p, 2p+1}.
inline ShardPlan mnist_pairs_plan() {
  ShardPlan plan;
  for (int p = 0; p < 5; ++p)
    for (int twice = 0; twice < 2; ++twice) plan.classes.push_back({2 * p, 2 * p + 1});
  return plan;
}

// Six clients in three pairs over ten classes (labels 0-based).
inline ShardPlan cifar_groups_plan() {
  const std::vector<std::set<int>> groups = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8, 9}};
  ShardPlan plan;
  for (const auto& g : groups)
    for (int twice = 0; twice < 2; ++twice) plan.classes.push_back(g);
  return plan;
}

// Ground-truth grouping implied by a plan: clients with identical class sets.
inline std::vector<std::size_t> plan_groups(const ShardPlan& plan) {
  std::map<std::set<int>, std::size_t> ids;
  std::vector<std::size_t> out;
  for (const auto& cls : plan.classes) {
    auto [it, inserted] = ids.try_emplace(cls, ids.size());
    out.push_back(it->second);
  }
  return out;
}

// Splits each class among the clients that hold it. In the default disjoint
// mode the class's samples are shuffled and dealt out evenly (earlier clients
// get the remainder); with `overlap` every holder gets all of them. Each
// client's samples keep their source order.
inline std::vector<Dataset> shard(const Dataset& data, const ShardPlan& plan, std::uint64_t seed,
                                  bool overlap = false) {
  plan.validate();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

  std::map<int, std::vector<std::size_t>> holders;
  for (std::size_t c = 0; c < plan.num_clients(); ++c)
    for (int label : plan.classes[c]) {
      if (!by_class.contains(label))
        throw ParameterError("shard: class " + std::to_string(label) + " is absent from the data");
      holders[label].push_back(c);
    }

  std::vector<std::vector<std::size_t>> picks(plan.num_clients());
  for (const auto& [label, clients] : holders) {
    auto samples = by_class[label];
    if (overlap) {
      for (auto c : clients) picks[c].insert(picks[c].end(), samples.begin(), samples.end());
      continue;
    }
    Rng rng(derive_seed(seed, "shard", static_cast<std::uint64_t>(label)));
    rng.shuffle(std::span<std::size_t>(samples));
    const std::size_t m = clients.size();
    const std::size_t base = samples.size() / m, extra = samples.size() % m;
    std::size_t pos = 0;
    for (std::size_t h = 0; h < m; ++h) {
      const std::size_t count = base + (h < extra ? 1 : 0);
      auto& dst = picks[clients[h]];
      dst.insert(dst.end(), samples.begin() + static_cast<std::ptrdiff_t>(pos),
                 samples.begin() + static_cast<std::ptrdiff_t>(pos + count));
      pos += count;
    }
  }

  std::vector<Dataset> out(plan.num_clients());
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    std::sort(picks[c].begin(), picks[c].end());
    out[c].input_dim = data.input_dim;
    for (auto i : picks[c]) out[c].push_back(data.row(i), data.labels[i]);
  }
  return out;
}

// IDX files: two zero bytes, a type code, the rank, `rank` big-endian u32
// dimensions, then the raw data. Only the unsigned-byte type (0x08) is used.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::uint32_t magic() const noexcept { return 0x0800u | static_cast<std::uint32_t>(dims.size()); }
  friend bool operator==(const IdxArray&, const IdxArray&) = default;
};

inline IdxArray read_idx(std::istream& is) {
  std::uint64_t offset = 0;
  const auto byte = [&]() -> std::uint8_t {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated IDX file", offset);
    ++offset;
    return static_cast<std::uint8_t>(c);
  };
  if (byte() != 0 || byte() != 0) throw FormatError("bad IDX magic: leading bytes must be zero", offset - 1);
  const std::uint8_t type = byte();
  if (type != 0x08) throw FormatError("unsupported IDX element type " + std::to_string(type), offset - 1);
  const std::uint8_t rank = byte();
  if (rank == 0) throw FormatError("IDX rank must be positive", offset - 1);
  IdxArray out;
  std::uint64_t count = 1;
  for (std::uint8_t r = 0; r < rank; ++r) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v = (v << 8) | byte();
    out.dims.push_back(v);
    count *= v;
  }
  out.data.resize(static_cast<std::size_t>(count));
  if (!is.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(count)))
    throw FormatError("truncated IDX payload: expected " + std::to_string(count) + " bytes", offset + static_cast<std::uint64_t>(is.gcount()));
  return out;
}

inline IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open IDX file '" + path.string() + "'");
  return read_idx(is);
}

inline void write_idx(std::ostream& os, const IdxArray& a) {
  std::uint64_t count = 1;
  for (auto d : a.dims) count *= d;
  if (a.dims.empty() || a.dims.size() > 255 || count != a.data.size())
    throw StructuralError("write_idx: dimensions do not describe the data");
  os.put(0);
  os.put(0);
  os.put(0x08);
  os.put(static_cast<char>(a.dims.size()));
  for (auto d : a.dims)
    for (int b = 3; b >= 0; --b) os.put(static_cast<char>((d >> (8 * b)) & 0xFF));
  os.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size()));
}

// Images (rank >= 2, first dim = count) scaled by 1/255, paired with labels.
inline Dataset idx_to_dataset(const IdxArray& images, const IdxArray& labels) {
  if (images.dims.size() < 2) throw StructuralError("image IDX must have rank >= 2");
  if (labels.dims.size() != 1) throw StructuralError("label IDX must have rank 1");
  if (images.dims[0] != labels.dims[0]) throw StructuralError("image and label counts differ");
  Dataset ds;
  ds.input_dim = images.data.size() / images.dims[0];
  ds.features.reserve(images.data.size());
  for (auto px : images.data) ds.features.push_back(static_cast<double>(px) / 255.0);
  ds.labels.assign(labels.data.begin(), labels.data.end());
  return ds;
}

inline Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
  return idx_to_dataset(read_idx(images), read_idx(labels));
}

// Without-replacement minibatches over a client's dataset, reshuffled at the
// start of every epoch. The last batch of an epoch may be short.
class BatchSampler {
 public:
  explicit BatchSampler(std::uint64_t seed) : rng_(seed) {}

  Dataset next_batch(const Dataset& ds, std::size_t batch_size) {
    if (ds.empty()) throw ParameterError("next_batch: empty dataset");
    if (batch_size == 0) throw ParameterError("next_batch: batch size must be positive");
    if (order_.size() != ds.size() || cursor_ >= order_.size()) start_epoch(ds.size());
    const std::size_t stop = std::min(order_.size(), cursor_ + batch_size);
    Dataset batch;
    batch.input_dim = ds.input_dim;
    batch.features.reserve((stop - cursor_) * ds.input_dim);
    for (; cursor_ < stop; ++cursor_) batch.push_back(ds.row(order_[cursor_]), ds.labels[order_[cursor_]]);
    return batch;
  }

  std::uint64_t epoch() const noexcept { return epoch_; }

 private:
  void start_epoch(std::size_t n) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(order_));
    cursor_ = 0;
    ++epoch_;
  }

  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

}  // namespace agefl
