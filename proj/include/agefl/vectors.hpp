#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agefl/error.hpp"

namespace agefl {

using Index = std::size_t;

// Sorted, duplicate-free list of coordinates.
using IndexSet = std::vector<Index>;

// Dense length-d real vector. Holds gradients as well as flat parameter vectors.
class GradientVector {
 public:
  GradientVector() = default;
  explicit GradientVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit GradientVector(std::vector<double> values) : values_(std::move(values)) {}
  GradientVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator[](Index i) { return values_[i]; }
  double operator[](Index i) const { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
  }

  double norm() const noexcept { return std::sqrt(squared_norm()); }

  friend bool operator==(const GradientVector&, const GradientVector&) = default;

 private:
  std::vector<double> values_;
};

struct SparseEntry {
  Index index = 0;
  double value = 0.0;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

// On-wire payload of one client for one round: the values it sent plus the
// index set the parameter server asked for.
struct SparseUpdate {
  std::size_t dim = 0;
  std::vector<SparseEntry> entries;  // strictly increasing indices
  IndexSet requested;                // sorted; entries' indices are a subset

  std::size_t nnz() const noexcept { return entries.size(); }

  void validate() const {
    if (dim == 0) throw StructuralError("sparse update has zero dimension");
    for (std::size_t i = 0; i < requested.size(); ++i) {
      if (requested[i] >= dim)
        throw StructuralError("requested index " + std::to_string(requested[i]) +
                              " out of range for dimension " + std::to_string(dim));
      if (i > 0 && requested[i] <= requested[i - 1])
        throw StructuralError("requested indices not strictly increasing");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Index idx = entries[i].index;
      if (idx >= dim)
        throw StructuralError("entry index " + std::to_string(idx) + " out of range for dimension " +
                              std::to_string(dim));
      if (i > 0 && idx <= entries[i - 1].index)
        throw StructuralError("entry indices not strictly increasing (duplicate or unsorted at " +
                              std::to_string(idx) + ")");
      if (!std::binary_search(requested.begin(), requested.end(), idx))
        throw StructuralError("entry index " + std::to_string(idx) + " was not requested");
      if (!std::isfinite(entries[i].value)) throw NumericalError("non-finite value in sparse update");
    }
  }

  friend bool operator==(const SparseUpdate&, const SparseUpdate&) = default;
};

// Sorts and deduplicates an arbitrary index list.
inline IndexSet make_index_set(std::vector<Index> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return indices;
}

// Restriction of a dense vector to `support`: keeps the nonzero values of v on
// the support, and records the whole support as the requested set.
inline SparseUpdate restrict_to(const GradientVector& v, IndexSet support) {
  SparseUpdate u;
  u.dim = v.dim();
  u.requested = std::move(support);
  u.entries.reserve(u.requested.size());
  for (Index i : u.requested) {
    if (i >= v.dim()) throw StructuralError("support index " + std::to_string(i) + " out of range");
    if (v[i] != 0.0) u.entries.push_back({i, v[i]});
  }
  return u;
}

inline GradientVector densify(const SparseUpdate& u) {
  u.validate();
  GradientVector out(u.dim);
  for (const auto& e : u.entries) out[e.index] = e.value;
  return out;
}

// Coordinate-wise sum of the updates, accumulated in the order given (callers
// pass them in ascending client order, which fixes the floating-point result).
inline GradientVector aggregate(std::span<const SparseUpdate> updates, std::size_t dim) {
  if (dim == 0) throw StructuralError("aggregate requires a positive dimension");
  GradientVector sum(dim);
  for (const auto& u : updates) {
    if (u.dim != dim)
      throw StructuralError("dimension mismatch in aggregate: expected " + std::to_string(dim) +
                            ", got " + std::to_string(u.dim));
    u.validate();
    for (const auto& e : u.entries) sum[e.index] += e.value;
  }
  return sum;
}

}  // namespace agefl
