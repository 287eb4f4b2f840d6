#pragma once

// Gradient compression operators: top-k, rTop-k and rAge-k, together with the
// contraction constants that bound how much energy they can discard.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agefl/aging.hpp"
#include "agefl/error.hpp"
#include "agefl/rng.hpp"
#include "agefl/vectors.hpp"

namespace agefl {

enum class SparsifierType { TopK, RTopK, RAgeK };

inline std::string_view to_string(SparsifierType t) {
  switch (t) {
    case SparsifierType::TopK: return "top_k";
    case SparsifierType::RTopK: return "rtop_k";
    case SparsifierType::RAgeK: return "rage_k";
  }
  return "?";
}

inline SparsifierType parse_sparsifier_type(std::string_view name) {
  if (name == "top_k" || name == "topk") return SparsifierType::TopK;
  if (name == "rtop_k" || name == "rtopk") return SparsifierType::RTopK;
  if (name == "rage_k" || name == "ragek") return SparsifierType::RAgeK;
  throw ParameterError("unknown sparsifier '" + std::string(name) + "' (expected top_k, rtop_k or rage_k)");
}

struct SparsifierKind {
  SparsifierType type = SparsifierType::RAgeK;
  std::size_t r = 0;  // candidate pool; ignored (treated as k) for top-k
  std::size_t k = 0;

  std::size_t pool() const noexcept { return type == SparsifierType::TopK ? k : r; }

  void validate(std::size_t dim) const {
    if (k < 1 || k > pool() || pool() > dim)
      throw ParameterError("sparsifier budgets must satisfy 1 <= k <= r <= d (k=" + std::to_string(k) +
                           ", r=" + std::to_string(pool()) + ", d=" + std::to_string(dim) + ")");
  }
};

namespace detail {

inline void check_budget(std::size_t k, std::size_t r, std::size_t dim) {
  if (k < 1 || k > r || r > dim)
    throw ParameterError("budgets must satisfy 1 <= k <= r <= d (k=" + std::to_string(k) +
                         ", r=" + std::to_string(r) + ", d=" + std::to_string(dim) + ")");
}

// Indices ordered by decreasing |g|, ties to the lower index; first `count` only.
inline std::vector<Index> largest_magnitudes(const GradientVector& g, std::size_t count) {
  std::vector<Index> order(g.dim());
  std::iota(order.begin(), order.end(), Index{0});
  const auto before = [&](Index a, Index b) {
    const double ma = std::abs(g[a]);
    const double mb = std::abs(g[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  const auto mid = order.begin() + static_cast<std::ptrdiff_t>(count);
  std::partial_sort(order.begin(), mid, order.end(), before);
  order.resize(count);
  return order;
}

}  // namespace detail

inline IndexSet top_r_indices(const GradientVector& g, std::size_t r) {
  if (r < 1 || r > g.dim())
    throw ParameterError("r must lie in [1, d] (r=" + std::to_string(r) + ", d=" + std::to_string(g.dim()) + ")");
  if (!g.all_finite()) throw NumericalError("top_r_indices: non-finite gradient");
  auto out = detail::largest_magnitudes(g, r);
  std::sort(out.begin(), out.end());
  return out;
}

// The top-r set annotated with magnitudes: what a client reports in the
// index-report phase of the rAge-k handshake.
inline CandidateSet top_r_candidates(const GradientVector& g, std::size_t r) {
  CandidateSet out;
  for (Index i : top_r_indices(g, r)) out.push_back({i, std::abs(g[i])});
  return out;
}

inline SparseUpdate top_k_sparsify(const GradientVector& g, std::size_t k) {
  if (k < 1 || k > g.dim())
    throw ParameterError("k must lie in [1, d] (k=" + std::to_string(k) + ", d=" + std::to_string(g.dim()) + ")");
  return restrict_to(g, top_r_indices(g, k));
}

inline SparseUpdate r_top_k_sparsify(const GradientVector& g, std::size_t r, std::size_t k, Rng& rng) {
  detail::check_budget(k, r, g.dim());
  auto pool = top_r_indices(g, r);
  if (k == r) return restrict_to(g, std::move(pool));
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return restrict_to(g, std::move(pool));
}

struct RAgeKResult {
  SparseUpdate update;
  AgeVector ages;
};

// Single-client rAge-k: among the r largest-magnitude coordinates request the k
// stalest ones, then age every coordinate and reset the requested ones.
inline RAgeKResult r_age_k_sparsify(const GradientVector& g, const AgeVector& a, std::size_t r, std::size_t k) {
  if (a.dim() != g.dim())
    throw ParameterError("age vector dimension " + std::to_string(a.dim()) + " does not match gradient dimension " +
                         std::to_string(g.dim()));
  detail::check_budget(k, r, g.dim());
  const auto candidates = top_r_candidates(g, r);
  auto selected = select_oldest(a.ages, candidates, k);
  auto ages = age_update(a, selected);
  return {restrict_to(g, std::move(selected)), std::move(ages)};
}

struct CompressionStats {
  double beta = 1.0;
  double gamma_linear_beta = 1.0;  // k / (k + (r-k) beta + (d-r))
  double gamma_safe = 1.0;   // k / (k + (r-k) beta^2 + (d-r))
  double retained_energy_fraction = 1.0;
};

inline double gamma_linear(std::size_t d, std::size_t r, std::size_t k, double beta) {
  const double kd = static_cast<double>(k);
  return kd / (kd + static_cast<double>(r - k) * beta + static_cast<double>(d - r));
}

inline double gamma_squared(std::size_t d, std::size_t r, std::size_t k, double beta) {
  const double kd = static_cast<double>(k);
  return kd / (kd + static_cast<double>(r - k) * beta * beta + static_cast<double>(d - r));
}

// beta is the ratio of the largest to the r-th largest magnitude of g. The
// retained fraction is for the worst selection rAge-k could make: the k
// smallest magnitudes among the top r.
inline CompressionStats compression_stats(const GradientVector& g, std::size_t r, std::size_t k) {
  detail::check_budget(k, r, g.dim());
  if (!g.all_finite()) throw NumericalError("compression_stats: non-finite gradient");
  const auto order = detail::largest_magnitudes(g, r);
  const double largest = std::abs(g[order.front()]);
  const double rth = std::abs(g[order.back()]);
  if (rth == 0.0)
    throw DegenerateInputError("compression_stats: r-th largest magnitude is zero, beta undefined");
  CompressionStats s;
  s.beta = largest / rth;
  s.gamma_linear_beta = gamma_linear(g.dim(), r, k, s.beta);
  s.gamma_safe = gamma_squared(g.dim(), r, k, s.beta);
  double worst = 0.0;
  for (std::size_t i = r - k; i < r; ++i) worst += g[order[i]] * g[order[i]];
  s.retained_energy_fraction = worst / g.squared_norm();
  return s;
}

}  // namespace agefl
