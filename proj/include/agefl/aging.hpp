#pragma once

// Age vectors (per cluster), frequency vectors (per client) and the
// parameter-server side request selection built on them.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "agefl/error.hpp"
#include "agefl/vectors.hpp"

namespace agefl {

using ClusterId = std::uint64_t;
using ClientId = std::size_t;

struct AgeVector {
  std::vector<std::uint64_t> ages;
  ClusterId cluster_id = 0;

  AgeVector() = default;
  explicit AgeVector(std::size_t dim, ClusterId id = 0) : ages(dim, 0), cluster_id(id) {}
  AgeVector(std::vector<std::uint64_t> a, ClusterId id) : ages(std::move(a)), cluster_id(id) {}

  std::size_t dim() const noexcept { return ages.size(); }
  std::uint64_t operator[](Index i) const { return ages[i]; }

  std::uint64_t sum() const noexcept {
    return std::accumulate(ages.begin(), ages.end(), std::uint64_t{0});
  }
  std::uint64_t max() const noexcept {
    return ages.empty() ? 0 : *std::max_element(ages.begin(), ages.end());
  }

  friend bool operator==(const AgeVector&, const AgeVector&) = default;
};

struct FrequencyVector {
  std::vector<std::uint64_t> counts;
  ClientId client_id = 0;

  FrequencyVector() = default;
  explicit FrequencyVector(std::size_t dim, ClientId id = 0) : counts(dim, 0), client_id(id) {}
  FrequencyVector(std::vector<std::uint64_t> c, ClientId id) : counts(std::move(c)), client_id(id) {}

  std::size_t dim() const noexcept { return counts.size(); }
  std::uint64_t total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
  bool is_zero() const noexcept {
    return std::all_of(counts.begin(), counts.end(), [](auto c) { return c == 0; });
  }

  friend bool operator==(const FrequencyVector&, const FrequencyVector&) = default;
};

namespace detail {

inline void check_indices(std::span<const Index> indices, std::size_t dim, const char* what) {
  for (Index j : indices)
    if (j >= dim)
      throw StructuralError(std::string(what) + ": index " + std::to_string(j) +
                            " out of range for dimension " + std::to_string(dim));
}

}  // namespace detail

// Every coordinate ages by one, then the requested coordinates are reset to 0.
inline AgeVector age_update(const AgeVector& a, std::span<const Index> requested) {
  detail::check_indices(requested, a.dim(), "age_update");
  AgeVector out = a;
  for (auto& v : out.ages) ++v;
  for (Index j : requested) out.ages[j] = 0;
  return out;
}

inline FrequencyVector record_request(const FrequencyVector& f, std::span<const Index> requested) {
  detail::check_indices(requested, f.dim(), "record_request");
  FrequencyVector out = f;
  for (Index j : make_index_set({requested.begin(), requested.end()})) ++out.counts[j];
  return out;
}

// Coordinate-wise minimum: a merged source is as fresh as its freshest member.
// The result keeps `into`'s cluster id.
inline AgeVector merge_age_vectors(const AgeVector& into, const AgeVector& from) {
  if (into.dim() != from.dim())
    throw StructuralError("merge_age_vectors: dimension mismatch " + std::to_string(into.dim()) +
                          " vs " + std::to_string(from.dim()));
  AgeVector out = into;
  for (std::size_t j = 0; j < out.dim(); ++j) out.ages[j] = std::min(out.ages[j], from.ages[j]);
  return out;
}

// A coordinate offered by a client, with the gradient magnitude it reported.
struct Candidate {
  Index index = 0;
  double magnitude = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

using CandidateSet = std::vector<Candidate>;

// Picks up to `k` candidates with the largest age, skipping those in `taken`.
// Ties go to the larger magnitude, then the lower index. Result is sorted.
inline IndexSet select_oldest(std::span<const std::uint64_t> ages, std::span<const Candidate> candidates,
                              std::size_t k, const std::unordered_set<Index>& taken = {}) {
  std::vector<Candidate> pool;
  pool.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.index >= ages.size())
      throw StructuralError("candidate index " + std::to_string(c.index) + " out of range");
    if (!taken.contains(c.index)) pool.push_back(c);
  }
  const auto older = [&](const Candidate& x, const Candidate& y) {
    if (ages[x.index] != ages[y.index]) return ages[x.index] > ages[y.index];
    if (x.magnitude != y.magnitude) return x.magnitude > y.magnitude;
    return x.index < y.index;
  };
  const std::size_t take = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(), older);
  IndexSet out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(pool[i].index);
  std::sort(out.begin(), out.end());
  return out;
}

// Greedy intra-cluster assignment: clients are served in the given order
// (ascending client id) and each gets its `budgets[i]` oldest candidates that no
// earlier client already received. The returned sets are pairwise disjoint.
inline std::vector<IndexSet> assign_disjoint_requests(const AgeVector& a,
                                                      std::span<const CandidateSet> candidate_sets,
                                                      std::span<const std::size_t> budgets) {
  if (budgets.size() != candidate_sets.size())
    throw StructuralError("assign_disjoint_requests: one budget per client required");
  std::unordered_set<Index> taken;
  std::vector<IndexSet> out;
  out.reserve(candidate_sets.size());
  for (std::size_t i = 0; i < candidate_sets.size(); ++i) {
    auto chosen = select_oldest(a.ages, candidate_sets[i], budgets[i], taken);
    taken.insert(chosen.begin(), chosen.end());
    out.push_back(std::move(chosen));
  }
  return out;
}

inline std::vector<IndexSet> assign_disjoint_requests(const AgeVector& a,
                                                      std::span<const CandidateSet> candidate_sets,
                                                      std::size_t k) {
  const std::vector<std::size_t> budgets(candidate_sets.size(), k);
  return assign_disjoint_requests(a, candidate_sets, budgets);
}

// Binary layout shared by age and frequency vectors:
//   u64 dimension, then `dimension` u64 values; all little-endian.
namespace detail {

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64_le(std::istream& is, std::uint64_t& offset) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("truncated integer", offset);
  offset += 8;
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_counts(std::ostream& os, std::span<const std::uint64_t> values) {
  detail::write_u64_le(os, values.size());
  for (auto v : values) detail::write_u64_le(os, v);
}

inline std::vector<std::uint64_t> read_counts(std::istream& is) {
  std::uint64_t offset = 0;
  const auto dim = detail::read_u64_le(is, offset);
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(dim, 1u << 24)));
  for (std::uint64_t i = 0; i < dim; ++i) out.push_back(detail::read_u64_le(is, offset));
  return out;
}

}  // namespace agefl
