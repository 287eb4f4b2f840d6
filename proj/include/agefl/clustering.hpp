#pragma once

// Client clustering from request-frequency vectors: asymmetric similarity,
// conversion to a DBSCAN distance, DBSCAN itself, and the recluster step that
// carries age vectors across partitions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "agefl/aging.hpp"
#include "agefl/error.hpp"
#include "agefl/io.hpp"

namespace agefl {

struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // row-major

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size, double fill = 0.0) : n(size), values(size * size, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;
};

namespace detail {

inline std::uint64_t dot(const FrequencyVector& a, const FrequencyVector& b) {
  if (a.dim() != b.dim()) throw StructuralError("frequency vectors differ in dimension");
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < a.dim(); ++j) s += a.counts[j] * b.counts[j];
  return s;
}

}  // namespace detail

// <f1, f2> / <f1, f1>. Not symmetric: normalised by the first client.
inline double similarity(const FrequencyVector& f1, const FrequencyVector& f2) {
  const auto self = detail::dot(f1, f1);
  if (self == 0) throw DegenerateInputError("similarity: first frequency vector is zero");
  return static_cast<double>(detail::dot(f1, f2)) / static_cast<double>(self);
}

// Row i holds similarity(f_i, f_j). A client with a zero frequency vector has
// similarity 0 to everyone, itself included.
inline SquareMatrix similarity_matrix(std::span<const FrequencyVector> freqs) {
  SquareMatrix s(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (freqs[i].is_zero()) {
      for (std::size_t j = 0; j < freqs.size(); ++j) detail::dot(freqs[i], freqs[j]);  // dimension check
      continue;
    }
    for (std::size_t j = 0; j < freqs.size(); ++j) s(i, j) = similarity(freqs[i], freqs[j]);
  }
  return s;
}

// Two clients are close only when both directed similarities are high.
inline SquareMatrix similarity_to_distance(const SquareMatrix& s) {
  SquareMatrix d(s.n);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.n; ++j)
      d(i, j) = i == j ? 0.0 : 1.0 - std::min(1.0, std::min(s(i, j), s(j, i)));
  return d;
}

struct DbscanResult {
  static constexpr long kNoise = -1;

  std::vector<long> labels;                   // cluster number per point, or kNoise
  std::vector<std::vector<std::size_t>> clusters;  // in discovery order, members ascending
  std::vector<std::size_t> noise;
  std::vector<bool> core;
};

// Classic DBSCAN over a precomputed distance matrix. Neighbourhoods include the
// point itself and use dist <= eps. Points are scanned in ascending index, so a
// border point reachable from several clusters joins the first one discovered.
inline DbscanResult dbscan(const SquareMatrix& dist, double eps, std::size_t min_pts) {
  const std::size_t n = dist.n;
  if (dist.values.size() != n * n) throw StructuralError("dbscan: matrix storage does not match its size");
  if (!(eps > 0.0)) throw ParameterError("dbscan: eps must be positive");
  if (min_pts < 1) throw ParameterError("dbscan: minPts must be at least 1");
  for (std::size_t i = 0; i < n; ++i) {
    if (dist(i, i) != 0.0) throw StructuralError("dbscan: distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(dist(i, j)) || dist(i, j) < 0.0)
        throw StructuralError("dbscan: distances must be finite and non-negative");
      if (dist(i, j) != dist(j, i)) throw StructuralError("dbscan: distance matrix is not symmetric");
    }
  }

  std::vector<std::vector<std::size_t>> neighbours(n);
  DbscanResult out;
  out.core.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (dist(i, j) <= eps) neighbours[i].push_back(j);
    out.core[i] = neighbours[i].size() >= min_pts;
  }

  constexpr long kUnvisited = -2;
  out.labels.assign(n, kUnvisited);
  for (std::size_t p = 0; p < n; ++p) {
    if (out.labels[p] != kUnvisited) continue;
    if (!out.core[p]) {
      out.labels[p] = DbscanResult::kNoise;
      continue;
    }
    const long id = static_cast<long>(out.clusters.size());
    out.clusters.emplace_back();
    out.labels[p] = id;
    std::vector<std::size_t> frontier{p};
    while (!frontier.empty()) {
      const std::size_t q = frontier.back();
      frontier.pop_back();
      if (!out.core[q]) continue;
      for (std::size_t x : neighbours[q]) {
        if (out.labels[x] == kUnvisited || out.labels[x] == DbscanResult::kNoise) {
          out.labels[x] = id;
          frontier.push_back(x);
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] == DbscanResult::kNoise)
      out.noise.push_back(i);
    else
      out.clusters[static_cast<std::size_t>(out.labels[i])].push_back(i);
  }
  return out;
}

struct Cluster {
  ClusterId id = 0;
  std::vector<ClientId> members;  // ascending
  AgeVector ages;

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

// Partition of the clients; every cluster, singletons included, owns one age
// vector. Clusters are kept sorted by their smallest member.
class ClusterState {
 public:
  ClusterState() = default;

  // Every client starts as its own cluster with a fresh age vector.
  static ClusterState singletons(std::size_t num_clients, std::size_t dim) {
    ClusterState s;
    s.dim_ = dim;
    for (ClientId c = 0; c < num_clients; ++c) {
      s.clusters_.push_back({c, {c}, AgeVector(dim, c)});
      s.noise_.push_back(c);
    }
    s.next_id_ = num_clients;
    s.rebuild_index();
    return s;
  }

  std::size_t num_clients() const noexcept { return assignment_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
  std::vector<Cluster>& clusters() noexcept { return clusters_; }
  const std::vector<ClientId>& noise() const noexcept { return noise_; }

  const Cluster& cluster_of(ClientId c) const { return clusters_.at(assignment_.at(c)); }
  Cluster& cluster_of(ClientId c) { return clusters_.at(assignment_.at(c)); }

  // Cluster id of each client.
  std::vector<ClusterId> labels() const {
    std::vector<ClusterId> out(assignment_.size());
    for (ClientId c = 0; c < assignment_.size(); ++c) out[c] = clusters_[assignment_[c]].id;
    return out;
  }

  ClusterId next_id() const noexcept { return next_id_; }

  friend bool operator==(const ClusterState&, const ClusterState&) = default;

 private:
  friend ClusterState apply_partition(const ClusterState&, const DbscanResult&);

  void rebuild_index() {
    std::sort(clusters_.begin(), clusters_.end(),
              [](const Cluster& a, const Cluster& b) { return a.members.front() < b.members.front(); });
    std::size_t n = 0;
    for (const auto& cl : clusters_) n += cl.members.size();
    assignment_.assign(n, 0);
    for (std::size_t i = 0; i < clusters_.size(); ++i)
      for (ClientId c : clusters_[i].members) assignment_.at(c) = i;
  }

  std::vector<Cluster> clusters_;
  std::vector<std::size_t> assignment_;
  std::vector<ClientId> noise_;
  std::size_t dim_ = 0;
  ClusterId next_id_ = 0;
};

// Carries age vectors from `old` onto the partition found by DBSCAN.
//
// Each multi-member cluster of `old` has a successor: the new group holding most
// of its members (ties: the group holding its lowest such member). A client
// keeps its cluster identity when its new group is that successor; a client that
// was a singleton keeps it only if it is still alone. A new group's age vector
// is the coordinate-wise min of the vectors of the old clusters whose members
// kept their identity in it, and is zero if any member changed identity. A
// group that equals an old cluster therefore keeps its vector and id unchanged.
inline ClusterState apply_partition(const ClusterState& old, const DbscanResult& db) {
  const std::size_t n = old.num_clients();
  if (db.labels.size() != n) throw StructuralError("recluster: partition size does not match client count");

  std::vector<std::vector<ClientId>> groups = db.clusters;
  for (ClientId c : db.noise) groups.push_back({c});
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  std::vector<std::size_t> group_of(n);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (ClientId c : groups[g]) group_of[c] = g;

  std::vector<std::optional<std::size_t>> successor(old.clusters().size());
  for (std::size_t oi = 0; oi < old.clusters().size(); ++oi) {
    const auto& members = old.clusters()[oi].members;
    if (members.size() < 2) continue;
    std::map<std::size_t, std::size_t> overlap;
    for (ClientId c : members) ++overlap[group_of[c]];
    std::size_t best = group_of[members.front()];
    for (ClientId c : members) {  // ascending, so the first maximum holds the lowest member
      if (overlap[group_of[c]] > overlap[best]) best = group_of[c];
    }
    successor[oi] = best;
  }

  ClusterState next;
  next.dim_ = old.dim();
  next.next_id_ = old.next_id();
  next.noise_ = db.noise;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::set<std::size_t> kept;  // indices of old clusters whose identity continues here
    bool any_changed = false;
    for (ClientId c : groups[g]) {
      const std::size_t oi = old.assignment_[c];
      const auto& was = old.clusters()[oi];
      const bool preserved = was.members.size() == 1 ? groups[g].size() == 1 : successor[oi] == g;
      if (preserved)
        kept.insert(oi);
      else
        any_changed = true;
    }
    Cluster cl;
    cl.members = groups[g];
    if (kept.empty()) {
      cl.id = next.next_id_++;
      cl.ages = AgeVector(old.dim(), cl.id);
    } else {
      ClusterId id = old.clusters()[*kept.begin()].id;
      for (auto oi : kept) id = std::min(id, old.clusters()[oi].id);
      cl.id = id;
      cl.ages = old.clusters()[*kept.begin()].ages;
      for (auto oi : kept) cl.ages = merge_age_vectors(cl.ages, old.clusters()[oi].ages);
      if (any_changed) std::fill(cl.ages.ages.begin(), cl.ages.ages.end(), 0);
      cl.ages.cluster_id = cl.id;
    }
    next.clusters_.push_back(std::move(cl));
  }
  next.rebuild_index();
  return next;
}

struct ReclusterEvent {
  SquareMatrix similarity;
  SquareMatrix distance;
  DbscanResult dbscan;
  ClusterState state;
};

inline ReclusterEvent recluster_traced(const ClusterState& state, std::span<const FrequencyVector> freqs,
                                       double eps, std::size_t min_pts) {
  if (freqs.size() != state.num_clients())
    throw StructuralError("recluster: expected one frequency vector per client");
  ReclusterEvent ev;
  ev.similarity = similarity_matrix(freqs);
  ev.distance = similarity_to_distance(ev.similarity);
  ev.dbscan = dbscan(ev.distance, eps, min_pts);
  ev.state = apply_partition(state, ev.dbscan);
  return ev;
}

inline ClusterState recluster(const ClusterState& state, std::span<const FrequencyVector> freqs, double eps,
                              std::size_t min_pts) {
  return recluster_traced(state, freqs, eps, min_pts).state;
}

// Adjusted Rand index between two labelings of the same points. Identical
// partitions score 1 even in the degenerate all-singleton / single-block cases.
template <typename LabelA, typename LabelB>
double adjusted_rand_index(std::span<const LabelA> a, std::span<const LabelB> b) {
  if (a.size() != b.size()) throw StructuralError("adjusted_rand_index: label vectors differ in length");
  const auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<LabelA, LabelB>, double> joint;
  std::map<LabelA, double> rows;
  std::map<LabelB, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, v] : joint) index += pairs(v);
  for (const auto& [key, v] : rows) sum_rows += pairs(v);
  for (const auto& [key, v] : cols) sum_cols += pairs(v);
  const double total = pairs(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return joint.size() == rows.size() && joint.size() == cols.size() ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

// Row-major CSV with a header row of client ids.
inline void write_matrix_csv(std::ostream& os, const SquareMatrix& m) {
  os << "client";
  for (std::size_t j = 0; j < m.n; ++j) os << ',' << j;
  os << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    os << i;
    for (std::size_t j = 0; j < m.n; ++j) os << ',' << format_double(m(i, j));
    os << '\n';
  }
}

}  // namespace agefl
