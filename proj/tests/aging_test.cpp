#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "agefl/aging.hpp"
#include "agefl/rng.hpp"

namespace agefl {
namespace {

using Ages = std::vector<std::uint64_t>;

TEST(AgeUpdate, ResetsRequestedAndAgesTheRest) {
  EXPECT_EQ(age_update(AgeVector({0, 0, 0}, 0), IndexSet{}).ages, (Ages{1, 1, 1}));
  EXPECT_EQ(age_update(AgeVector({3, 5, 0}, 0), IndexSet{0, 2}).ages, (Ages{0, 6, 0}));
  EXPECT_EQ(age_update(AgeVector({9, 1}, 0), IndexSet{0, 1}).ages, (Ages{0, 0}));
  EXPECT_THROW(age_update(AgeVector({9, 1}, 0), IndexSet{2}), StructuralError);
}

TEST(RecordRequest, CountsRequests) {
  EXPECT_EQ(record_request(FrequencyVector({0, 0}, 0), IndexSet{1}).counts, (Ages{0, 1}));
  EXPECT_EQ(record_request(FrequencyVector({2, 3}, 0), IndexSet{}).counts, (Ages{2, 3}));
  EXPECT_EQ(record_request(FrequencyVector({1, 1, 1}, 0), IndexSet{0, 2}).counts, (Ages{2, 1, 2}));
  EXPECT_THROW(record_request(FrequencyVector({1}, 0), IndexSet{1}), StructuralError);
}

TEST(MergeAgeVectors, CoordinateWiseMinimum) {
  EXPECT_EQ(merge_age_vectors(AgeVector({3, 0, 5}, 0), AgeVector({1, 4, 5}, 1)).ages, (Ages{1, 0, 5}));
  const AgeVector a({4, 2, 7}, 3);
  EXPECT_EQ(merge_age_vectors(a, a), a);
  EXPECT_EQ(merge_age_vectors(a, AgeVector(3)).ages, (Ages{0, 0, 0}));
  EXPECT_THROW(merge_age_vectors(a, AgeVector(2)), StructuralError);
}

CandidateSet candidates(std::initializer_list<Index> idx) {
  CandidateSet out;
  for (Index i : idx) out.push_back({i, 1.0});
  return out;
}

TEST(AssignDisjointRequests, SplitsSharedCandidatesGreedily) {
  const AgeVector a({9, 8, 7, 6}, 0);
  const std::vector<CandidateSet> sets = {candidates({0, 1, 2, 3}), candidates({0, 1, 2, 3})};
  const auto out = assign_disjoint_requests(a, sets, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (IndexSet{0, 1}));
  EXPECT_EQ(out[1], (IndexSet{2, 3}));
}

TEST(AssignDisjointRequests, SingleClientIsPlainTopAge) {
  const AgeVector a({1, 5, 3, 5, 0}, 0);
  const std::vector<CandidateSet> sets = {{{0, 1.0}, {1, 0.5}, {3, 0.9}, {4, 2.0}}};
  EXPECT_EQ(assign_disjoint_requests(a, sets, 2)[0], select_oldest(a.ages, sets[0], 2));
  EXPECT_EQ(select_oldest(a.ages, sets[0], 2), (IndexSet{1, 3}));
}

TEST(AssignDisjointRequests, DisjointCandidatesSelectIndependently) {
  const AgeVector a({1, 5, 3, 5, 0, 2}, 0);
  const std::vector<CandidateSet> sets = {candidates({0, 1, 2}), candidates({3, 4, 5})};
  const auto out = assign_disjoint_requests(a, sets, 2);
  EXPECT_EQ(out[0], select_oldest(a.ages, sets[0], 2));
  EXPECT_EQ(out[1], select_oldest(a.ages, sets[1], 2));
}

TEST(AssignDisjointRequests, ShortSetWhenCandidatesRunOut) {
  const AgeVector a(4);
  const std::vector<CandidateSet> sets = {candidates({0, 1, 2}), candidates({0, 1, 2})};
  const auto out = assign_disjoint_requests(a, sets, 2);
  EXPECT_EQ(out[0].size(), 2u);
  EXPECT_EQ(out[1].size(), 1u);
}

TEST(AssignDisjointRequests, TieBreakPrefersLargerMagnitudeThenLowerIndex) {
  const AgeVector a({2, 2, 2, 2}, 0);
  const CandidateSet c = {{0, 0.1}, {1, 0.9}, {2, 0.5}, {3, 0.9}};
  EXPECT_EQ(select_oldest(a.ages, c, 2), (IndexSet{1, 3}));
  EXPECT_EQ(select_oldest(a.ages, c, 3), (IndexSet{1, 2, 3}));
}

TEST(AgingProperties, AgeSumRecurrenceMaxAgeAndFrequencyConservation) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(50);
    AgeVector a(d);
    FrequencyVector f(d);
    std::uint64_t rounds = 0;
    for (int step = 0; step < 40; ++step) {
      std::vector<Index> picks;
      for (Index j = 0; j < d; ++j)
        if (rng.uniform01() < 0.2) picks.push_back(j);
      const auto req = make_index_set(picks);
      std::uint64_t reset_mass = 0;
      for (Index j : req) reset_mass += a[j];
      const auto next = age_update(a, req);
      EXPECT_EQ(next.sum(), a.sum() + (d - req.size()) - reset_mass);
      const auto fnext = record_request(f, req);
      EXPECT_EQ(fnext.total(), f.total() + req.size());
      for (Index j = 0; j < d; ++j) EXPECT_GE(fnext.counts[j], f.counts[j]);
      a = next;
      f = fnext;
      ++rounds;
      EXPECT_LE(a.max(), rounds);
    }
  }
}

TEST(AgingProperties, DisjointAssignmentUnionSize) {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 4 + rng.uniform_index(30);
    AgeVector a(d);
    for (auto& v : a.ages) v = rng.uniform_index(6);
    const std::size_t clients = 1 + rng.uniform_index(4);
    const std::size_t r = 1 + rng.uniform_index(d);
    const std::size_t k = 1 + rng.uniform_index(r);
    std::vector<CandidateSet> sets;
    std::set<Index> all;
    for (std::size_t c = 0; c < clients; ++c) {
      std::vector<Index> perm(d);
      for (Index j = 0; j < d; ++j) perm[j] = j;
      rng.shuffle(std::span<Index>(perm));
      CandidateSet cs;
      for (std::size_t j = 0; j < r; ++j) cs.push_back({perm[j], rng.uniform01()});
      all.insert(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(r));
      sets.push_back(cs);
    }
    const auto out = assign_disjoint_requests(a, sets, k);
    std::set<Index> seen;
    std::size_t total = 0;
    for (const auto& s : out) {
      total += s.size();
      seen.insert(s.begin(), s.end());
    }
    EXPECT_EQ(seen.size(), total);  // pairwise disjoint
    // Greedy takes min(k, remaining) each time; the union bound holds whenever
    // later clients' candidates are not exhausted by earlier ones.
    EXPECT_LE(seen.size(), std::min(clients * k, all.size()));
    if (clients == 1) EXPECT_EQ(seen.size(), k);
  }
}

TEST(AgingProperties, SharedCandidatesUnionIsExact) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 4 + rng.uniform_index(30);
    AgeVector a(d);
    for (auto& v : a.ages) v = rng.uniform_index(6);
    const std::size_t r = 1 + rng.uniform_index(d);
    const std::size_t k = 1 + rng.uniform_index(r);
    const std::size_t clients = 1 + rng.uniform_index(5);
    CandidateSet shared;
    for (std::size_t j = 0; j < r; ++j) shared.push_back({j, rng.uniform01()});
    const std::vector<CandidateSet> sets(clients, shared);
    std::set<Index> seen;
    for (const auto& s : assign_disjoint_requests(a, sets, k)) seen.insert(s.begin(), s.end());
    EXPECT_EQ(seen.size(), std::min(clients * k, r));
  }
}

TEST(CountsSerialization, RoundTripsLittleEndian) {
  const std::vector<std::uint64_t> v = {0, 1, 258, 1ULL << 40};
  std::stringstream ss;
  write_counts(ss, v);
  const auto bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u * 5);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 4u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 16]), 2u);  // 258 = 0x0102, low byte first
  EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 17]), 1u);
  EXPECT_EQ(read_counts(ss), v);
  std::stringstream truncated(bytes.substr(0, 20));
  EXPECT_THROW(read_counts(truncated), FormatError);
}

}  // namespace
}  // namespace agefl
