#include <gtest/gtest.h>

#include "agefl/rng.hpp"
#include "agefl/vectors.hpp"

namespace agefl {
namespace {

SparseUpdate make_update(std::size_t dim, std::vector<SparseEntry> entries) {
  SparseUpdate u;
  u.dim = dim;
  for (const auto& e : entries) u.requested.push_back(e.index);
  u.entries = std::move(entries);
  return u;
}

TEST(Densify, PlacesValuesAtIndices) {
  EXPECT_EQ(densify(make_update(4, {{1, 2.5}})), (GradientVector{0, 2.5, 0, 0}));
  EXPECT_EQ(densify(make_update(3, {})), (GradientVector{0, 0, 0}));
  EXPECT_EQ(densify(make_update(4, {{0, -1.0}, {3, 4.0}})), (GradientVector{-1.0, 0, 0, 4.0}));
}

TEST(Densify, RejectsMalformedUpdates) {
  EXPECT_THROW(densify(make_update(3, {{3, 1.0}})), StructuralError);
  auto dup = make_update(3, {{1, 1.0}, {1, 2.0}});
  dup.requested = {1};
  EXPECT_THROW(densify(dup), StructuralError);
  auto unrequested = make_update(3, {{1, 1.0}});
  unrequested.requested = {2};
  EXPECT_THROW(densify(unrequested), StructuralError);
}

TEST(Aggregate, SumsInGivenOrder) {
  const std::vector<SparseUpdate> ups = {make_update(3, {{0, 1.0}}), make_update(3, {{0, 2.0}, {2, -1.0}})};
  EXPECT_EQ(aggregate(ups, 3), (GradientVector{3.0, 0, -1.0}));
  EXPECT_EQ(aggregate(std::vector<SparseUpdate>{}, 3), (GradientVector{0, 0, 0}));
  EXPECT_EQ(aggregate(std::vector<SparseUpdate>{make_update(2, {{1, 5.0}})}, 2), (GradientVector{0, 5.0}));
}

TEST(Aggregate, DimensionMismatchIsStructural) {
  const std::vector<SparseUpdate> ups = {make_update(3, {{0, 1.0}})};
  EXPECT_THROW(aggregate(ups, 4), StructuralError);
}

TEST(VectorProperties, RestrictionDensifiesToMask) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(40);
    GradientVector v(d);
    for (auto& x : v.values()) x = rng.uniform01() < 0.2 ? 0.0 : rng.normal();
    std::vector<Index> picks;
    for (Index i = 0; i < d; ++i)
      if (rng.uniform01() < 0.4) picks.push_back(i);
    const auto u = restrict_to(v, picks);
    const auto dense = densify(u);
    for (Index i = 0; i < d; ++i) {
      const bool in = std::binary_search(picks.begin(), picks.end(), i);
      EXPECT_EQ(dense[i], in ? v[i] : 0.0);
    }
  }
}

TEST(VectorProperties, AggregateMatchesSequentialDensifySumAndTriangleInequality) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(30);
    std::vector<SparseUpdate> ups;
    const std::size_t n = rng.uniform_index(6);
    for (std::size_t c = 0; c < n; ++c) {
      GradientVector v(d);
      for (auto& x : v.values()) x = rng.normal() * 10.0;
      std::vector<Index> picks;
      for (Index i = 0; i < d; ++i)
        if (rng.uniform01() < 0.5) picks.push_back(i);
      ups.push_back(restrict_to(v, picks));
    }
    GradientVector expected(d);
    double norm_sum = 0.0;
    for (const auto& u : ups) {
      const auto dense = densify(u);
      norm_sum += dense.norm();
      for (Index i = 0; i < d; ++i) expected[i] += dense[i];
    }
    const auto got = aggregate(ups, d);
    EXPECT_EQ(got, expected);  // bit-identical
    EXPECT_LE(got.norm(), norm_sum * (1 + 1e-12));
  }
}

}  // namespace
}  // namespace agefl
