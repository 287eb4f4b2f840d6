#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "agefl/data.hpp"
#include "oracles.hpp"

namespace agefl {
namespace {

TEST(Synth, ShapeRangeAndDeterminism) {
  const auto a = synth_generate(4, 6, 25, 3.0, 11);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_EQ(a.input_dim, 6u);
  for (double v : a.features) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (int c = 0; c < 4; ++c) EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), c), 25);
  EXPECT_EQ(a, synth_generate(4, 6, 25, 3.0, 11));
  EXPECT_NE(a, synth_generate(4, 6, 25, 3.0, 12));
}

TEST(Synth, SeparationControlsDifficulty) {
  EXPECT_GE(oracle::nearest_mean_accuracy(synth_generate(10, 20, 100, 10.0, 5), 10), 0.99);
  // Zero separation: every class has the same distribution.
  EXPECT_LT(oracle::nearest_mean_accuracy(synth_generate(10, 20, 100, 0.0, 5), 10), 0.5);
}

TEST(Synth, RejectsBadParameters) {
  EXPECT_THROW(synth_generate(0, 3, 1, 1.0, 1), ParameterError);
  EXPECT_THROW(synth_generate(2, 0, 1, 1.0, 1), ParameterError);
  EXPECT_THROW(synth_generate(2, 3, 1, -1.0, 1), ParameterError);
}

TEST(ShardPlan, FixedPlansAndGroups) {
  const auto mnist = mnist_pairs_plan();
  ASSERT_EQ(mnist.num_clients(), 10u);
  EXPECT_EQ(mnist.classes[0], (std::set<int>{0, 1}));
  EXPECT_EQ(mnist.classes[9], (std::set<int>{8, 9}));
  EXPECT_EQ(plan_groups(mnist), (std::vector<std::size_t>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4}));

  const auto cifar = cifar_groups_plan();
  ASSERT_EQ(cifar.num_clients(), 6u);
  EXPECT_EQ(cifar.classes[1], (std::set<int>{0, 1, 2}));
  EXPECT_EQ(cifar.classes[4], (std::set<int>{6, 7, 8, 9}));
  EXPECT_EQ(plan_groups(cifar), (std::vector<std::size_t>{0, 0, 1, 1, 2, 2}));

  EXPECT_THROW((ShardPlan{{{0}, {}}}.validate()), ParameterError);
  EXPECT_THROW(ShardPlan{}.validate(), ParameterError);
}

TEST(Shard, DisjointEvenSplitConservesSamples) {
  const auto data = synth_generate(10, 3, 101, 2.0, 3);
  const auto shards = shard(data, mnist_pairs_plan(), 9);
  ASSERT_EQ(shards.size(), 10u);
  std::size_t total = 0;
  std::multiset<std::vector<double>> seen;
  for (std::size_t c = 0; c < shards.size(); ++c) {
    total += shards[c].size();
    std::map<int, std::size_t> per_class;
    for (std::size_t s = 0; s < shards[c].size(); ++s) {
      ++per_class[shards[c].labels[s]];
      const auto row = shards[c].row(s);
      seen.emplace(row.begin(), row.end());
    }
    EXPECT_EQ(per_class.size(), 2u);
    for (const auto& [label, n] : per_class) {
      EXPECT_TRUE(mnist_pairs_plan().classes[c].contains(label));
      EXPECT_EQ(n, c % 2 == 0 ? 51u : 50u);  // earlier holder gets the remainder
    }
  }
  EXPECT_EQ(total, data.size());
  std::multiset<std::vector<double>> all;
  for (std::size_t s = 0; s < data.size(); ++s) all.emplace(data.row(s).begin(), data.row(s).end());
  EXPECT_EQ(seen, all);
  EXPECT_EQ(shards, shard(data, mnist_pairs_plan(), 9));
}

TEST(Shard, UnevenHoldersDifferByAtMostOne) {
  const auto data = synth_generate(3, 2, 17, 1.0, 4);
  const ShardPlan plan{{{0, 1, 2}, {0, 1, 2}, {0, 1, 2}, {0}}};
  const auto shards = shard(data, plan, 1);
  std::map<int, std::vector<std::size_t>> counts;
  for (std::size_t c = 0; c < shards.size(); ++c)
    for (int label : plan.classes[c])
      counts[label].push_back(static_cast<std::size_t>(
          std::count(shards[c].labels.begin(), shards[c].labels.end(), label)));
  for (const auto& [label, ns] : counts) {
    EXPECT_EQ(std::accumulate(ns.begin(), ns.end(), std::size_t{0}), 17u);
    EXPECT_LE(*std::max_element(ns.begin(), ns.end()) - *std::min_element(ns.begin(), ns.end()), 1u);
  }
}

TEST(Shard, OverlapGivesEveryHolderAllSamples) {
  const auto data = synth_generate(2, 2, 5, 1.0, 4);
  const auto shards = shard(data, ShardPlan{{{0}, {0, 1}}}, 1, true);
  EXPECT_EQ(shards[0].size(), 5u);
  EXPECT_EQ(shards[1], data);
}

TEST(Shard, AbsentClassIsAnError) {
  const auto data = synth_generate(2, 2, 5, 1.0, 4);
  EXPECT_THROW(shard(data, ShardPlan{{{0}, {2}}}, 1), ParameterError);
}

TEST(Idx, HeaderLayoutAndRoundTrip) {
  const IdxArray images{{2, 2, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255}};
  const IdxArray labels{{2}, {3, 7}};
  EXPECT_EQ(images.magic(), 0x803u);
  EXPECT_EQ(labels.magic(), 0x801u);
  std::stringstream ss;
  write_idx(ss, images);
  const auto bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 3 * 4 + 12);
  EXPECT_EQ(bytes.substr(0, 8), std::string("\x00\x00\x08\x03\x00\x00\x00\x02", 8));
  EXPECT_EQ(read_idx(ss), images);

  const auto ds = idx_to_dataset(images, labels);
  EXPECT_EQ(ds.input_dim, 6u);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 7}));
  EXPECT_DOUBLE_EQ(ds.row(1)[5], 1.0);
  EXPECT_DOUBLE_EQ(ds.row(0)[0], 0.0);
}

TEST(Idx, MalformedInputReportsOffset) {
  std::stringstream bad_magic(std::string("\x00\x01\x08\x01", 4));
  try {
    read_idx(bad_magic);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 1u);
  }
  std::stringstream bad_type(std::string("\x00\x00\x0D\x01", 4));
  EXPECT_THROW(read_idx(bad_type), FormatError);

  std::stringstream truncated(std::string("\x00\x00\x08\x01\x00\x00\x00\x05\x01\x02", 10));
  try {
    read_idx(truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 10u);
  }
  EXPECT_THROW(idx_to_dataset(IdxArray{{2, 1}, {1, 2}}, IdxArray{{3}, {0, 0, 0}}), StructuralError);
}

TEST(BatchSampler, EpochCoversEachSampleOnce) {
  Dataset d;
  d.input_dim = 1;
  for (int i = 0; i < 10; ++i) d.push_back(std::vector<double>{static_cast<double>(i)}, 0);
  BatchSampler s(5);
  std::vector<double> seen;
  std::vector<std::size_t> sizes;
  for (int b = 0; b < 3; ++b) {
    const auto batch = s.next_batch(d, 4);
    sizes.push_back(batch.size());
    seen.insert(seen.end(), batch.features.begin(), batch.features.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
  EXPECT_EQ(s.epoch(), 1u);
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(seen[static_cast<std::size_t>(i)], i);
  s.next_batch(d, 4);
  EXPECT_EQ(s.epoch(), 2u);
}

TEST(BatchSampler, ClampsAndIsDeterministic) {
  const auto d = synth_generate(2, 3, 4, 1.0, 1);
  BatchSampler a(3), b(3);
  const auto full = a.next_batch(d, 100);
  EXPECT_EQ(full.size(), d.size());
  EXPECT_EQ(full, b.next_batch(d, 100));
  EXPECT_THROW(a.next_batch(Dataset{}, 1), ParameterError);
  EXPECT_THROW(a.next_batch(d, 0), ParameterError);
}

}  // namespace
}  // namespace agefl
