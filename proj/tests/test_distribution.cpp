#include <gtest/gtest.h>

#include "skpub/bench.hpp"
#include "skpub/distribution.hpp"
#include "support.hpp"

using namespace skpub;

TEST(Mechanism, ParsesNames) {
  for (const char *name : {"hashing", "location", "keyword", "prefix", "spatial-first:2x4", "keyword-first:4x2"})
    EXPECT_EQ(MechanismSpec::parse(name).name(), name);
  auto h = MechanismSpec::parse("keyword-first:4x2");
  EXPECT_TRUE(h.hybrid());
  EXPECT_EQ(h.l1, 4u);
  EXPECT_EQ(h.l2, 2u);
  EXPECT_THROW(MechanismSpec::parse("spatial-first:3x2"), Error);
  EXPECT_THROW(MechanismSpec::parse("spatial-first"), Error);
  EXPECT_THROW(MechanismSpec::parse("random"), Error);
}

TEST(SpatialPartition, LeavesCoverTheSpaceAndBalanceLoad) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point> subs, msgs;
  for (int i = 0; i < 800; ++i)
    subs.push_back({u(rng) * u(rng), u(rng)});
  for (int i = 0; i < 400; ++i)
    msgs.push_back({u(rng), u(rng)});
  Rect all{0, 0, 1, 1};
  auto p = SpatialPartition::build(all, subs, msgs, 3);
  ASSERT_EQ(p.size(), 8u);
  double area = 0;
  for (const auto &r : p.leaves())
    area += (r.max_x - r.min_x) * (r.max_y - r.min_y);
  EXPECT_NEAR(area, 1.0, 1e-12);
  for (int i = 0; i < 1000; ++i) {
    Point q{u(rng), u(rng)};
    EXPECT_TRUE(p.leaves()[p.leaf_of(q)].contains(q));
  }
  // Skewed subscriptions: the partition adapts rather than splitting evenly.
  std::vector<double> cost(8, 0.0);
  std::vector<double> share(8, 0.0);
  for (auto s : subs)
    cost[p.leaf_of(s)] += 1;
  for (auto m : msgs)
    share[p.leaf_of(m)] += 1.0 / 400;
  double worst = 0, even = 0;
  for (int i = 0; i < 8; ++i)
    worst = std::max(worst, cost[i] * share[i]);
  auto even_p = SpatialPartition::build(all, {}, {}, 3);
  std::vector<double> ec(8, 0.0), es(8, 0.0);
  for (auto s : subs)
    ec[even_p.leaf_of(s)] += 1;
  for (auto m : msgs)
    es[even_p.leaf_of(m)] += 1.0 / 400;
  for (int i = 0; i < 8; ++i)
    even = std::max(even, ec[i] * es[i]);
  EXPECT_LT(worst, even);
}

TEST(KeywordPartition, RangesCoverTheVocabulary) {
  std::vector<std::vector<TermId>> subs = {{0, 5}, {1}, {2, 3}, {7}, {8, 9}, {0, 9}};
  std::vector<std::vector<TermId>> msgs = {{0}, {1, 2}, {3}, {5, 9}, {7}, {8}};
  auto p = KeywordPartition::build(10, subs, msgs, 2);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p.starts().front(), 0u);
  EXPECT_TRUE(std::is_sorted(p.starts().begin(), p.starts().end()));
  for (TermId t = 0; t < 10; ++t) {
    std::size_t r = p.range_of(t);
    EXPECT_LE(p.starts()[r], t);
    if (r + 1 < p.size()) {
      EXPECT_GT(p.starts()[r + 1], t);
    }
  }
  // A two-term vocabulary cannot be split four ways: empty ranges remain.
  auto tiny = KeywordPartition::build(2, subs, msgs, 2);
  EXPECT_EQ(tiny.size(), 4u);
  EXPECT_NE(tiny.range_of(0), tiny.range_of(1));
  auto even = KeywordPartition::equal_width(10, 5);
  EXPECT_EQ(even.range_of(9), 4u);
  EXPECT_GE(p.cost_variance(subs, msgs), 0.0);
}

TEST(LoosePrefix, GrowsWithTheThreshold) {
  auto s = test::raw_list({{1, 0.5}, {2, 0.3}, {3, 0.2}, {4, 0.1}});
  EXPECT_EQ(loose_prefix_length(s, 0.0, 0.5), 4u);
  std::size_t prev = 0;
  for (double theta = 0.99; theta > 0.5; theta -= 0.05) {
    std::size_t p = loose_prefix_length(s, theta, 0.5);
    EXPECT_GE(p, prev);
    EXPECT_GE(p, 1u);
    prev = p;
  }
  EXPECT_EQ(loose_prefix_length(s, 0.9, 1.0), 4u);
}

namespace {

/// Per-slide deliveries of a run, as comparable tuples.
std::vector<std::tuple<std::size_t, MessageId, SubId, double>> stream(const Workload &w, RunConfig rc) {
  std::vector<std::tuple<std::size_t, MessageId, SubId, double>> out;
  rc.on_slide = [&](std::size_t s, const std::vector<DeliveryEvent> &ev) {
    for (const auto &e : ev)
      out.emplace_back(s, e.msg, e.sub, e.score);
  };
  run(w, rc);
  return out;
}

} // namespace

TEST(ShardedBackend, EveryMechanismMatchesCentralized) {
  Workload w = test::desk_workload(1600, 150, 5, 3, 800);
  RunConfig rc;
  rc.engine.window_size = 600;
  rc.slides = 800;
  rc.invariant_every = 100;
  auto central = stream(w, rc);
  ASSERT_FALSE(central.empty());
  for (const char *mech : {"hashing", "location", "keyword", "prefix", "spatial-first:2x2", "keyword-first:2x2"}) {
    RunConfig d = rc;
    d.mechanism = MechanismSpec::parse(mech);
    d.shards = 4;
    EXPECT_EQ(stream(w, d), central) << mech;
    auto report = run(w, d);
    EXPECT_EQ(report.invariant_failures, 0u) << mech << ": " << report.first_invariant_failure;
    EXPECT_EQ(report.shard_metrics.fanout_violations, 0u) << mech;
  }
}

TEST(ShardedBackend, RoutingProperties) {
  Workload w = test::desk_workload(1500, 200, 5, 4, 800);
  RunConfig rc;
  rc.engine.window_size = 500;
  rc.slides = 600;
  rc.shards = 8;
  std::map<std::string, RunReport> reports;
  for (const char *mech : {"hashing", "location", "keyword", "prefix"}) {
    rc.mechanism = MechanismSpec::parse(mech);
    reports[mech] = run(w, rc);
  }
  EXPECT_DOUBLE_EQ(reports["hashing"].shard_metrics.comm_cost(), 8.0);
  EXPECT_DOUBLE_EQ(reports["location"].shard_metrics.comm_cost(), 8.0);
  EXPECT_DOUBLE_EQ(reports["hashing"].replication, 1.0);
  EXPECT_DOUBLE_EQ(reports["location"].replication, 1.0);
  EXPECT_LT(reports["keyword"].shard_metrics.comm_cost(), 8.0);
  EXPECT_LE(reports["prefix"].replication, reports["keyword"].replication);
  for (auto &[name, r] : reports)
    EXPECT_EQ(r.shard_metrics.fanout_violations, 0u) << name;
  auto row = distribution_csv_row(reports["prefix"]);
  EXPECT_EQ(row.rfind("prefix,8,", 0), 0u) << row;
}

TEST(ShardedBackend, HybridNeedsMatchingShardCount) {
  Workload w = test::desk_workload(300, 20, 3, 5, 200);
  RunConfig rc;
  rc.engine.window_size = 100;
  rc.slides = 10;
  rc.mechanism = MechanismSpec::parse("spatial-first:2x2");
  rc.shards = 8;
  EXPECT_THROW(run(w, rc), Error);
  rc.mechanism = MechanismSpec::parse("location");
  rc.shards = 3;
  EXPECT_THROW(run(w, rc), Error);
}
