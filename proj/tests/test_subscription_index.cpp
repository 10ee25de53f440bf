#include <gtest/gtest.h>

#include "skpub/subscription_index.hpp"
#include "support.hpp"

using namespace skpub;

TEST(SubscriptionTable, ValidatesRegistrations) {
  SubscriptionTable t;
  Subscription s;
  s.id = 1;
  s.terms = WeightedTermList::from_weights({{1, 1.0}});
  Slot a = t.add(s);
  EXPECT_THROW(t.add(s), Error);
  Subscription bad = s;
  bad.id = 2;
  bad.k = 0;
  EXPECT_THROW(t.add(bad), Error);
  bad.k = 5;
  bad.alpha = 1.5;
  EXPECT_THROW(t.add(bad), Error);
  bad.alpha = 0.5;
  bad.terms = {};
  EXPECT_THROW(t.add(bad), Error);
  EXPECT_THROW(t.set_theta(a, -0.1), Error);
  t.set_theta(a, 0.4);
  EXPECT_DOUBLE_EQ(t[a].theta, 0.4);
  t.deactivate(a);
  EXPECT_FALSE(t.find(1).has_value());
  EXPECT_EQ(t.active_count(), 0u);
}

TEST(SubscriptionIndex, AlphaBucketsAreQuantiles) {
  std::vector<double> stars;
  for (int i = 1; i <= 100; ++i)
    stars.push_back(i);
  stars.push_back(std::numeric_limits<double>::infinity());
  auto bounds = SubscriptionIndex::alpha_partition_bounds(stars, 4);
  ASSERT_EQ(bounds.size(), 3u);
  SubscriptionTable t;
  SubscriptionIndex idx(t, Space{}, {}, bounds);
  std::vector<int> per(4, 0);
  for (int i = 1; i <= 100; ++i)
    ++per[idx.bucket_of(i)];
  for (int c : per)
    EXPECT_EQ(c, 25);
  EXPECT_EQ(idx.bucket_of(std::numeric_limits<double>::infinity()), 3u);
  // Identical values collapse into one bucket.
  auto same = SubscriptionIndex::alpha_partition_bounds({2, 2, 2}, 4);
  EXPECT_LE(same.size(), 1u);
}

TEST(SubscriptionIndex, InvariantsHoldUnderChurn) {
  test::Fuzz fz(5);
  SubscriptionTable t;
  IndexConfig cfg;
  cfg.cell_capacity = 6;
  cfg.max_depth = 8;
  std::vector<double> stars;
  std::vector<Subscription> subs;
  for (int i = 0; i < 300; ++i) {
    subs.push_back(fz.subscription(i, 3));
    stars.push_back(alpha_star(subs.back().alpha));
  }
  SubscriptionIndex idx(t, fz.space, cfg, SubscriptionIndex::alpha_partition_bounds(stars, 5));
  std::vector<Slot> live;
  std::uniform_real_distribution<double> theta(0, 1);
  std::string why;
  for (int step = 0; step < 300; ++step) {
    Slot s = t.add(subs[step]);
    t.set_theta(s, theta(fz.rng));
    idx.insert(s);
    live.push_back(s);
    if (step % 3 == 0) {
      Slot u = live[std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(fz.rng)];
      t.set_theta(u, theta(fz.rng));
      idx.update_threshold(u);
    }
    if (step % 4 == 3) {
      std::size_t i = std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(fz.rng);
      EXPECT_TRUE(idx.remove(live[i]));
      t.deactivate(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    }
    ASSERT_TRUE(idx.check_invariants(&why)) << "step " << step << ": " << why;
  }
  EXPECT_EQ(idx.size(), live.size());
  EXPECT_GT(idx.leaves().size(), 1u);
  // Drain: cells merge back.
  for (Slot s : live) {
    idx.remove(s);
    t.deactivate(s);
  }
  ASSERT_TRUE(idx.check_invariants(&why)) << why;
  EXPECT_EQ(idx.size(), 0u);
  EXPECT_EQ(idx.leaves().size(), 1u);
}

TEST(SubscriptionIndex, CellThresholdIsTheResidentMinimum) {
  SubscriptionTable t;
  SubscriptionIndex idx(t, Space{});
  double want = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    Subscription s;
    s.id = i;
    s.loc = {0.1 * i, 0.5};
    s.alpha = 0.2 + 0.1 * i;
    s.terms = WeightedTermList::from_weights({{static_cast<TermId>(i), 1.0}});
    Slot slot = t.add(s);
    t.set_theta(slot, 0.5 + 0.05 * i);
    idx.insert(slot);
    want = std::min(want, lambda_s(0.5 + 0.05 * i, s.alpha));
  }
  ASSERT_EQ(idx.leaves().size(), 1u);
  EXPECT_DOUBLE_EQ(idx.min_lambda_s(*idx.leaves()[0]), want);
  // Raising the minimum holder's threshold moves the minimum.
  t.set_theta(0, 0.95);
  idx.update_threshold(0);
  EXPECT_GT(idx.min_lambda_s(*idx.leaves()[0]), want);
}

TEST(SubscriptionIndex, SpatialThresholdFormula) {
  EXPECT_NEAR(lambda_s(0.8, 0.5), 0.6, 1e-12);
  EXPECT_TRUE(std::isinf(lambda_s(0.3, 0.0)));
  EXPECT_LT(lambda_s(0.3, 0.0), 0);
}
