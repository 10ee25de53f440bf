// Hand-worked pruning examples: a subscription s1 with four weighted
// keywords, bounds around a cell c1 in a space whose diagonal is 1.6, and the
// partial-similarity abort for s3.
#include <gtest/gtest.h>

#include "skpub/dissemination.hpp"
#include "skpub/distribution.hpp"
#include "skpub/subscription_index.hpp"
#include "support.hpp"

using namespace skpub;
using skpub::test::raw_list;
using skpub::test::trunc2;

namespace {

// 0.96 x 1.28 has diagonal 1.6.
const Space kSpace(Rect{0, 0, 0.96, 1.28});

// s1: w1..w4 with weights whose tail from w4 sums to 0.1.
WeightedTermList s1_terms() { return raw_list({{1, 0.5}, {2, 0.3}, {3, 0.2}, {4, 0.1}}); }

std::size_t prefix_length(const WeightedTermList &s, double lt) {
  std::size_t p = 0;
  while (p < s.size() && !(s.wtsum(p) < lt))
    ++p;
  return p;
}

} // namespace

TEST(WorkedExample, TextualThresholdFromSpatialBound) {
  // theta 0.7, alpha 0.6, spatial bound 0.98.
  double lt = lambda_t(kscore_star(0.7, 0.6), alpha_star(0.6), 0.98);
  EXPECT_NEAR(lt, 0.28, 0.005);
  // Prefix {w1, w2, w3}: only the w4 tail (0.1) falls below 0.28.
  auto s1 = s1_terms();
  EXPECT_NEAR(s1.wtsum(3), 0.1, 1e-12);
  EXPECT_EQ(prefix_length(s1, lt), 3u);
  // m1 holds only w4, outside the prefix.
  auto m1 = raw_list({{4, 1.0}});
  EXPECT_TRUE(prefix_skip(m1.maxwt(0), s1.wtsum(3), lt));
}

TEST(WorkedExample, MaxWeightRefinedPrefix) {
  double lt = lambda_t(kscore_star(0.7, 0.6), alpha_star(0.6), 0.99);
  EXPECT_EQ(trunc2(lt), 0.26);
  auto s1 = s1_terms();
  // The plain prefix keeps w1..w3.
  EXPECT_EQ(prefix_length(s1, lt), 3u);
  // m2's heaviest keyword from w2 on weighs 0.4: 0.4 * wtsum(w2..) = 0.24
  // < 0.26, so the refined prefix is {w1}.
  auto m2 = raw_list({{2, 0.4}, {5, 0.2}});
  EXPECT_TRUE(prefix_skip(m2.maxwt(0), s1.wtsum(1), lt));
  EXPECT_FALSE(prefix_skip(m2.maxwt(0), s1.wtsum(0), lt));
}

TEST(WorkedExample, InnerOuterAndCombinedBounds) {
  // Cell c1 = [0.4, 0.96] x [0.4, 1.28]; s2 sits 0.25 from its nearest edge,
  // m2 lies 0.3 outside it.
  Rect c1{0.4, 0.4, 0.96, 1.28};
  Point s2{0.65, 0.9};
  Point m2{0.1, 0.9};
  EXPECT_NEAR(c1.boundary_dist(s2), 0.25, 1e-12);
  EXPECT_NEAR(c1.mindist(m2), 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(kSpace.max_dist(), 1.6);

  double inner = inner_bound(s2, c1, kSpace);
  double outer = outer_bound(m2, c1, kSpace);
  double both = combined_bound(0.25, 0.3, false, kSpace);
  EXPECT_EQ(trunc2(inner), 0.84);
  EXPECT_EQ(trunc2(outer), 0.81);
  EXPECT_EQ(trunc2(both), 0.65);
  EXPECT_DOUBLE_EQ(combined_bound(0.25, 0.3, true, kSpace), 1.0);
  // The combined bound never exceeds the true similarity's ceiling.
  EXPECT_GE(both, ssim(s2, m2, kSpace) - 1e-12);

  // theta 0.6, alpha 0.5: 0.20 with the trivial bound, 0.55 with 0.65.
  EXPECT_NEAR(lambda_t(kscore_star(0.6, 0.5), alpha_star(0.5), 1.0), 0.20, 1e-12);
  EXPECT_NEAR(lambda_t(kscore_star(0.6, 0.5), alpha_star(0.5), 0.65), 0.55, 1e-12);
}

TEST(WorkedExample, PartialSimilarityAbort) {
  // s3 = w1, w2 (0.4), then a tail summing to 0.4 with max 0.3.
  auto s3 = raw_list({{1, 0.5}, {2, 0.4}, {3, 0.3}, {4, 0.1}});
  // m3 = w2 (0.7), then a tail summing to 0.5 with max 0.3.
  auto m3 = raw_list({{2, 0.7}, {5, 0.3}, {6, 0.2}});
  double partial = tsim_range(s3, 0, 2, m3, 0, 1);
  double ub = tsim_upper_bound(s3, 2, m3, 1);
  EXPECT_NEAR(partial, 0.28, 1e-12);
  EXPECT_NEAR(ub, std::min(0.4 * 0.3, 0.5 * 0.3), 1e-12);
  EXPECT_NEAR(ub, 0.12, 1e-12);
  EXPECT_LT(partial + ub, 0.48 - kPruneSlack);
  // The true similarity indeed stays below the threshold.
  EXPECT_LT(tsim(s3, m3), 0.48);
}

TEST(WorkedExample, LooseThresholdForRouting) {
  // kScore 0.8, alpha 0.6: 0.8/0.4 - 0.6/0.4 = 0.5, prefix {w1, w2}.
  EXPECT_NEAR(loose_lambda_t(0.8, 0.6), 0.5, 1e-12);
  auto s = raw_list({{1, 0.6}, {2, 0.3}, {3, 0.2}, {4, 0.1}});
  EXPECT_EQ(loose_prefix_length(s, 0.8, 0.6), 2u);
}
