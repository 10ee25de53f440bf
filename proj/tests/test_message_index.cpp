#include <deque>

#include <gtest/gtest.h>

#include "skpub/message_index.hpp"
#include "support.hpp"

using namespace skpub;

namespace {

std::vector<ScoredMessage> brute_threshold(const std::deque<Message> &live, const Subscription &s, double theta,
                                           const Space &sp) {
  std::vector<ScoredMessage> out;
  for (const auto &m : live) {
    auto p = score_parts(s, m, sp);
    if (p.qualifies() && p.score >= theta)
      out.push_back({m.seq, m.id, p.score});
  }
  return out;
}

std::vector<ScoredMessage> brute_topk(const std::deque<Message> &live, const Subscription &s, std::size_t k,
                                      const Space &sp) {
  auto all = brute_threshold(live, s, -1.0, sp);
  std::sort(all.begin(), all.end(), [](const ScoredMessage &a, const ScoredMessage &b) {
    return ranks_before({a.score, a.seq}, {b.score, b.seq});
  });
  if (all.size() > k)
    all.resize(k);
  return all;
}

} // namespace

TEST(MessageIndex, QueriesMatchBruteForceWhileSliding) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    test::Fuzz fz(seed);
    MessageIndex idx(fz.space, 8, 6);
    std::deque<Message> live;
    for (std::uint64_t seq = 0; seq < 600; ++seq) {
      Message m = fz.message();
      m.seq = seq;
      live.push_back(m);
      idx.insert(live.back());
      if (live.size() > 150) {
        idx.expire(live.front());
        live.pop_front();
      }
      if (seq % 37 != 0)
        continue;
      std::string why;
      ASSERT_TRUE(idx.check_integrity(&why)) << why;
      for (int q = 0; q < 10; ++q) {
        Subscription s = fz.subscription(q, 5);
        double theta = std::uniform_real_distribution<double>(0, 0.9)(fz.rng);
        EXPECT_EQ(idx.threshold_query(s, theta), brute_threshold(live, s, theta, fz.space));
        std::size_t k = 1 + static_cast<std::size_t>(q);
        QueryWork work;
        auto top = idx.topk_query(s, k, &work);
        EXPECT_EQ(top, brute_topk(live, s, k, fz.space));
        EXPECT_GE(work.candidates_scored, top.size());
      }
    }
    EXPECT_EQ(idx.size(), live.size());
  }
}

TEST(MessageIndex, ExpiringAnUnknownMessageThrows) {
  MessageIndex idx(Space{});
  Message m;
  m.terms = WeightedTermList::from_weights({{1, 1.0}});
  EXPECT_THROW(idx.expire(m), Error);
}

TEST(MessageIndex, ThresholdZeroReturnsEveryKeywordMatch) {
  test::Fuzz fz(42);
  MessageIndex idx(fz.space, 4, 8);
  std::deque<Message> live;
  for (std::uint64_t seq = 0; seq < 100; ++seq) {
    live.push_back(fz.message());
    live.back().seq = seq;
    idx.insert(live.back());
  }
  Subscription s = fz.subscription(0, 3);
  EXPECT_EQ(idx.threshold_query(s, 0.0), brute_threshold(live, s, 0.0, fz.space));
  EXPECT_GT(idx.leaf_count(), 1u);
}
