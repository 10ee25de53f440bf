#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "skpub/core.hpp"
#include "skpub/skyband.hpp"
#include "skpub/window.hpp"

namespace skpub {

/// Reference top-k: scores every arriving message against every
/// subscription and keeps all matches in result order. Sequence numbers and
/// count-mode timestamps are assigned exactly as Engine::process does.
class BruteForceOracle {
public:
  BruteForceOracle(Space space, SlidingWindow window, std::vector<Subscription> subs);

  void process(Message m);

  /// Best k matches of the subscription over the current window.
  const std::vector<ScoredMessage> &topk(SubId id) const;
  /// Same answer recomputed from scratch over the window.
  std::vector<ScoredMessage> recompute_topk(SubId id) const;

  const SlidingWindow &window() const { return window_; }
  std::span<const Subscription> subscriptions() const { return subs_; }

private:
  struct Before {
    bool operator()(const ScoredMessage &a, const ScoredMessage &b) const {
      return ranks_before({a.score, a.seq}, {b.score, b.seq});
    }
  };
  using Matches = std::set<ScoredMessage, Before>;

  std::size_t slot_of(SubId id) const;
  void touched(std::size_t slot, const ScoredMessage &e);

  Space space_;
  SlidingWindow window_;
  std::vector<Subscription> subs_;
  std::unordered_map<SubId, std::size_t> slots_;
  std::vector<Matches> matches_;
  /// First k entries of each match set, rebuilt when a change reaches them.
  mutable std::vector<std::vector<ScoredMessage>> top_;
  mutable std::vector<char> stale_;
  /// Subscriptions per keyword, so that messages are only scored against
  /// subscriptions sharing one.
  std::unordered_map<TermId, std::vector<std::size_t>> by_term_;
  std::vector<std::uint64_t> stamp_;
  /// Per live message: (slot, score) pairs to drop when it expires.
  std::unordered_map<std::uint64_t, std::vector<std::pair<std::size_t, double>>> held_;
  std::uint64_t next_seq_ = 0;
};

} // namespace skpub
