#pragma once

#include <cstdint>
#include <vector>

#include "skpub/core.hpp"
#include "skpub/subscription_index.hpp"

namespace skpub {

/// Switches for the individual pruning rules; all on by default. With every
/// rule off the traversal degenerates to scoring each posting it meets.
struct PruningOptions {
  bool cell = true;
  bool group = true;
  bool early_stop = true;
  bool prefix = true;
  bool tsim_bound = true;

  static PruningOptions none() { return {false, false, false, false, false}; }
  static PruningOptions prefix_only() { return {false, false, false, true, false}; }
};

struct DisseminationStats {
  std::uint64_t messages = 0;
  std::uint64_t cells_visited = 0;
  std::uint64_t cells_pruned = 0;
  std::uint64_t groups_visited = 0;
  std::uint64_t groups_pruned = 0;
  /// Group members never looked at because of the early stop.
  std::uint64_t members_skipped = 0;
  /// Group members looked at.
  std::uint64_t postings_touched = 0;
  std::uint64_t prefix_skipped = 0;
  std::uint64_t bound_rejected = 0;
  /// Distinct subscriptions that entered the candidate set.
  std::uint64_t candidates = 0;
  std::uint64_t verified = 0;
  std::uint64_t deliveries = 0;

  DisseminationStats &operator+=(const DisseminationStats &o);
};

struct Delivery {
  Slot slot = 0;
  double score = 0.0;
};

/// True when no resident of a cell can accept a message with spatial
/// bound `outer`.
inline bool cell_prunable(double min_lambda_s, double outer) {
  return min_lambda_s > outer + kPruneSlack;
}

/// True when no member of the group can reach its threshold: even the
/// largest textual contribution stays below the smallest textual threshold.
inline bool group_prunable(const PostingGroup &g, double msg_wtsum, double outer) {
  return g.max_maxwt() * msg_wtsum < g.min_kscore_star() - g.max_alpha_star() * outer - kPruneSlack;
}

/// First member position from which every remaining member of the group
/// fails the group test; members before it must be examined.
std::size_t early_stop_position(const PostingGroup &g, double msg_wtsum, double outer);

/// True when a subscription whose remaining keywords sum to `sub_wtsum`
/// cannot reach `lambda_t` against a message whose remaining keywords peak
/// at `msg_maxwt`.
inline bool prefix_skip(double msg_maxwt, double sub_wtsum, double lambda_t) {
  return msg_maxwt * sub_wtsum < lambda_t - kPruneSlack;
}

/// Upper bound on the textual similarity still to come from positions
/// s_from.. of `s` and m_from.. of `m`.
inline double tsim_upper_bound(const WeightedTermList &s, std::size_t s_from, const WeightedTermList &m,
                               std::size_t m_from) {
  return std::min(s.wtsum(s_from) * m.maxwt(m_from), m.wtsum(m_from) * s.maxwt(s_from));
}

/// Finds every indexed subscription whose score for a message reaches its
/// current threshold. Each reported score is computed by score(), so it is
/// bit-identical to a brute-force evaluation.
class Disseminator {
public:
  explicit Disseminator(const SubscriptionIndex &index) : index_(index) {}

  /// Appends the accepting subscriptions to `out`, ordered by slot.
  void run(const Message &m, const PruningOptions &opt, std::vector<Delivery> &out,
           DisseminationStats *stats = nullptr);

private:
  struct Candidate {
    std::uint64_t stamp = 0;
    double partial = 0.0;
    std::uint32_t s_pos = 0;
    std::uint32_t m_pos = 0;
    bool rejected = false;
    bool spatial_only = false;
  };

  const SubscriptionIndex &index_;
  std::vector<Candidate> cand_;
  std::vector<Slot> touched_;
  std::vector<std::pair<double, const SubscriptionCell *>> order_;
  std::uint64_t stamp_ = 0;
};

} // namespace skpub
