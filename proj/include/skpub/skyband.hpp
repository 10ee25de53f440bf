#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skpub/core.hpp"

namespace skpub {

/// A message scored against one subscription.
struct ScoredMessage {
  std::uint64_t seq = 0;
  MessageId id = 0;
  double score = 0.0;
  friend bool operator==(const ScoredMessage &, const ScoredMessage &) = default;
};

struct SkybandEntry {
  std::uint64_t seq = 0;
  MessageId id = 0;
  double score = 0.0;
  /// Number of buffered messages that dominate this one.
  std::uint32_t dominance = 0;
};

/// Thrown when fewer than k entries are buffered and the buffer cannot
/// certify the top-k on its own.
class ReevaluationRequired : public Error {
public:
  ReevaluationRequired() : Error("skyband buffer holds fewer than k entries") {}
};

/// Partial k-skyband of one subscription: every window message scoring at
/// least theta that is dominated by fewer than k others. m1 dominates m2 when
/// score(m1) >= score(m2) and m1 arrived later.
///
/// Entries are kept sorted by score descending, fresher first on ties, which
/// is also the result order.
class SkybandBuffer {
public:
  SkybandBuffer() = default;
  SkybandBuffer(std::uint32_t k, double theta) : k_(k), theta_(theta) {
    if (k == 0)
      throw Error("k must be positive");
  }

  /// Exact k-skyband of `arrivals` (given oldest first).
  static SkybandBuffer build(std::uint32_t k, double theta, std::span<const ScoredMessage> arrivals);

  std::uint32_t k() const { return k_; }
  double theta() const { return theta_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::span<const SkybandEntry> entries() const { return entries_; }

  /// Inserts the freshest message. Entries it dominates gain one on their
  /// counter; those reaching k are evicted and returned.
  std::vector<SkybandEntry> insert(std::uint64_t seq, MessageId id, double score);

  /// Removes an expired message; the oldest message dominates nothing, so no
  /// counter changes.
  bool expire(std::uint64_t seq);

  /// The k best entries. Throws ReevaluationRequired if fewer are buffered.
  std::span<const SkybandEntry> extract_topk() const;

  /// The best min(k, size) entries.
  std::span<const SkybandEntry> head() const {
    return std::span<const SkybandEntry>(entries_).first(std::min<std::size_t>(k_, entries_.size()));
  }

  void dump(nlohmann::json &out) const;

private:
  std::uint32_t k_ = 1;
  double theta_ = 0.0;
  std::uint64_t last_seq_ = 0;
  bool has_last_ = false;
  std::vector<SkybandEntry> entries_;
};

} // namespace skpub
