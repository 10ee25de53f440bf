#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skpub/core.hpp"
#include "skpub/dissemination.hpp"
#include "skpub/engine.hpp"
#include "skpub/subscription_index.hpp"

namespace skpub {

/// How subscriptions and messages are routed to shards.
enum class Mechanism { hashing, location, keyword, prefix, spatial_first, keyword_first };

struct MechanismSpec {
  Mechanism kind = Mechanism::hashing;
  /// Level sizes of the hybrid mechanisms: l1 partitions at the first
  /// level, each split into l2 at the second.
  std::size_t l1 = 1;
  std::size_t l2 = 1;

  /// "hashing", "location", "keyword", "prefix", "spatial-first:AxB",
  /// "keyword-first:AxB".
  static MechanismSpec parse(const std::string &text);
  std::string name() const;
  bool hybrid() const { return kind == Mechanism::spatial_first || kind == Mechanism::keyword_first; }
};

/// Disjoint cover of a rectangle by 2^depth KD leaves.
class SpatialPartition {
public:
  SpatialPartition() = default;
  explicit SpatialPartition(Rect whole) : leaves_{whole} {}

  /// Splits alternate x/y; each split balances subscriptions times the
  /// fraction of sample messages on either side, choosing among the
  /// subscription coordinates. An empty node splits at its midpoint.
  static SpatialPartition build(const Rect &bounds, std::span<const Point> subs,
                                std::span<const Point> messages, unsigned depth);

  std::size_t size() const { return leaves_.size(); }
  const std::vector<Rect> &leaves() const { return leaves_; }
  /// Leaf holding p; points on a split line go to the upper side.
  std::size_t leaf_of(Point p) const;

private:
  struct Node {
    int axis = -1;
    double split = 0.0;
    std::size_t lo = 0, hi = 0;
    std::size_t leaf = 0;
  };
  std::size_t build_node(const Rect &r, std::vector<Point> subs, std::vector<Point> msgs, double sample,
                         unsigned depth, unsigned max_depth);

  std::vector<Rect> leaves_;
  std::vector<Node> nodes_;
};

/// Consecutive rank ranges [start[i], start[i+1]) covering the vocabulary.
class KeywordPartition {
public:
  KeywordPartition() = default;

  /// Recursive binary splits of the rank order, each minimizing the
  /// difference of (subscriptions overlapping a side) x (fraction of sample
  /// messages overlapping it). `subs` holds the routing keywords of each
  /// subscription (full set or prefix), each list ascending.
  static KeywordPartition build(std::size_t vocabulary, std::span<const std::vector<TermId>> subs,
                                std::span<const std::vector<TermId>> messages, unsigned depth);
  /// Ranges of equal width, for comparison.
  static KeywordPartition equal_width(std::size_t vocabulary, std::size_t parts);

  std::size_t size() const { return starts_.size(); }
  std::size_t range_of(TermId term) const;
  const std::vector<TermId> &starts() const { return starts_; }
  std::size_t vocabulary() const { return vocabulary_; }

  /// Variance of the per-range cost over the given workload.
  double cost_variance(std::span<const std::vector<TermId>> subs, std::span<const std::vector<TermId>> messages) const;

private:
  std::vector<TermId> starts_;
  std::size_t vocabulary_ = 0;
};

/// Number of leading keywords any message must touch to reach theta, with
/// the spatial similarity bounded by 1. Always at least one keyword.
std::size_t loose_prefix_length(const WeightedTermList &terms, double theta, double alpha);

/// Textual threshold used for the loose prefix: theta/(1-alpha) - alpha/(1-alpha).
inline double loose_lambda_t(double theta, double alpha) {
  return kscore_star(theta, alpha) - alpha_star(alpha);
}

struct ShardMetrics {
  std::uint64_t messages = 0;
  /// Shard deliveries summed over messages.
  std::uint64_t routed = 0;
  /// Largest per-message fan-out seen.
  std::size_t max_fanout = 0;
  /// Messages whose fan-out broke the mechanism's bound.
  std::uint64_t fanout_violations = 0;
  std::vector<std::uint64_t> shard_work;
  std::uint64_t reallocations = 0;

  double comm_cost() const { return messages ? static_cast<double>(routed) / static_cast<double>(messages) : 0.0; }
};

/// Subscription side of a simulated cluster: each shard owns a subscription
/// index over the subscriptions routed to it. A message is disseminated on
/// the shards it is routed to and the union of their answers (each
/// subscription once) is returned; results and thresholds stay in the
/// engine, and threshold changes reach every replica.
class ShardedBackend : public DisseminationBackend {
public:
  ShardedBackend(const SubscriptionTable &table, const Space &space, const IndexConfig &config,
                 std::vector<double> alpha_bounds, PruningOptions pruning, MechanismSpec mechanism,
                 std::size_t shards, std::span<const Message> message_sample, std::size_t vocabulary);
  ~ShardedBackend() override;

  void insert(Slot slot) override;
  void remove(Slot slot) override;
  void threshold_changed(Slot slot) override;
  void disseminate(const Message &m, std::vector<Delivery> &out) override;
  bool check_invariants(std::string *why) const override;
  void stats(nlohmann::json &out) const override;

  std::size_t shards() const { return shards_.size(); }
  const MechanismSpec &mechanism() const { return mechanism_; }

  /// Shards a message is sent to, ascending.
  std::vector<std::size_t> route_message(const Message &m) const;
  /// Shards a subscription currently lives on, ascending.
  const std::vector<std::size_t> &replicas(Slot slot) const { return replicas_.at(slot); }
  /// Mean number of shards per live subscription.
  double replication() const;

  const ShardMetrics &metrics() const { return metrics_; }
  const SpatialPartition &spatial() const { return spatial_; }
  const KeywordPartition &keywords() const { return keywords_; }

private:
  struct Shard;

  /// Shards the subscription needs under the current threshold.
  std::vector<std::size_t> route_subscription(Slot slot) const;
  std::vector<TermId> routing_terms(Slot slot) const;

  const SubscriptionTable &table_;
  Space space_;
  MechanismSpec mechanism_;
  PruningOptions pruning_;
  std::vector<std::unique_ptr<Shard>> shards_;
  SpatialPartition spatial_;
  KeywordPartition keywords_;
  /// Second-level partitions of the hybrid mechanisms, one per first-level part.
  std::vector<SpatialPartition> sub_spatial_;
  std::vector<KeywordPartition> sub_keywords_;
  std::vector<std::vector<std::size_t>> replicas_;
  ShardMetrics metrics_;
};

/// Backend factory for Engine.
BackendFactory sharded_backend_factory(MechanismSpec mechanism, std::size_t shards,
                                       std::vector<Message> message_sample, std::size_t vocabulary);

} // namespace skpub
