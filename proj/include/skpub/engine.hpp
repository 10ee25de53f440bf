#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skpub/cost_model.hpp"
#include "skpub/dissemination.hpp"
#include "skpub/message_index.hpp"
#include "skpub/skyband.hpp"
#include "skpub/subscription_index.hpp"
#include "skpub/window.hpp"

namespace skpub {

/// How a subscription's buffer and threshold are maintained.
enum class PolicyKind {
  /// Partial k-skyband with a cost-optimized threshold.
  skype,
  /// Partial k-skyband with theta = ratio * current k-th score.
  fixed_skyband,
  /// Bounded top-K' list; theta is the list minimum.
  kmax,
};

struct EnginePolicy {
  PolicyKind kind = PolicyKind::skype;
  double ratio = 0.9;
  std::size_t kmax = 0;

  /// "skype", "skyband:R", "kmax:K" or "naive" (kmax with K' = k).
  static EnginePolicy parse(const std::string &text);
  std::string name() const;
};

/// Where the cost model gets its score distribution.
enum class ProbSource {
  /// Exact scores of the best probe_factor*k window messages.
  head,
  /// Uniform sample of `sample_size` window messages.
  sample,
};

struct EngineConfig {
  Space space;
  WindowMode mode = WindowMode::count;
  std::size_t window_size = 100000;
  double window_seconds = 3600.0;

  IndexConfig index;
  std::size_t alpha_groups = 10;
  std::size_t message_leaf_capacity = 2048;
  PruningOptions pruning;

  EnginePolicy policy;
  ProbSource prob_source = ProbSource::head;
  std::size_t probe_factor = 3;
  std::size_t sample_size = 256;
  ThetaSearch search;
  double ctopk_prior = 1000.0;
  std::uint64_t seed = 1;

  /// Keep the full qualifying set per subscription and check after every
  /// update that it holds fewer than k messages exactly when the buffer does.
  bool track_qualifying = false;
};

/// Message-to-subscription matching step behind the engine: given a
/// message, report every subscription whose score reaches its theta.
class DisseminationBackend {
public:
  virtual ~DisseminationBackend() = default;
  virtual void insert(Slot slot) = 0;
  virtual void remove(Slot slot) = 0;
  virtual void threshold_changed(Slot slot) = 0;
  /// Appends deliveries ordered by slot, each slot at most once.
  virtual void disseminate(const Message &m, std::vector<Delivery> &out) = 0;
  virtual bool check_invariants(std::string *why) const = 0;
  virtual void stats(nlohmann::json &out) const = 0;
};

using BackendFactory = std::function<std::unique_ptr<DisseminationBackend>(
    const SubscriptionTable &, const Space &, const IndexConfig &, const std::vector<double> &alpha_bounds,
    const PruningOptions &)>;

/// Single subscription index and disseminator.
class LocalBackend : public DisseminationBackend {
public:
  LocalBackend(const SubscriptionTable &table, const Space &space, const IndexConfig &config,
               std::vector<double> alpha_bounds, PruningOptions pruning)
      : index_(table, space, config, std::move(alpha_bounds)), dissem_(index_), pruning_(pruning) {}

  void insert(Slot slot) override { index_.insert(slot); }
  void remove(Slot slot) override { index_.remove(slot); }
  void threshold_changed(Slot slot) override { index_.update_threshold(slot); }
  void disseminate(const Message &m, std::vector<Delivery> &out) override {
    dissem_.run(m, pruning_, out, &stats_);
  }
  bool check_invariants(std::string *why) const override { return index_.check_invariants(why); }
  void stats(nlohmann::json &out) const override;

  const SubscriptionIndex &index() const { return index_; }
  const DisseminationStats &dissemination_stats() const { return stats_; }

private:
  SubscriptionIndex index_;
  Disseminator dissem_;
  PruningOptions pruning_;
  DisseminationStats stats_;
};

/// One arrival reaching one subscription.
struct DeliveryEvent {
  MessageId msg = 0;
  SubId sub = 0;
  double score = 0.0;
  /// Messages dropped from the subscription's buffer by this arrival.
  std::vector<MessageId> evicted;
};

struct EngineMetrics {
  std::uint64_t arrivals = 0;
  std::uint64_t expirations = 0;
  std::uint64_t deliveries = 0;
  std::uint64_t reevaluations = 0;
  std::uint64_t evictions = 0;
  /// Index work (leaves + postings + candidates) spent by re-evaluations.
  std::uint64_t reevaluation_work = 0;
  double arrival_ns = 0.0;
  double expiry_ns = 0.0;
  /// Sum over samples of the mean buffer size across subscriptions.
  double buffer_sum = 0.0;
  std::uint64_t buffer_samples = 0;
  /// Update steps where the buffer and the qualifying set disagreed on
  /// holding fewer than k messages (only with track_qualifying).
  std::uint64_t qualifying_mismatches = 0;
  std::uint64_t qualifying_checks = 0;

  /// Mean arrival processing time per message, nanoseconds.
  double amp() const { return arrivals ? arrival_ns / static_cast<double>(arrivals) : 0.0; }
  /// Mean expiry processing time per message, nanoseconds.
  double emp() const { return expirations ? expiry_ns / static_cast<double>(expirations) : 0.0; }
  double mean_buffer() const { return buffer_samples ? buffer_sum / static_cast<double>(buffer_samples) : 0.0; }
};

/// Continuous top-k publish/subscribe over a sliding window.
class Engine {
public:
  explicit Engine(EngineConfig config, BackendFactory factory = {});
  ~Engine();
  Engine(const Engine &) = delete;
  Engine &operator=(const Engine &) = delete;

  /// Registers the initial subscription set: fixes the alpha buckets from
  /// it, builds the backend and computes every result over the current
  /// window. May be called once; later additions go through add_subscription.
  void load_subscriptions(std::vector<Subscription> subs);
  void add_subscription(Subscription s);
  /// Returns false for an unknown id.
  bool remove_subscription(SubId id);

  /// Slides the window by one arrival. Messages get their sequence number
  /// here; in count mode the arrival time is replaced by it.
  void process(Message m, std::vector<DeliveryEvent> *log = nullptr);

  /// Current top-k of a subscription in result order.
  std::vector<ScoredMessage> results(SubId id) const;
  double theta(SubId id) const;
  std::size_t buffer_size(SubId id) const;

  /// Starts (or restarts) timing and counting; earlier updates are warm-up.
  void reset_metrics();
  const EngineMetrics &metrics() const { return metrics_; }

  const EngineConfig &config() const { return config_; }
  const SlidingWindow &window() const { return window_; }
  const MessageIndex &message_index() const { return msg_index_; }
  const SubscriptionTable &table() const { return table_; }
  DisseminationBackend *backend() { return backend_.get(); }
  std::uint64_t next_seq() const { return next_seq_; }

  /// Cross-checks the indexes, every buffer and the reverse map.
  bool check_invariants(std::string *why = nullptr) const;
  void dump_buffers(nlohmann::json &out) const;
  void stats(nlohmann::json &out) const;

private:
  struct SubState {
    SkybandBuffer buffer;
    /// kmax policy: best messages in result order, at most K'.
    std::vector<ScoredMessage> top;
    /// kmax policy: the list holds every matching window message.
    bool complete = false;
    CostTracker ctopk;
    std::unordered_set<std::uint64_t> qualifying;
  };

  Slot register_subscription(Subscription s);
  void reevaluate(Slot slot);
  void reevaluate_skyband(Slot slot, SubState &st);
  void reevaluate_kmax(Slot slot, SubState &st);
  void expire_front();
  void deliver(const Message &m, const Delivery &d, std::vector<DeliveryEvent> *log);
  void hold(std::uint64_t seq, Slot slot);
  void release(std::uint64_t seq, Slot slot);
  std::size_t held(const SubState &st) const;
  void check_qualifying(Slot slot);
  void set_theta(Slot slot, double theta);
  std::size_t kmax_of(const Subscription &s) const;
  UpdateMix update_mix() const;

  EngineConfig config_;
  BackendFactory factory_;
  SubscriptionTable table_;
  SlidingWindow window_;
  MessageIndex msg_index_;
  std::unique_ptr<DisseminationBackend> backend_;
  std::vector<SubState> states_;
  std::vector<char> indexed_;
  std::unordered_map<std::uint64_t, std::vector<Slot>> holders_;
  std::unordered_map<std::uint64_t, std::vector<Slot>> qualifying_holders_;
  std::vector<Delivery> scratch_;
  std::mt19937_64 rng_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t total_arrivals_ = 0;
  std::uint64_t total_expiries_ = 0;
  std::size_t buffered_total_ = 0;
  EngineMetrics metrics_;
};

} // namespace skpub
