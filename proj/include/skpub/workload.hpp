#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skpub/core.hpp"
#include "skpub/engine.hpp"

namespace skpub {

using RawTerms = std::vector<std::pair<std::string, std::uint32_t>>;

/// A message as read from or written to a JSONL file.
struct RawMessage {
  MessageId id = 0;
  double t = 0.0;
  double lat = 0.0;
  double lon = 0.0;
  RawTerms terms;
};

struct RawSubscription {
  SubId id = 0;
  double lat = 0.0;
  double lon = 0.0;
  RawTerms terms;
  std::uint32_t k = 20;
  double alpha = 0.5;
};

/// Synthetic stream: Zipf keywords, clustered locations, Poisson arrivals.
struct GeneratorConfig {
  std::size_t messages = 100000;
  std::size_t vocabulary = 5000;
  double zipf_exponent = 1.0;
  /// Keyword draws per message (with replacement; repeats raise tf).
  std::uint32_t min_tokens = 1;
  std::uint32_t max_tokens = 8;
  std::size_t clusters = 24;
  /// Cluster standard deviation as a fraction of the space extent.
  double cluster_spread = 0.02;
  /// Fraction of messages placed uniformly instead of near a cluster.
  double background = 0.15;
  /// Longitude/latitude box; x is longitude.
  Rect bounds{-125.0, 24.0, -66.0, 50.0};
  /// Mean arrivals per second for the timestamps.
  double rate = 10.0;
};

std::vector<RawMessage> generate_messages(const GeneratorConfig &config, std::mt19937_64 &rng);

/// Subscriptions drawn from random messages: j in 1..max_keywords keywords
/// of the source message, its location, alpha uniform in (0, 1).
std::vector<RawSubscription> generate_subscriptions(std::span<const RawMessage> messages, std::size_t count,
                                                    std::uint32_t k, const Vocabulary &vocab,
                                                    std::mt19937_64 &rng, std::uint32_t max_keywords = 5);

/// Document frequencies over the given messages.
Vocabulary build_vocabulary(std::span<const RawMessage> messages);

/// Smallest box holding every message, padded by `pad` of its extent.
Rect bounding_box(std::span<const RawMessage> messages, double pad = 1e-6);

/// Throws if the message has no term with positive idf.
Message to_message(const RawMessage &raw, const Vocabulary &vocab);
Subscription to_subscription(const RawSubscription &raw, const Vocabulary &vocab);

std::vector<RawMessage> read_messages(std::istream &in);
std::vector<RawSubscription> read_subscriptions(std::istream &in);
void write_messages(std::ostream &out, std::span<const RawMessage> messages);
void write_subscriptions(std::ostream &out, std::span<const RawSubscription> subs);
void write_delivery_log(std::ostream &out, std::span<const DeliveryEvent> events);

std::vector<RawMessage> read_messages_file(const std::string &path);
std::vector<RawSubscription> read_subscriptions_file(const std::string &path);

/// Everything a run needs: converted messages in arrival order,
/// subscriptions, the frozen vocabulary and the space.
struct Workload {
  Space space;
  Vocabulary vocab;
  std::vector<Message> messages;
  std::vector<Subscription> subscriptions;
};

/// Converts raw records; messages without a usable keyword are skipped.
Workload make_workload(std::span<const RawMessage> messages, std::span<const RawSubscription> subs);

/// Generated messages plus `subs` generated subscriptions in one step.
Workload synthetic_workload(const GeneratorConfig &gen, std::size_t subs, std::uint32_t k, std::uint64_t seed);

} // namespace skpub
