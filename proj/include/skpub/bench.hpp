#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skpub/distribution.hpp"
#include "skpub/engine.hpp"
#include "skpub/workload.hpp"

namespace skpub {

struct RunConfig {
  EngineConfig engine;
  /// Arrivals streamed after the window is full.
  std::size_t slides = 100000;
  /// Leading fraction of the slides excluded from the metrics.
  double warmup_fraction = 0.05;

  /// Lockstep brute-force comparison of every subscription's top-k.
  bool oracle_check = false;
  /// Run Engine::check_invariants every this many slides (0 = never).
  std::size_t invariant_every = 0;

  /// Distributed run when set.
  std::optional<MechanismSpec> mechanism;
  std::size_t shards = 1;
  /// Leading fraction of the workload used as the routing sample.
  double sample_fraction = 0.1;

  /// Receives the deliveries of every slide (prefill excluded).
  std::function<void(std::size_t slide, const std::vector<DeliveryEvent> &)> on_slide;
};

struct RunReport {
  std::string policy;
  std::size_t subscriptions = 0;
  std::size_t prefill = 0;
  std::size_t slides = 0;
  EngineMetrics metrics;
  double wall_seconds = 0.0;
  std::uint64_t oracle_checks = 0;
  std::uint64_t oracle_mismatches = 0;
  /// First oracle disagreement, with both answers.
  nlohmann::json first_mismatch;
  std::uint64_t invariant_failures = 0;
  std::string first_invariant_failure;
  nlohmann::json engine_stats;

  /// Distributed runs only.
  std::optional<MechanismSpec> mechanism;
  std::size_t shards = 0;
  ShardMetrics shard_metrics;
  double replication = 0.0;

  nlohmann::json to_json() const;
};

/// Streams a workload through an engine: fills the window, registers the
/// subscriptions, then slides `slides` times. Throws if the workload is
/// shorter than the window.
RunReport run(const Workload &w, const RunConfig &config);

/// Messages that fill the window before subscriptions are registered.
std::size_t prefill_count(const Workload &w, const EngineConfig &config);

/// CSV with header mechanism,N_sb,comm_cost,replication,max_shard_work,total_work.
std::string distribution_csv_header();
std::string distribution_csv_row(const RunReport &r);

} // namespace skpub
