#include "skpub/bench.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "skpub/oracle.hpp"

namespace skpub {

namespace {

nlohmann::json topk_json(const std::vector<ScoredMessage> &v) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto &s : v)
    out.push_back({{"seq", s.seq}, {"id", s.id}, {"score", s.score}});
  return out;
}

} // namespace

std::size_t prefill_count(const Workload &w, const EngineConfig &config) {
  if (config.mode == WindowMode::count)
    return std::min(config.window_size, w.messages.size());
  if (w.messages.empty())
    return 0;
  const double end = w.messages.front().t + config.window_seconds;
  auto it = std::find_if(w.messages.begin(), w.messages.end(), [end](const Message &m) { return m.t >= end; });
  return static_cast<std::size_t>(it - w.messages.begin());
}

RunReport run(const Workload &w, const RunConfig &config) {
  RunReport report;
  report.policy = config.engine.policy.name();
  report.subscriptions = w.subscriptions.size();
  report.prefill = prefill_count(w, config.engine);
  if (config.engine.mode == WindowMode::count && report.prefill < config.engine.window_size)
    throw Error("workload has fewer messages than the window holds");
  report.slides = std::min(config.slides, w.messages.size() - report.prefill);

  EngineConfig ec = config.engine;
  ec.space = w.space;
  BackendFactory factory;
  if (config.mechanism) {
    auto n = static_cast<std::size_t>(config.sample_fraction * static_cast<double>(w.messages.size()));
    std::vector<Message> sample(w.messages.begin(), w.messages.begin() + static_cast<std::ptrdiff_t>(n));
    factory = sharded_backend_factory(*config.mechanism, config.shards, std::move(sample), w.vocab.size());
    report.mechanism = config.mechanism;
    report.shards = config.shards;
  }
  Engine engine(ec, factory);

  std::optional<BruteForceOracle> oracle;
  if (config.oracle_check)
    oracle.emplace(w.space,
                   ec.mode == WindowMode::count ? SlidingWindow::count_based(ec.window_size)
                                                : SlidingWindow::time_based(ec.window_seconds),
                   w.subscriptions);

  for (std::size_t i = 0; i < report.prefill; ++i) {
    engine.process(w.messages[i]);
    if (oracle)
      oracle->process(w.messages[i]);
  }
  engine.load_subscriptions(w.subscriptions);

  const auto warmup = static_cast<std::size_t>(config.warmup_fraction * static_cast<double>(report.slides));
  if (warmup == 0)
    engine.reset_metrics();
  std::vector<DeliveryEvent> log;
  auto start = std::chrono::steady_clock::now();
  for (std::size_t s = 0; s < report.slides; ++s) {
    const Message &m = w.messages[report.prefill + s];
    log.clear();
    engine.process(m, config.on_slide ? &log : nullptr);
    if (config.on_slide)
      config.on_slide(s, log);
    if (oracle) {
      oracle->process(m);
      for (const auto &sub : w.subscriptions) {
        ++report.oracle_checks;
        auto got = engine.results(sub.id);
        const auto &want = oracle->topk(sub.id);
        if (got == want)
          continue;
        if (report.oracle_mismatches++ == 0)
          report.first_mismatch = {{"slide", s},
                                   {"subscription", sub.id},
                                   {"engine", topk_json(got)},
                                   {"oracle", topk_json(want)}};
      }
    }
    if (config.invariant_every && (s + 1) % config.invariant_every == 0) {
      std::string why;
      if (!engine.check_invariants(&why) && report.invariant_failures++ == 0)
        report.first_invariant_failure = "slide " + std::to_string(s) + ": " + why;
    }
    if (s + 1 == warmup)
      engine.reset_metrics();
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.metrics = engine.metrics();
  engine.stats(report.engine_stats);
  if (config.mechanism) {
    auto *sharded = dynamic_cast<ShardedBackend *>(engine.backend());
    report.shard_metrics = sharded->metrics();
    report.replication = sharded->replication();
  }
  return report;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j = {{"policy", policy},
                      {"subscriptions", subscriptions},
                      {"prefill", prefill},
                      {"slides", slides},
                      {"amp_ns", metrics.amp()},
                      {"emp_ns", metrics.emp()},
                      {"throughput_per_s", metrics.arrival_ns + metrics.expiry_ns > 0
                                               ? 1e9 * static_cast<double>(metrics.arrivals) /
                                                     (metrics.arrival_ns + metrics.expiry_ns)
                                               : 0.0},
                      {"mean_buffer", metrics.mean_buffer()},
                      {"reevaluations", metrics.reevaluations},
                      {"reevaluation_work", metrics.reevaluation_work},
                      {"deliveries", metrics.deliveries},
                      {"evictions", metrics.evictions},
                      {"arrivals", metrics.arrivals},
                      {"expirations", metrics.expirations},
                      {"wall_seconds", wall_seconds},
                      {"engine", engine_stats}};
  if (oracle_checks > 0) {
    j["oracle_checks"] = oracle_checks;
    j["oracle_mismatches"] = oracle_mismatches;
    if (oracle_mismatches > 0)
      j["first_mismatch"] = first_mismatch;
  }
  if (metrics.qualifying_checks > 0) {
    j["qualifying_checks"] = metrics.qualifying_checks;
    j["qualifying_mismatches"] = metrics.qualifying_mismatches;
  }
  if (invariant_failures > 0)
    j["invariant_failures"] = {{"count", invariant_failures}, {"first", first_invariant_failure}};
  if (mechanism) {
    j["mechanism"] = mechanism->name();
    j["shards"] = shards;
    j["comm_cost"] = shard_metrics.comm_cost();
    j["replication"] = replication;
    j["fanout_violations"] = shard_metrics.fanout_violations;
  }
  return j;
}

std::string distribution_csv_header() { return "mechanism,N_sb,comm_cost,replication,max_shard_work,total_work"; }

std::string distribution_csv_row(const RunReport &r) {
  std::uint64_t total = 0, max_work = 0;
  for (auto w : r.shard_metrics.shard_work) {
    total += w;
    max_work = std::max(max_work, w);
  }
  std::ostringstream out;
  out << (r.mechanism ? r.mechanism->name() : "centralized") << ',' << r.shards << ','
      << r.shard_metrics.comm_cost() << ',' << r.replication << ',' << max_work << ',' << total;
  return out.str();
}

} // namespace skpub
