// Acceptance suite: one pass/fail line per criterion.
//
//   acceptance                 run everything
//   acceptance --criterion 4   run one criterion
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "skpub/bench.hpp"
#include "skpub/cost_model.hpp"
#include "skpub/dissemination.hpp"
#include "skpub/distribution.hpp"
#include "skpub/skyband.hpp"
#include "skpub/subscription_index.hpp"

using namespace skpub;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Workload desk(std::size_t messages, std::size_t subs, std::uint64_t seed) {
  GeneratorConfig g;
  g.messages = messages;
  return synthetic_workload(g, subs, 20, seed);
}

RunConfig base_run(std::size_t window, std::size_t slides) {
  RunConfig rc;
  rc.engine.window_size = window;
  rc.slides = slides;
  return rc;
}

/// Every delivery of a run as text, scores printed exactly.
std::string delivery_stream(const Workload &w, RunConfig rc) {
  std::ostringstream out;
  rc.on_slide = [&](std::size_t s, const std::vector<DeliveryEvent> &events) {
    for (const auto &e : events) {
      out << s << ' ' << e.msg << ' ' << e.sub << ' ' << fmt("%.17g", e.score);
      for (auto id : e.evicted)
        out << ' ' << id;
      out << '\n';
    }
  };
  run(w, rc);
  return out.str();
}

// 1. Every subscription's top-k equals the brute-force oracle after every slide.
Outcome oracle_equivalence() {
  std::uint64_t checks = 0, mismatches = 0, invariant_failures = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Workload w = desk(15000, 1000, seed);
    RunConfig rc = base_run(5000, 10000);
    rc.oracle_check = true;
    rc.invariant_every = 1000;
    auto r = run(w, rc);
    checks += r.oracle_checks;
    mismatches += r.oracle_mismatches;
    invariant_failures += r.invariant_failures;
    if (r.oracle_mismatches)
      std::cerr << "seed " << seed << " first mismatch: " << r.first_mismatch.dump() << '\n';
    if (r.invariant_failures)
      std::cerr << "seed " << seed << ": " << r.first_invariant_failure << '\n';
  }
  return {checks == 5ull * 10000 * 1000 && mismatches == 0 && invariant_failures == 0,
          fmt("%llu top-k comparisons over 5 seeds, %llu mismatches, %llu invariant failures (need 0)",
              (unsigned long long)checks, (unsigned long long)mismatches,
              (unsigned long long)invariant_failures)};
}

// 2. Delivery streams do not depend on which pruning rules are enabled.
Outcome pruning_losslessness() {
  Workload w = desk(15000, 1000, 21);
  RunConfig rc = base_run(5000, 10000);
  const std::string reference = delivery_stream(w, rc);
  std::vector<std::pair<std::string, PruningOptions>> configs;
  const char *names[] = {"cell", "group", "early-stop", "prefix", "tsim-bound"};
  for (int i = 0; i < 5; ++i) {
    PruningOptions o;
    bool *flags[] = {&o.cell, &o.group, &o.early_stop, &o.prefix, &o.tsim_bound};
    *flags[i] = false;
    configs.emplace_back(std::string("no ") + names[i], o);
  }
  configs.emplace_back("all off", PruningOptions::none());
  std::string differing;
  for (const auto &[name, opt] : configs) {
    RunConfig c = rc;
    c.engine.pruning = opt;
    if (delivery_stream(w, c) != reference)
      differing += " [" + name + "]";
  }
  std::size_t lines = static_cast<std::size_t>(std::count(reference.begin(), reference.end(), '\n'));
  return {differing.empty() && lines > 0,
          fmt("%zu deliveries; %zu toggle configurations compared byte for byte; differing:%s", lines,
              configs.size(), differing.empty() ? " none" : differing.c_str())};
}

// 3. The buffer holds fewer than k messages exactly when the qualifying set does.
Outcome shadow_invariant() {
  Workload w = desk(15000, 1000, 31);
  RunConfig rc = base_run(5000, 10000);
  rc.engine.track_qualifying = true;
  rc.warmup_fraction = 0.0;
  auto r = run(w, rc);
  const auto &m = r.metrics;
  double agree = m.qualifying_checks ? 1.0 - double(m.qualifying_mismatches) / double(m.qualifying_checks) : 0.0;
  return {m.qualifying_checks > 0 && m.qualifying_mismatches == 0,
          fmt("%llu update steps checked, agreement %.4f%% (need 100%%)", (unsigned long long)m.qualifying_checks,
              100.0 * agree)};
}

// 4. Monte Carlo hitting time of the reflected walk against the closed form.
Outcome walk_estimator() {
  const double window = 2000;
  const int trials = 10000;
  std::mt19937_64 rng(4);
  double worst = 0;
  std::string cells;
  for (std::uint32_t k : {5u, 20u}) {
    for (double prob : {0.01, 0.05, 0.1}) {
      const auto start = static_cast<long>(prob * window);
      const long barrier = 2 * start;
      double sum = 0;
      for (int t = 0; t < trials; ++t) {
        // Each update moves the walk with probability prob (an arrival or an
        // expiry of a qualifying message), up or down with equal odds.
        long x = start, moves = 0;
        std::uint64_t bits = 0;
        int left = 0;
        while (x >= static_cast<long>(k)) {
          if (left == 0) {
            bits = rng();
            left = 64;
          }
          bool up = bits & 1;
          bits >>= 1;
          --left;
          ++moves;
          if (up)
            x = std::min(x + 1, barrier);
          else
            --x;
        }
        // Lazy updates between moves: failures before `moves` successes.
        std::negative_binomial_distribution<long> lazy(moves, prob);
        sum += static_cast<double>(moves + lazy(rng));
      }
      double mc = sum / trials;
      double z = expected_trigger_updates(k, window, prob);
      double err = std::abs(mc - z) / z;
      worst = std::max(worst, err);
      cells += fmt(" k=%u,p=%.2f: %.0f vs %.0f (%.1f%%);", k, prob, mc, z, 100 * err);
    }
  }
  return {worst <= 0.10, fmt("worst relative error %.2f%% (tolerance 10%%);", 100 * worst) + cells};
}

// 5. Steady-state skyband size of i.i.d. score streams against k ln(n/k).
Outcome skyband_size() {
  const std::uint32_t k = 20;
  const std::size_t window = 10000;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  std::string cells;
  for (double ratio : {5.0, 50.0}) {
    const double prob = ratio * k / window;
    const double theta = 1.0 - prob;
    SkybandBuffer buf(k, theta);
    std::deque<std::pair<std::uint64_t, double>> live;
    double sum = 0;
    std::size_t samples = 0;
    for (std::uint64_t seq = 0; seq < 40 * window; ++seq) {
      if (live.size() == window) {
        if (live.front().second >= theta)
          buf.expire(live.front().first);
        live.pop_front();
      }
      double s = u(rng);
      live.emplace_back(seq, s);
      if (s >= theta)
        buf.insert(seq, static_cast<MessageId>(seq), s);
      if (seq >= 2 * window) {
        sum += static_cast<double>(buf.size());
        ++samples;
      }
    }
    double mean = sum / static_cast<double>(samples);
    double model = k * std::log(ratio);
    // Exact expectation for i.i.d. scores: sum over ages i of min(1, k/i).
    const auto n = static_cast<std::size_t>(ratio * k);
    double exact = 0;
    for (std::size_t i = 1; i <= n; ++i)
      exact += std::min(1.0, double(k) / double(i));
    double err = std::abs(mean - model) / model;
    worst = std::max(worst, err);
    cells += fmt(" n/k=%.0f: measured %.1f, k ln(n/k) %.1f (%.1f%%), exact expectation %.1f;", ratio, mean, model,
                 100 * err, exact);
  }
  return {worst <= 0.15, fmt("worst relative error %.1f%% (tolerance 15%%);", 100 * worst) + cells};
}

// 6. Mean buffer of the cost-based skyband against kmax(60) and skyband(0.95).
Outcome buffer_ordering() {
  Workload w = desk(30000, 1000, 61);
  std::map<std::string, double> buffer;
  for (const char *policy : {"skype", "kmax:60", "skyband:0.95"}) {
    RunConfig rc = base_run(10000, 20000);
    rc.engine.policy = EnginePolicy::parse(policy);
    buffer[policy] = run(w, rc).metrics.mean_buffer();
  }
  double a = buffer["skype"] / buffer["kmax:60"], b = buffer["skype"] / buffer["skyband:0.95"];
  return {a <= 0.8 && b <= 0.8,
          fmt("mean buffer skype %.1f, kmax(60) %.1f, skyband(0.95) %.1f; ratios %.2f and %.2f (need <= 0.80)",
              buffer["skype"], buffer["kmax:60"], buffer["skyband:0.95"], a, b)};
}

// 7. Re-evaluations per 10k expirations against the fixed skyband at 1.0.
Outcome reevaluation_reduction() {
  Workload w = desk(30000, 1000, 71);
  std::map<std::string, double> rate;
  for (const char *policy : {"skype", "skyband:1.0"}) {
    RunConfig rc = base_run(10000, 20000);
    rc.engine.policy = EnginePolicy::parse(policy);
    auto m = run(w, rc).metrics;
    rate[policy] = 1e4 * double(m.reevaluations) / double(std::max<std::uint64_t>(m.expirations, 1));
  }
  double ratio = rate["skype"] / rate["skyband:1.0"];
  return {ratio <= 0.5, fmt("re-evaluations per 10k expirations: skype %.1f, skyband(1.0) %.1f; ratio %.3f "
                            "(need <= 0.50)",
                            rate["skype"], rate["skyband:1.0"], ratio)};
}

// 8. Arrival processing time with and without group pruning at 100k subscriptions.
Outcome group_pruning_speedup() {
  Workload w = desk(8000, 100000, 81);
  RunConfig rc = base_run(5000, 3000);
  double with_groups = run(w, rc).metrics.amp();
  rc.engine.pruning.group = false;
  rc.engine.pruning.early_stop = false;
  double individual = run(w, rc).metrics.amp();
  double ratio = with_groups / individual;
  return {ratio <= 0.67, fmt("AMP with groups %.0f us, individual pruning only %.0f us; ratio %.3f (need <= 0.67)",
                             with_groups / 1e3, individual / 1e3, ratio)};
}

// 9. Fan-out and replication of the routing mechanisms.
Outcome distribution_exactness() {
  Workload w = desk(8000, 1000, 91);
  const std::size_t shards = 8;
  std::map<std::string, RunReport> r;
  for (const char *mech : {"hashing", "location", "keyword", "prefix"}) {
    RunConfig rc = base_run(4000, 4000);
    rc.mechanism = MechanismSpec::parse(mech);
    rc.shards = shards;
    r[mech] = run(w, rc);
  }
  bool ok = true;
  std::string detail;
  for (auto &[name, rep] : r) {
    const auto &m = rep.shard_metrics;
    ok = ok && m.fanout_violations == 0 && m.messages > 0;
    detail += fmt(" %s: fan-out %.3f (max %zu), replication %.3f, violations %llu;", name.c_str(), m.comm_cost(),
                  m.max_fanout, rep.replication, (unsigned long long)m.fanout_violations);
  }
  for (const char *flat : {"hashing", "location"}) {
    ok = ok && r[flat].shard_metrics.comm_cost() == double(shards) && r[flat].replication == 1.0;
  }
  ok = ok && r["prefix"].replication < r["keyword"].replication;
  return {ok, "N_sb=8;" + detail};
}

// 10. Sharded runs deliver exactly what the centralized engine delivers.
Outcome distributed_correctness() {
  Workload w = desk(4000, 500, 101);
  RunConfig rc = base_run(2000, 2000);
  const std::string central = delivery_stream(w, rc);
  std::string differing;
  int runs = 0;
  for (std::size_t n : {2u, 4u, 8u}) {
    std::string hybrid = "2x" + std::to_string(n / 2);
    std::vector<std::string> mechs = {"hashing", "location", "keyword", "prefix", "spatial-first:" + hybrid,
                                      "keyword-first:" + hybrid};
    for (const auto &mech : mechs) {
      RunConfig d = rc;
      d.mechanism = MechanismSpec::parse(mech);
      d.shards = d.mechanism->hybrid() ? d.mechanism->l1 * d.mechanism->l2 : n;
      d.invariant_every = 500;
      ++runs;
      if (delivery_stream(w, d) != central)
        differing += " [" + mech + " N=" + std::to_string(n) + "]";
    }
  }
  std::size_t lines = static_cast<std::size_t>(std::count(central.begin(), central.end(), '\n'));
  return {differing.empty() && lines > 0, fmt("%zu centralized deliveries; %d sharded runs compared; differing:%s",
                                              lines, runs, differing.empty() ? " none" : differing.c_str())};
}

double trunc2(double x) { return std::floor(x * 100.0 + 1e-9) / 100.0; }

// 11. Hand-worked pruning numbers.
Outcome worked_examples() {
  auto list = [](std::vector<TermWeight> e) { return WeightedTermList::from_weights(std::move(e), false); };
  const Space space(Rect{0, 0, 0.96, 1.28});
  std::vector<std::pair<std::string, bool>> checks;
  std::string detail;

  double lt1 = lambda_t(kscore_star(0.7, 0.6), alpha_star(0.6), 0.98);
  checks.emplace_back("lambda 0.28", std::abs(lt1 - 0.28) < 0.005);
  double lt2 = lambda_t(kscore_star(0.7, 0.6), alpha_star(0.6), 0.99);
  auto s1 = list({{1, 0.5}, {2, 0.3}, {3, 0.2}, {4, 0.1}});
  auto m2 = list({{2, 0.4}, {5, 0.2}});
  checks.emplace_back("lambda 0.26, refined prefix {w1}",
                      trunc2(lt2) == 0.26 && prefix_skip(m2.maxwt(0), s1.wtsum(1), lt2) &&
                          !prefix_skip(m2.maxwt(0), s1.wtsum(0), lt2));
  Rect c1{0.4, 0.4, 0.96, 1.28};
  double in = inner_bound({0.65, 0.9}, c1, space), out = outer_bound({0.1, 0.9}, c1, space);
  double both = combined_bound(0.25, 0.3, false, space);
  checks.emplace_back("bounds 0.84/0.81/0.65", trunc2(in) == 0.84 && trunc2(out) == 0.81 && trunc2(both) == 0.65);
  double lt3 = lambda_t(kscore_star(0.6, 0.5), alpha_star(0.5), 0.65);
  checks.emplace_back("lambda 0.55", std::abs(lt3 - 0.55) < 0.005);
  auto s3 = list({{1, 0.5}, {2, 0.4}, {3, 0.3}, {4, 0.1}});
  auto m3 = list({{2, 0.7}, {5, 0.3}, {6, 0.2}});
  double partial = tsim_range(s3, 0, 2, m3, 0, 1), ub = tsim_upper_bound(s3, 2, m3, 1);
  checks.emplace_back("abort 0.28 + 0.12 < 0.48", std::abs(partial - 0.28) < 1e-9 && std::abs(ub - 0.12) < 1e-9 &&
                                                      partial + ub < 0.48 - kPruneSlack);
  auto s = list({{1, 0.6}, {2, 0.3}, {3, 0.2}, {4, 0.1}});
  checks.emplace_back("routing lambda 0.5, prefix {w1,w2}",
                      std::abs(loose_lambda_t(0.8, 0.6) - 0.5) < 1e-9 && loose_prefix_length(s, 0.8, 0.6) == 2);

  bool ok = true;
  for (const auto &[name, pass] : checks) {
    ok = ok && pass;
    detail += " " + name + (pass ? " ok;" : " WRONG;");
  }
  detail += fmt(" values %.4f %.4f %.4f %.4f %.4f %.4f %.2f+%.2f", lt1, lt2, in, out, both, lt3, partial, ub);
  return {ok, detail};
}

struct Criterion {
  const char *name;
  std::function<Outcome()> run;
};

const std::vector<Criterion> &criteria() {
  static const std::vector<Criterion> all = {
      {"oracle equivalence", oracle_equivalence},
      {"pruning losslessness", pruning_losslessness},
      {"buffer/qualifying-set agreement", shadow_invariant},
      {"walk hitting-time estimator", walk_estimator},
      {"expected skyband size", skyband_size},
      {"buffer-size ordering", buffer_ordering},
      {"re-evaluation reduction", reevaluation_reduction},
      {"group pruning speedup", group_pruning_speedup},
      {"distribution fan-out and replication", distribution_exactness},
      {"distributed equals centralized", distributed_correctness},
      {"worked examples", worked_examples},
  };
  return all;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number(s) to run (default: all)")
      ->check(CLI::Range(1, static_cast<int>(criteria().size())));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria().size()); ++i)
      selected.push_back(i);

  int failed = 0;
  for (int n : selected) {
    const auto &c = criteria()[n - 1];
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
