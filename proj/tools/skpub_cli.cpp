#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "skpub/bench.hpp"
#include "skpub/workload.hpp"

using namespace skpub;

namespace {

void disable_rules(PruningOptions &p, const std::vector<std::string> &rules) {
  for (const auto &r : rules) {
    if (r == "cell")
      p.cell = false;
    else if (r == "group")
      p.group = false;
    else if (r == "early-stop")
      p.early_stop = false;
    else if (r == "prefix")
      p.prefix = false;
    else if (r == "tsim-bound")
      p.tsim_bound = false;
    else if (r == "all")
      p = PruningOptions::none();
    else
      throw Error("unknown pruning rule '" + r + "'");
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Continuous top-k spatial-keyword publish/subscribe over a sliding window"};

  std::size_t window = 100000;
  double window_seconds = 0.0;
  std::size_t subs = 1000;
  std::uint32_t k = 20;
  std::size_t alpha_groups = 10;
  std::size_t cell_cap = 1000;
  std::string engine = "skype";
  std::string mechanism;
  std::size_t nsb = 4;
  std::uint64_t seed = 1;
  std::string messages_file, subs_file, metrics_out, deliveries_out, csv_out;
  std::string write_messages_file, write_subs_file;
  bool oracle_check = false;
  std::size_t slides = 100000;
  std::size_t generate = 0;
  std::size_t vocabulary = 5000;
  double zipf = 1.0;
  std::string prob_source = "head";
  std::vector<std::string> disable;
  std::size_t invariant_every = 0;
  bool track_qualifying = false;

  auto *win = app.add_option("--window", window, "Count-based window size");
  app.add_option("--window-seconds", window_seconds, "Time-based window length in seconds")->excludes(win);
  app.add_option("--subs", subs, "Subscriptions to generate when no subscription file is given");
  app.add_option("--k", k, "Result size of generated subscriptions");
  app.add_option("--alpha-groups", alpha_groups, "Preference-ratio groups per posting list");
  app.add_option("--cell-cap", cell_cap, "Subscriptions per index cell before it splits");
  app.add_option("--engine", engine, "skype | kmax:K | skyband:R | naive");
  app.add_option("--mechanism", mechanism,
                 "hashing | location | keyword | prefix | spatial-first:AxB | keyword-first:AxB");
  app.add_option("--nsb", nsb, "Number of shards for --mechanism (hybrids use A*B)");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--messages", messages_file, "Message JSONL file (otherwise generated)")->check(CLI::ExistingFile);
  app.add_option("--subscriptions", subs_file, "Subscription JSONL file (otherwise drawn from the messages)")
      ->check(CLI::ExistingFile);
  app.add_option("--metrics-out", metrics_out, "Write run metrics as JSON");
  app.add_option("--deliveries-out", deliveries_out, "Write every delivery as JSONL");
  app.add_option("--csv-out", csv_out, "Append a distribution CSV row (header written to new files)");
  app.add_flag("--oracle-check", oracle_check, "Compare every top-k with a brute-force oracle after each slide");
  app.add_option("--slides", slides, "Arrivals after the window is full");
  app.add_option("--generate", generate, "Generated message count (default: window + slides)");
  app.add_option("--vocabulary", vocabulary, "Generated vocabulary size");
  app.add_option("--zipf", zipf, "Zipf exponent of generated keywords");
  app.add_option("--prob-source", prob_source, "Score distribution for the cost model: head | sample")
      ->check(CLI::IsMember({"head", "sample"}));
  app.add_option("--disable", disable, "Turn off pruning rules: cell, group, early-stop, prefix, tsim-bound, all");
  app.add_option("--check-every", invariant_every, "Check engine invariants every N slides");
  app.add_flag("--track-qualifying", track_qualifying, "Count buffer/qualifying-set disagreements");
  app.add_option("--write-messages", write_messages_file, "Save the message stream as JSONL");
  app.add_option("--write-subscriptions", write_subs_file, "Save the subscriptions as JSONL");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc;
    EngineConfig &ec = rc.engine;
    if (window_seconds > 0.0) {
      ec.mode = WindowMode::time;
      ec.window_seconds = window_seconds;
    } else {
      ec.window_size = window;
    }
    ec.index.cell_capacity = cell_cap;
    ec.alpha_groups = alpha_groups;
    ec.policy = EnginePolicy::parse(engine);
    ec.prob_source = prob_source == "head" ? ProbSource::head : ProbSource::sample;
    ec.seed = seed;
    ec.track_qualifying = track_qualifying;
    disable_rules(ec.pruning, disable);
    rc.slides = slides;
    rc.oracle_check = oracle_check;
    rc.invariant_every = invariant_every;
    if (!mechanism.empty()) {
      rc.mechanism = MechanismSpec::parse(mechanism);
      rc.shards = rc.mechanism->hybrid() ? rc.mechanism->l1 * rc.mechanism->l2 : nsb;
    }

    std::mt19937_64 rng(seed);
    std::vector<RawMessage> raw_messages;
    if (!messages_file.empty()) {
      raw_messages = read_messages_file(messages_file);
    } else {
      GeneratorConfig gen;
      gen.vocabulary = vocabulary;
      gen.zipf_exponent = zipf;
      gen.messages = generate ? generate : (window_seconds > 0.0 ? 0 : window) + slides;
      if (window_seconds > 0.0 && !generate)
        gen.messages = static_cast<std::size_t>(window_seconds * gen.rate) + slides;
      raw_messages = generate_messages(gen, rng);
    }
    std::vector<RawSubscription> raw_subs;
    if (!subs_file.empty())
      raw_subs = read_subscriptions_file(subs_file);
    else
      raw_subs = generate_subscriptions(raw_messages, subs, k, build_vocabulary(raw_messages), rng);
    if (!write_messages_file.empty()) {
      std::ofstream out(write_messages_file);
      write_messages(out, raw_messages);
    }
    if (!write_subs_file.empty()) {
      std::ofstream out(write_subs_file);
      write_subscriptions(out, raw_subs);
    }

    Workload w = make_workload(raw_messages, raw_subs);
    std::ofstream deliveries;
    if (!deliveries_out.empty()) {
      deliveries.open(deliveries_out);
      if (!deliveries)
        throw Error("cannot write " + deliveries_out);
      rc.on_slide = [&](std::size_t, const std::vector<DeliveryEvent> &events) {
        write_delivery_log(deliveries, events);
      };
    }

    RunReport report = run(w, rc);
    nlohmann::json j = report.to_json();
    if (!metrics_out.empty()) {
      std::ofstream out(metrics_out);
      out << j.dump(2) << '\n';
    }
    if (!csv_out.empty() && rc.mechanism) {
      bool fresh = !std::ifstream(csv_out).good();
      std::ofstream out(csv_out, std::ios::app);
      if (fresh)
        out << distribution_csv_header() << '\n';
      out << distribution_csv_row(report) << '\n';
    }

    j.erase("engine");
    std::cout << j.dump(2) << '\n';
    if (rc.mechanism)
      std::cout << distribution_csv_header() << '\n' << distribution_csv_row(report) << '\n';
    if (report.oracle_mismatches > 0 || report.invariant_failures > 0)
      return 2;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
