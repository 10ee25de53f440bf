#include "skpub/engine.hpp"

#include <algorithm>
#include <chrono>

#include <nlohmann/json.hpp>

namespace skpub {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ns(Clock::time_point a, Clock::time_point b) {
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
}

} // namespace

EnginePolicy EnginePolicy::parse(const std::string &text) {
  EnginePolicy p;
  auto colon = text.find(':');
  std::string head = text.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (head == "skype" && arg.empty()) {
      p.kind = PolicyKind::skype;
    } else if (head == "naive" && arg.empty()) {
      p.kind = PolicyKind::kmax;
      p.kmax = 0;
    } else if (head == "kmax" && !arg.empty()) {
      p.kind = PolicyKind::kmax;
      long v = std::stol(arg);
      if (v <= 0)
        throw Error("kmax size must be positive");
      p.kmax = static_cast<std::size_t>(v);
    } else if (head == "skyband" && !arg.empty()) {
      p.kind = PolicyKind::fixed_skyband;
      p.ratio = std::stod(arg);
      if (!(p.ratio >= 0.0 && p.ratio <= 1.0))
        throw Error("skyband ratio must lie in [0, 1]");
    } else {
      throw Error("unknown engine '" + text + "'");
    }
  } catch (const std::logic_error &) {
    throw Error("malformed engine argument in '" + text + "'");
  }
  return p;
}

std::string EnginePolicy::name() const {
  switch (kind) {
  case PolicyKind::skype:
    return "skype";
  case PolicyKind::fixed_skyband:
    return "skyband:" + std::to_string(ratio);
  case PolicyKind::kmax:
    return kmax == 0 ? "naive" : "kmax:" + std::to_string(kmax);
  }
  return "?";
}

void LocalBackend::stats(nlohmann::json &out) const {
  nlohmann::json idx;
  index_.stats(idx);
  out = {{"index", idx},
         {"cells_visited", stats_.cells_visited},
         {"cells_pruned", stats_.cells_pruned},
         {"groups_visited", stats_.groups_visited},
         {"groups_pruned", stats_.groups_pruned},
         {"members_skipped", stats_.members_skipped},
         {"postings_touched", stats_.postings_touched},
         {"prefix_skipped", stats_.prefix_skipped},
         {"bound_rejected", stats_.bound_rejected},
         {"candidates", stats_.candidates},
         {"verified", stats_.verified},
         {"deliveries", stats_.deliveries}};
}

Engine::Engine(EngineConfig config, BackendFactory factory)
    : config_(std::move(config)), factory_(std::move(factory)),
      window_(config_.mode == WindowMode::count ? SlidingWindow::count_based(config_.window_size)
                                                : SlidingWindow::time_based(config_.window_seconds)),
      msg_index_(config_.space, config_.message_leaf_capacity, config_.index.max_depth), rng_(config_.seed) {
  if (config_.probe_factor == 0)
    throw Error("probe factor must be positive");
  if (!factory_)
    factory_ = [](const SubscriptionTable &t, const Space &sp, const IndexConfig &ic,
                  const std::vector<double> &bounds, const PruningOptions &po) {
      return std::make_unique<LocalBackend>(t, sp, ic, bounds, po);
    };
}

Engine::~Engine() = default;

void Engine::load_subscriptions(std::vector<Subscription> subs) {
  if (backend_)
    throw Error("subscriptions were already loaded");
  std::vector<double> stars;
  stars.reserve(subs.size());
  for (const auto &s : subs)
    stars.push_back(alpha_star(s.alpha));
  auto bounds = SubscriptionIndex::alpha_partition_bounds(std::move(stars), config_.alpha_groups);
  // Thresholds are computed before the backend exists so that partitioners
  // can look at them.
  std::vector<Slot> slots;
  slots.reserve(subs.size());
  for (auto &s : subs)
    slots.push_back(register_subscription(std::move(s)));
  backend_ = factory_(table_, config_.space, config_.index, bounds, config_.pruning);
  for (Slot slot : slots) {
    backend_->insert(slot);
    indexed_[slot] = 1;
  }
}

void Engine::add_subscription(Subscription s) {
  if (!backend_) {
    std::vector<Subscription> one;
    one.push_back(std::move(s));
    load_subscriptions(std::move(one));
    return;
  }
  Slot slot = register_subscription(std::move(s));
  backend_->insert(slot);
  indexed_[slot] = 1;
}

Slot Engine::register_subscription(Subscription s) {
  if (config_.policy.kind == PolicyKind::kmax && config_.policy.kmax != 0 && config_.policy.kmax < s.k)
    throw Error("kmax list size below k for subscription " + std::to_string(s.id));
  Slot slot = table_.add(std::move(s));
  if (states_.size() <= slot) {
    states_.resize(slot + 1);
    indexed_.resize(slot + 1, 0);
  }
  states_[slot] = SubState{};
  states_[slot].ctopk = CostTracker(config_.ctopk_prior);
  reevaluate(slot);
  return slot;
}

bool Engine::remove_subscription(SubId id) {
  auto slot = table_.find(id);
  if (!slot)
    return false;
  SubState &st = states_[*slot];
  if (indexed_[*slot])
    backend_->remove(*slot);
  if (config_.policy.kind == PolicyKind::kmax) {
    for (const auto &e : st.top)
      release(e.seq, *slot);
  } else {
    for (const auto &e : st.buffer.entries())
      release(e.seq, *slot);
  }
  buffered_total_ -= held(st);
  st = SubState{};
  indexed_[*slot] = 0;
  table_.deactivate(*slot);
  return true;
}

std::size_t Engine::kmax_of(const Subscription &s) const {
  return std::max<std::size_t>(config_.policy.kmax, s.k);
}

std::size_t Engine::held(const SubState &st) const {
  return config_.policy.kind == PolicyKind::kmax ? st.top.size() : st.buffer.size();
}

void Engine::hold(std::uint64_t seq, Slot slot) { holders_[seq].push_back(slot); }

void Engine::release(std::uint64_t seq, Slot slot) {
  auto it = holders_.find(seq);
  if (it == holders_.end())
    return;
  auto &v = it->second;
  auto pos = std::find(v.begin(), v.end(), slot);
  if (pos != v.end()) {
    *pos = v.back();
    v.pop_back();
  }
  if (v.empty())
    holders_.erase(it);
}

void Engine::set_theta(Slot slot, double theta) {
  if (table_[slot].theta == theta)
    return;
  table_.set_theta(slot, theta);
  if (indexed_[slot])
    backend_->threshold_changed(slot);
}

UpdateMix Engine::update_mix() const {
  if (config_.mode == WindowMode::count)
    return {};
  double total = static_cast<double>(total_arrivals_ + total_expiries_);
  if (total == 0.0)
    return {};
  return {static_cast<double>(total_arrivals_) / total, static_cast<double>(total_expiries_) / total};
}

void Engine::reevaluate(Slot slot) {
  if (config_.policy.kind == PolicyKind::kmax)
    reevaluate_kmax(slot, states_[slot]);
  else
    reevaluate_skyband(slot, states_[slot]);
}

void Engine::reevaluate_skyband(Slot slot, SubState &st) {
  const Subscription &s = table_[slot].sub;
  for (const auto &e : st.buffer.entries())
    release(e.seq, slot);
  buffered_total_ -= st.buffer.size();

  QueryWork work;
  double theta = 0.0;
  if (config_.policy.kind == PolicyKind::skype) {
    const std::size_t probe_k = config_.probe_factor * s.k;
    auto probe = msg_index_.topk_query(s, probe_k, &work);
    const double kscore_now = probe.size() >= s.k ? probe[s.k - 1].score : 0.0;
    if (kscore_now > 0.0) {
      const double window = static_cast<double>(window_.size());
      ThetaSearch search = config_.search;
      std::vector<double> scores;
      if (config_.prob_source == ProbSource::head) {
        for (const auto &p : probe)
          scores.push_back(p.score);
        search.floor = probe.size() < probe_k ? 0.0 : probe.back().score;
        ScoreDistribution dist(std::move(scores), window_.size());
        theta = optimize_theta(dist, s.k, window, kscore_now, st.ctopk.mean(), search, update_mix()).theta;
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, window_.size() - 1);
        for (std::size_t i = 0; i < config_.sample_size; ++i) {
          ScoreParts sp = score_parts(s, window_[pick(rng_)], config_.space);
          scores.push_back(sp.qualifies() ? sp.score : -1.0);
        }
        work.candidates_scored += config_.sample_size;
        auto dist = ScoreDistribution::from_sample(std::move(scores));
        theta = optimize_theta(dist, s.k, window, kscore_now, st.ctopk.mean(), search, update_mix()).theta;
      }
    }
  } else {
    auto probe = msg_index_.topk_query(s, s.k, &work);
    const double kscore_now = probe.size() >= s.k ? probe[s.k - 1].score : 0.0;
    theta = config_.policy.ratio * kscore_now;
  }

  auto qualifying = msg_index_.threshold_query(s, theta, &work);
  st.buffer = SkybandBuffer::build(s.k, theta, qualifying);
  st.ctopk.record(static_cast<double>(work.total()));
  metrics_.reevaluation_work += work.total();
  for (const auto &e : st.buffer.entries())
    hold(e.seq, slot);
  buffered_total_ += st.buffer.size();
  set_theta(slot, theta);

  if (config_.track_qualifying) {
    st.qualifying.clear();
    for (const auto &q : qualifying) {
      st.qualifying.insert(q.seq);
      qualifying_holders_[q.seq].push_back(slot);
    }
  }
}

void Engine::reevaluate_kmax(Slot slot, SubState &st) {
  const Subscription &s = table_[slot].sub;
  for (const auto &e : st.top)
    release(e.seq, slot);
  buffered_total_ -= st.top.size();

  QueryWork work;
  const std::size_t cap = kmax_of(s);
  st.top = msg_index_.topk_query(s, cap, &work);
  st.complete = st.top.size() < cap;
  metrics_.reevaluation_work += work.total();
  for (const auto &e : st.top)
    hold(e.seq, slot);
  buffered_total_ += st.top.size();
  set_theta(slot, st.complete ? 0.0 : st.top.back().score);
}

void Engine::check_qualifying(Slot slot) {
  const SubState &st = states_[slot];
  const std::uint32_t k = table_[slot].sub.k;
  ++metrics_.qualifying_checks;
  if ((held(st) < k) != (st.qualifying.size() < k))
    ++metrics_.qualifying_mismatches;
}

void Engine::expire_front() {
  const Message &front = window_.front();
  const std::uint64_t seq = front.seq;
  msg_index_.expire(front);
  window_.pop_front();
  ++total_expiries_;
  ++metrics_.expirations;

  std::vector<Slot> slots;
  if (auto it = holders_.find(seq); it != holders_.end()) {
    slots = std::move(it->second);
    holders_.erase(it);
  }
  std::sort(slots.begin(), slots.end());

  std::vector<Slot> qualifying;
  if (config_.track_qualifying) {
    if (auto it = qualifying_holders_.find(seq); it != qualifying_holders_.end()) {
      for (Slot s : it->second)
        if (table_[s].active && states_[s].qualifying.erase(seq))
          qualifying.push_back(s);
      qualifying_holders_.erase(it);
    }
    std::sort(qualifying.begin(), qualifying.end());
  }

  for (Slot slot : slots) {
    SubState &st = states_[slot];
    const std::uint32_t k = table_[slot].sub.k;
    bool trigger = false;
    if (config_.policy.kind == PolicyKind::kmax) {
      auto pos = std::find_if(st.top.begin(), st.top.end(),
                              [seq](const ScoredMessage &e) { return e.seq == seq; });
      if (pos == st.top.end())
        throw Error("reverse map points at a message missing from the list");
      st.top.erase(pos);
      --buffered_total_;
      trigger = st.top.size() < k && !st.complete;
    } else {
      if (!st.buffer.expire(seq))
        throw Error("reverse map points at a message missing from the buffer");
      --buffered_total_;
      trigger = st.buffer.size() < k && table_[slot].theta > 0.0;
    }
    if (config_.track_qualifying)
      check_qualifying(slot);
    if (trigger) {
      ++metrics_.reevaluations;
      reevaluate(slot);
    }
  }
  for (Slot slot : qualifying)
    if (!std::binary_search(slots.begin(), slots.end(), slot))
      check_qualifying(slot);
}

void Engine::deliver(const Message &m, const Delivery &d, std::vector<DeliveryEvent> *log) {
  SubState &st = states_[d.slot];
  ++metrics_.deliveries;
  DeliveryEvent ev;
  if (log) {
    ev.msg = m.id;
    ev.sub = table_[d.slot].sub.id;
    ev.score = d.score;
  }

  if (config_.policy.kind == PolicyKind::kmax) {
    const std::size_t cap = kmax_of(table_[d.slot].sub);
    auto pos = std::lower_bound(st.top.begin(), st.top.end(), d.score,
                                [](const ScoredMessage &e, double s) { return e.score > s; });
    st.top.insert(pos, ScoredMessage{m.seq, m.id, d.score});
    hold(m.seq, d.slot);
    ++buffered_total_;
    if (st.top.size() > cap) {
      const ScoredMessage last = st.top.back();
      st.top.pop_back();
      release(last.seq, d.slot);
      --buffered_total_;
      ++metrics_.evictions;
      if (log)
        ev.evicted.push_back(last.id);
      st.complete = false;
    }
    if (!st.complete && st.top.size() >= cap)
      set_theta(d.slot, st.top.back().score);
  } else {
    auto evicted = st.buffer.insert(m.seq, m.id, d.score);
    hold(m.seq, d.slot);
    ++buffered_total_;
    for (const auto &e : evicted) {
      release(e.seq, d.slot);
      if (log)
        ev.evicted.push_back(e.id);
    }
    buffered_total_ -= evicted.size();
    metrics_.evictions += evicted.size();
    if (config_.track_qualifying) {
      st.qualifying.insert(m.seq);
      qualifying_holders_[m.seq].push_back(d.slot);
      check_qualifying(d.slot);
    }
  }
  if (log)
    log->push_back(std::move(ev));
}

void Engine::process(Message m, std::vector<DeliveryEvent> *log) {
  m.seq = next_seq_++;
  if (config_.mode == WindowMode::count)
    m.t = static_cast<double>(m.seq);
  else if (!window_.empty() && m.t < window_.back().t)
    throw Error("message " + std::to_string(m.id) + " arrives out of time order");

  auto t0 = Clock::now();
  std::size_t n = window_.expiring_before(m.t);
  for (std::size_t i = 0; i < n; ++i)
    expire_front();
  auto t1 = Clock::now();

  const Message &stored = window_.push(std::move(m));
  msg_index_.insert(stored);
  ++total_arrivals_;
  if (backend_) {
    scratch_.clear();
    backend_->disseminate(stored, scratch_);
    for (const auto &d : scratch_)
      deliver(stored, d, log);
  }
  auto t2 = Clock::now();

  metrics_.expiry_ns += elapsed_ns(t0, t1);
  metrics_.arrival_ns += elapsed_ns(t1, t2);
  ++metrics_.arrivals;
  if (table_.active_count() > 0) {
    metrics_.buffer_sum += static_cast<double>(buffered_total_) / static_cast<double>(table_.active_count());
    ++metrics_.buffer_samples;
  }
}

void Engine::reset_metrics() {
  std::uint64_t checks = metrics_.qualifying_checks, mismatches = metrics_.qualifying_mismatches;
  metrics_ = EngineMetrics{};
  metrics_.qualifying_checks = checks;
  metrics_.qualifying_mismatches = mismatches;
}

std::vector<ScoredMessage> Engine::results(SubId id) const {
  auto slot = table_.find(id);
  if (!slot)
    throw Error("unknown subscription " + std::to_string(id));
  const SubState &st = states_[*slot];
  const std::uint32_t k = table_[*slot].sub.k;
  if (config_.policy.kind == PolicyKind::kmax) {
    std::size_t n = std::min<std::size_t>(k, st.top.size());
    return {st.top.begin(), st.top.begin() + static_cast<std::ptrdiff_t>(n)};
  }
  std::vector<ScoredMessage> out;
  for (const auto &e : st.buffer.head())
    out.push_back({e.seq, e.id, e.score});
  return out;
}

double Engine::theta(SubId id) const {
  auto slot = table_.find(id);
  if (!slot)
    throw Error("unknown subscription " + std::to_string(id));
  return table_[*slot].theta;
}

std::size_t Engine::buffer_size(SubId id) const {
  auto slot = table_.find(id);
  if (!slot)
    throw Error("unknown subscription " + std::to_string(id));
  return held(states_[*slot]);
}

bool Engine::check_invariants(std::string *why) const {
  auto fail = [&](std::string msg) {
    if (why)
      *why = std::move(msg);
    return false;
  };
  if (backend_ && !backend_->check_invariants(why))
    return false;
  if (!msg_index_.check_integrity(why))
    return false;
  if (msg_index_.size() != window_.size())
    return fail("message index and window disagree on size");

  std::size_t total = 0, reverse = 0;
  for (const auto &[seq, slots] : holders_)
    reverse += slots.size();
  for (Slot slot = 0; slot < table_.slots(); ++slot) {
    const auto &r = table_[slot];
    if (!r.active)
      continue;
    const SubState &st = states_[slot];
    std::vector<ScoredMessage> entries;
    if (config_.policy.kind == PolicyKind::kmax) {
      entries = st.top;
      if (entries.size() > kmax_of(r.sub))
        return fail("top list longer than its bound");
    } else {
      for (const auto &e : st.buffer.entries())
        entries.push_back({e.seq, e.id, e.score});
      if (st.buffer.theta() != r.theta)
        return fail("buffer threshold differs from the indexed threshold");
      for (const auto &e : st.buffer.entries()) {
        std::uint32_t dominators = 0;
        for (const auto &o : st.buffer.entries())
          dominators += o.seq > e.seq && o.score >= e.score;
        if (dominators != e.dominance)
          return fail("stale dominance counter");
        if (dominators >= r.sub.k)
          return fail("buffer keeps a message dominated k times");
      }
    }
    total += entries.size();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto &e = entries[i];
      const Message *m = window_.find(e.seq);
      if (!m)
        return fail("buffer holds an expired message");
      if (score(r.sub, *m, config_.space) != e.score)
        return fail("buffered score differs from a fresh evaluation");
      if (e.score < r.theta)
        return fail("buffered message below threshold");
      if (i > 0 && !ranks_before(RankKey{entries[i - 1].score, entries[i - 1].seq}, RankKey{e.score, e.seq}))
        return fail("buffer out of result order");
      auto it = holders_.find(e.seq);
      if (it == holders_.end() || std::find(it->second.begin(), it->second.end(), slot) == it->second.end())
        return fail("reverse map misses a buffered message");
    }
  }
  if (total != reverse)
    return fail("reverse map has stale entries");
  if (total != buffered_total_)
    return fail("buffered message count drifted");
  return true;
}

void Engine::dump_buffers(nlohmann::json &out) const {
  out = nlohmann::json::array();
  for (Slot slot = 0; slot < table_.slots(); ++slot) {
    const auto &r = table_[slot];
    if (!r.active)
      continue;
    nlohmann::json j{{"sub", r.sub.id}, {"theta", r.theta}};
    if (config_.policy.kind == PolicyKind::kmax) {
      auto &arr = j["entries"] = nlohmann::json::array();
      for (const auto &e : states_[slot].top)
        arr.push_back({{"seq", e.seq}, {"id", e.id}, {"score", e.score}});
      j["complete"] = states_[slot].complete;
    } else {
      nlohmann::json b;
      states_[slot].buffer.dump(b);
      j["entries"] = b["entries"];
    }
    out.push_back(std::move(j));
  }
}

void Engine::stats(nlohmann::json &out) const {
  nlohmann::json mi, be;
  msg_index_.stats(mi);
  if (backend_)
    backend_->stats(be);
  out = {{"policy", config_.policy.name()},
         {"window", window_.size()},
         {"subscriptions", table_.active_count()},
         {"message_index", mi},
         {"backend", be},
         {"arrivals", metrics_.arrivals},
         {"expirations", metrics_.expirations},
         {"deliveries", metrics_.deliveries},
         {"reevaluations", metrics_.reevaluations},
         {"evictions", metrics_.evictions},
         {"reevaluation_work", metrics_.reevaluation_work},
         {"amp_ns", metrics_.amp()},
         {"emp_ns", metrics_.emp()},
         {"mean_buffer", metrics_.mean_buffer()}};
}

} // namespace skpub
