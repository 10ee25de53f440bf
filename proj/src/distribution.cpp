#include "skpub/distribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <nlohmann/json.hpp>

namespace skpub {

namespace {

unsigned depth_for(std::size_t parts, const char *what) {
  if (parts == 0 || !std::has_single_bit(parts))
    throw Error(std::string(what) + " must be a power of two");
  return static_cast<unsigned>(std::countr_zero(parts));
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<TermId> term_ids(const WeightedTermList &terms, std::size_t n) {
  std::vector<TermId> out;
  n = std::min(n, terms.size());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(terms[i].term);
  return out;
}

double coord(Point p, int axis) { return axis == 0 ? p.x : p.y; }

} // namespace

// ---------------------------------------------------------------------------
// Mechanism names
// ---------------------------------------------------------------------------

MechanismSpec MechanismSpec::parse(const std::string &text) {
  MechanismSpec m;
  if (text == "hashing")
    m.kind = Mechanism::hashing;
  else if (text == "location")
    m.kind = Mechanism::location;
  else if (text == "keyword")
    m.kind = Mechanism::keyword;
  else if (text == "prefix")
    m.kind = Mechanism::prefix;
  else {
    auto colon = text.find(':');
    std::string head = text.substr(0, colon);
    if (colon == std::string::npos || (head != "spatial-first" && head != "keyword-first"))
      throw Error("unknown mechanism '" + text + "'");
    m.kind = head == "spatial-first" ? Mechanism::spatial_first : Mechanism::keyword_first;
    std::string levels = text.substr(colon + 1);
    auto x = levels.find('x');
    if (x == std::string::npos)
      throw Error("hybrid mechanism needs level sizes AxB: '" + text + "'");
    try {
      m.l1 = static_cast<std::size_t>(std::stoul(levels.substr(0, x)));
      m.l2 = static_cast<std::size_t>(std::stoul(levels.substr(x + 1)));
    } catch (const std::logic_error &) {
      throw Error("malformed level sizes in '" + text + "'");
    }
    depth_for(m.l1, "first level size");
    depth_for(m.l2, "second level size");
  }
  return m;
}

std::string MechanismSpec::name() const {
  switch (kind) {
  case Mechanism::hashing:
    return "hashing";
  case Mechanism::location:
    return "location";
  case Mechanism::keyword:
    return "keyword";
  case Mechanism::prefix:
    return "prefix";
  case Mechanism::spatial_first:
    return "spatial-first:" + std::to_string(l1) + "x" + std::to_string(l2);
  case Mechanism::keyword_first:
    return "keyword-first:" + std::to_string(l1) + "x" + std::to_string(l2);
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Spatial partition
// ---------------------------------------------------------------------------

SpatialPartition SpatialPartition::build(const Rect &bounds, std::span<const Point> subs,
                                         std::span<const Point> messages, unsigned depth) {
  SpatialPartition p;
  double sample = static_cast<double>(std::max<std::size_t>(messages.size(), 1));
  p.build_node(bounds, {subs.begin(), subs.end()}, {messages.begin(), messages.end()}, sample, 0, depth);
  return p;
}

std::size_t SpatialPartition::build_node(const Rect &r, std::vector<Point> subs, std::vector<Point> msgs,
                                         double sample, unsigned depth, unsigned max_depth) {
  std::size_t id = nodes_.size();
  nodes_.push_back(Node{});
  if (depth == max_depth) {
    nodes_[id].leaf = leaves_.size();
    leaves_.push_back(r);
    return id;
  }
  const int axis = static_cast<int>(depth % 2);
  auto by_axis = [axis](Point a, Point b) { return coord(a, axis) < coord(b, axis); };
  std::sort(subs.begin(), subs.end(), by_axis);
  std::sort(msgs.begin(), msgs.end(), by_axis);

  double split = axis == 0 ? (r.min_x + r.max_x) / 2 : (r.min_y + r.max_y) / 2;
  if (!subs.empty()) {
    const double n = static_cast<double>(subs.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < subs.size(); ++i) {
      double v = coord(subs[i], axis);
      if (i > 0 && v == coord(subs[i - 1], axis))
        continue;
      auto below = std::lower_bound(msgs.begin(), msgs.end(), v,
                                    [axis](Point p, double x) { return coord(p, axis) < x; }) -
                   msgs.begin();
      double p_left = static_cast<double>(below) / sample;
      double p_right = static_cast<double>(msgs.size() - static_cast<std::size_t>(below)) / sample;
      double left = static_cast<double>(i);
      double diff = std::abs(left * p_left - (n - left) * p_right);
      if (diff < best) {
        best = diff;
        split = v;
      }
    }
  }

  Rect lo = r, hi = r;
  if (axis == 0)
    lo.max_x = hi.min_x = split;
  else
    lo.max_y = hi.min_y = split;
  auto part = [&](const std::vector<Point> &pts, bool upper) {
    std::vector<Point> out;
    for (Point p : pts)
      if ((coord(p, axis) >= split) == upper)
        out.push_back(p);
    return out;
  };
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  std::size_t a = build_node(lo, part(subs, false), part(msgs, false), sample, depth + 1, max_depth);
  std::size_t b = build_node(hi, part(subs, true), part(msgs, true), sample, depth + 1, max_depth);
  nodes_[id].lo = a;
  nodes_[id].hi = b;
  return id;
}

std::size_t SpatialPartition::leaf_of(Point p) const {
  if (nodes_.empty())
    return 0;
  std::size_t n = 0;
  while (nodes_[n].axis >= 0)
    n = coord(p, nodes_[n].axis) < nodes_[n].split ? nodes_[n].lo : nodes_[n].hi;
  return nodes_[n].leaf;
}

// ---------------------------------------------------------------------------
// Keyword partition
// ---------------------------------------------------------------------------

namespace {

struct RangeCounts {
  /// first[c] / last[c]: lists whose smallest / largest term inside the
  /// range is lo + c.
  std::vector<std::size_t> first, last;
  std::size_t total = 0;
};

RangeCounts count_range(std::span<const std::vector<TermId>> lists, TermId lo, TermId hi) {
  RangeCounts rc;
  rc.first.assign(hi - lo, 0);
  rc.last.assign(hi - lo, 0);
  for (const auto &l : lists) {
    auto a = std::lower_bound(l.begin(), l.end(), lo);
    if (a == l.end() || *a >= hi)
      continue;
    auto b = std::lower_bound(a, l.end(), hi);
    ++rc.first[*a - lo];
    ++rc.last[*(b - 1) - lo];
    ++rc.total;
  }
  return rc;
}

void split_keywords(std::vector<TermId> &starts, std::span<const std::vector<TermId>> subs,
                    std::span<const std::vector<TermId>> msgs, double sample, TermId lo, TermId hi,
                    unsigned depth, unsigned max_depth) {
  if (depth == max_depth) {
    starts.push_back(lo);
    return;
  }
  if (hi - lo < 2) {
    // Too narrow to split: the whole range goes left, the rest stay empty.
    split_keywords(starts, subs, msgs, sample, lo, hi, depth + 1, max_depth);
    split_keywords(starts, subs, msgs, sample, hi, hi, depth + 1, max_depth);
    return;
  }
  RangeCounts s = count_range(subs, lo, hi), m = count_range(msgs, lo, hi);
  const TermId mid = lo + (hi - lo) / 2;
  TermId best_c = mid;
  if (s.total > 0 && m.total > 0) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t s_left = 0, m_left = 0;
    std::size_t s_right = s.total, m_right = m.total;
    for (TermId c = lo + 1; c < hi; ++c) {
      // Left side [lo, c): lists whose first term is below c.
      s_left += s.first[c - 1 - lo];
      m_left += m.first[c - 1 - lo];
      // Right side [c, hi): lists whose last term is at least c.
      s_right -= s.last[c - 1 - lo];
      m_right -= m.last[c - 1 - lo];
      double diff = std::abs(static_cast<double>(s_left) * static_cast<double>(m_left) / sample -
                             static_cast<double>(s_right) * static_cast<double>(m_right) / sample);
      auto dist = [mid](TermId x) { return x > mid ? x - mid : mid - x; };
      if (diff < best || (diff == best && dist(c) < dist(best_c))) {
        best = diff;
        best_c = c;
      }
    }
  }
  split_keywords(starts, subs, msgs, sample, lo, best_c, depth + 1, max_depth);
  split_keywords(starts, subs, msgs, sample, best_c, hi, depth + 1, max_depth);
}

} // namespace

KeywordPartition KeywordPartition::build(std::size_t vocabulary, std::span<const std::vector<TermId>> subs,
                                         std::span<const std::vector<TermId>> messages, unsigned depth) {
  KeywordPartition p;
  p.vocabulary_ = vocabulary;
  double sample = static_cast<double>(std::max<std::size_t>(messages.size(), 1));
  split_keywords(p.starts_, subs, messages, sample, 0, static_cast<TermId>(vocabulary), 0, depth);
  return p;
}

KeywordPartition KeywordPartition::equal_width(std::size_t vocabulary, std::size_t parts) {
  if (parts == 0)
    throw Error("a keyword partition needs at least one range");
  KeywordPartition p;
  p.vocabulary_ = vocabulary;
  for (std::size_t i = 0; i < parts; ++i)
    p.starts_.push_back(static_cast<TermId>(i * vocabulary / parts));
  return p;
}

std::size_t KeywordPartition::range_of(TermId term) const {
  auto it = std::upper_bound(starts_.begin(), starts_.end(), term);
  if (it == starts_.begin())
    throw Error("keyword partition does not start at rank 0");
  return static_cast<std::size_t>(it - starts_.begin()) - 1;
}

double KeywordPartition::cost_variance(std::span<const std::vector<TermId>> subs,
                                       std::span<const std::vector<TermId>> messages) const {
  const std::size_t n = starts_.size();
  if (n == 0)
    return 0.0;
  auto touches = [&](std::span<const std::vector<TermId>> lists) {
    std::vector<double> count(n, 0.0);
    std::vector<std::size_t> seen;
    for (const auto &l : lists) {
      seen.clear();
      for (TermId t : l)
        seen.push_back(range_of(t));
      for (std::size_t r : sorted_unique(seen))
        count[r] += 1.0;
    }
    return count;
  };
  auto ns = touches(subs), nm = touches(messages);
  double sample = static_cast<double>(std::max<std::size_t>(messages.size(), 1));
  std::vector<double> cost(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cost[i] = ns[i] * nm[i] / sample;
    mean += cost[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double c : cost)
    var += (c - mean) * (c - mean);
  return var / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Loose prefix
// ---------------------------------------------------------------------------

std::size_t loose_prefix_length(const WeightedTermList &terms, double theta, double alpha) {
  if (terms.empty())
    return 0;
  if (alpha >= 1.0)
    return terms.size();
  const double lt = loose_lambda_t(theta, alpha);
  for (std::size_t c = 1; c < terms.size(); ++c)
    if (terms.wtsum(c) < lt - kPruneSlack)
      return c;
  return terms.size();
}

// ---------------------------------------------------------------------------
// Sharded backend
// ---------------------------------------------------------------------------

struct ShardedBackend::Shard {
  Shard(const SubscriptionTable &table, const Space &space, const IndexConfig &config, std::vector<double> bounds)
      : index(table, space, config, std::move(bounds)), dissem(index) {}
  SubscriptionIndex index;
  Disseminator dissem;
  DisseminationStats stats;
};

ShardedBackend::ShardedBackend(const SubscriptionTable &table, const Space &space, const IndexConfig &config,
                               std::vector<double> alpha_bounds, PruningOptions pruning, MechanismSpec mechanism,
                               std::size_t shards, std::span<const Message> message_sample, std::size_t vocabulary)
    : table_(table), space_(space), mechanism_(mechanism), pruning_(pruning) {
  if (mechanism_.hybrid()) {
    if (shards != mechanism_.l1 * mechanism_.l2)
      throw Error("shard count must equal the product of the hybrid level sizes");
  } else if (shards == 0) {
    throw Error("at least one shard is needed");
  }
  for (std::size_t i = 0; i < shards; ++i)
    shards_.push_back(std::make_unique<Shard>(table, space, config, alpha_bounds));
  metrics_.shard_work.assign(shards, 0);

  std::vector<Slot> live;
  for (Slot s = 0; s < table_.slots(); ++s)
    if (table_[s].active)
      live.push_back(s);
  std::vector<Point> sub_points, msg_points;
  for (Slot s : live)
    sub_points.push_back(table_[s].sub.loc);
  for (const auto &m : message_sample)
    msg_points.push_back(m.loc);
  std::vector<std::vector<TermId>> sub_terms, msg_terms;
  for (Slot s : live)
    sub_terms.push_back(routing_terms(s));
  for (const auto &m : message_sample)
    msg_terms.push_back(term_ids(m.terms, m.terms.size()));

  switch (mechanism_.kind) {
  case Mechanism::hashing:
    break;
  case Mechanism::location:
    spatial_ = SpatialPartition::build(space_.bounds, sub_points, msg_points, depth_for(shards, "shard count"));
    break;
  case Mechanism::keyword:
  case Mechanism::prefix:
    keywords_ = KeywordPartition::build(vocabulary, sub_terms, msg_terms, depth_for(shards, "shard count"));
    break;
  case Mechanism::spatial_first: {
    spatial_ = SpatialPartition::build(space_.bounds, sub_points, msg_points, depth_for(mechanism_.l1, "l1"));
    std::vector<std::vector<std::vector<TermId>>> per_region(mechanism_.l1);
    for (std::size_t i = 0; i < live.size(); ++i)
      per_region[spatial_.leaf_of(sub_points[i])].push_back(sub_terms[i]);
    for (std::size_t r = 0; r < mechanism_.l1; ++r)
      sub_keywords_.push_back(
          KeywordPartition::build(vocabulary, per_region[r], msg_terms, depth_for(mechanism_.l2, "l2")));
    break;
  }
  case Mechanism::keyword_first: {
    keywords_ = KeywordPartition::build(vocabulary, sub_terms, msg_terms, depth_for(mechanism_.l1, "l1"));
    std::vector<std::vector<Point>> subs_in(mechanism_.l1), msgs_in(mechanism_.l1);
    auto ranges = [&](const std::vector<TermId> &terms) {
      std::vector<std::size_t> r;
      for (TermId t : terms)
        r.push_back(keywords_.range_of(t));
      return sorted_unique(std::move(r));
    };
    for (std::size_t i = 0; i < live.size(); ++i)
      for (std::size_t r : ranges(sub_terms[i]))
        subs_in[r].push_back(sub_points[i]);
    for (std::size_t i = 0; i < message_sample.size(); ++i)
      for (std::size_t r : ranges(msg_terms[i]))
        msgs_in[r].push_back(msg_points[i]);
    for (std::size_t r = 0; r < mechanism_.l1; ++r)
      sub_spatial_.push_back(
          SpatialPartition::build(space_.bounds, subs_in[r], msgs_in[r], depth_for(mechanism_.l2, "l2")));
    break;
  }
  }
}

ShardedBackend::~ShardedBackend() = default;

std::vector<TermId> ShardedBackend::routing_terms(Slot slot) const {
  const auto &r = table_[slot];
  std::size_t n = r.sub.terms.size();
  if (mechanism_.kind == Mechanism::prefix)
    n = loose_prefix_length(r.sub.terms, r.theta, r.sub.alpha);
  return term_ids(r.sub.terms, n);
}

std::vector<std::size_t> ShardedBackend::route_subscription(Slot slot) const {
  const auto &r = table_[slot];
  const std::size_t n = shards_.size();
  std::vector<std::size_t> out;
  switch (mechanism_.kind) {
  case Mechanism::hashing: {
    auto id = static_cast<long long>(r.sub.id), nn = static_cast<long long>(n);
    out.push_back(static_cast<std::size_t>(((id % nn) + nn) % nn));
    break;
  }
  case Mechanism::location:
    out.push_back(spatial_.leaf_of(r.sub.loc));
    break;
  case Mechanism::keyword:
  case Mechanism::prefix:
    for (TermId t : routing_terms(slot))
      out.push_back(keywords_.range_of(t));
    break;
  case Mechanism::spatial_first: {
    std::size_t region = spatial_.leaf_of(r.sub.loc);
    for (TermId t : routing_terms(slot))
      out.push_back(region * mechanism_.l2 + sub_keywords_[region].range_of(t));
    break;
  }
  case Mechanism::keyword_first:
    for (TermId t : routing_terms(slot)) {
      std::size_t range = keywords_.range_of(t);
      out.push_back(range * mechanism_.l2 + sub_spatial_[range].leaf_of(r.sub.loc));
    }
    break;
  }
  return sorted_unique(std::move(out));
}

std::vector<std::size_t> ShardedBackend::route_message(const Message &m) const {
  const std::size_t n = shards_.size();
  std::vector<std::size_t> out;
  switch (mechanism_.kind) {
  case Mechanism::hashing:
  case Mechanism::location:
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(i);
    break;
  case Mechanism::keyword:
  case Mechanism::prefix:
    for (const auto &tw : m.terms)
      out.push_back(keywords_.range_of(tw.term));
    break;
  case Mechanism::spatial_first:
    for (std::size_t region = 0; region < mechanism_.l1; ++region)
      for (const auto &tw : m.terms)
        out.push_back(region * mechanism_.l2 + sub_keywords_[region].range_of(tw.term));
    break;
  case Mechanism::keyword_first:
    for (const auto &tw : m.terms) {
      std::size_t range = keywords_.range_of(tw.term);
      for (std::size_t j = 0; j < mechanism_.l2; ++j)
        out.push_back(range * mechanism_.l2 + j);
    }
    break;
  }
  return sorted_unique(std::move(out));
}

void ShardedBackend::insert(Slot slot) {
  if (replicas_.size() <= slot)
    replicas_.resize(slot + 1);
  if (!replicas_[slot].empty())
    throw Error("subscription already distributed");
  replicas_[slot] = route_subscription(slot);
  for (std::size_t sh : replicas_[slot])
    shards_[sh]->index.insert(slot);
}

void ShardedBackend::remove(Slot slot) {
  if (slot >= replicas_.size())
    return;
  for (std::size_t sh : replicas_[slot])
    shards_[sh]->index.remove(slot);
  replicas_[slot].clear();
}

void ShardedBackend::threshold_changed(Slot slot) {
  auto &have = replicas_.at(slot);
  for (std::size_t sh : have)
    shards_[sh]->index.update_threshold(slot);
  if (mechanism_.kind != Mechanism::prefix)
    return;
  // Prefixes only ever grow their shard set; a shorter prefix leaves the
  // extra replicas in place.
  bool grew = false;
  for (std::size_t sh : route_subscription(slot)) {
    if (std::binary_search(have.begin(), have.end(), sh))
      continue;
    shards_[sh]->index.insert(slot);
    have.push_back(sh);
    grew = true;
  }
  if (grew) {
    std::sort(have.begin(), have.end());
    ++metrics_.reallocations;
  }
}

void ShardedBackend::disseminate(const Message &m, std::vector<Delivery> &out) {
  auto targets = route_message(m);
  ++metrics_.messages;
  metrics_.routed += targets.size();
  metrics_.max_fanout = std::max(metrics_.max_fanout, targets.size());
  switch (mechanism_.kind) {
  case Mechanism::hashing:
  case Mechanism::location:
    metrics_.fanout_violations += targets.size() != shards_.size();
    break;
  case Mechanism::keyword:
  case Mechanism::prefix:
    metrics_.fanout_violations += targets.size() > std::min(m.terms.size(), shards_.size());
    break;
  default:
    break;
  }

  std::vector<Delivery> merged;
  for (std::size_t sh : targets) {
    Shard &shard = *shards_[sh];
    std::uint64_t before = shard.stats.verified;
    shard.dissem.run(m, pruning_, merged, &shard.stats);
    metrics_.shard_work[sh] += shard.stats.verified - before;
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Delivery &a, const Delivery &b) { return a.slot < b.slot; });
  merged.erase(std::unique(merged.begin(), merged.end(),
                           [](const Delivery &a, const Delivery &b) { return a.slot == b.slot; }),
               merged.end());
  out.insert(out.end(), merged.begin(), merged.end());
}

double ShardedBackend::replication() const {
  std::size_t subs = 0, copies = 0;
  for (Slot s = 0; s < replicas_.size(); ++s) {
    if (replicas_[s].empty())
      continue;
    ++subs;
    copies += replicas_[s].size();
  }
  return subs ? static_cast<double>(copies) / static_cast<double>(subs) : 0.0;
}

bool ShardedBackend::check_invariants(std::string *why) const {
  auto fail = [&](std::string msg) {
    if (why)
      *why = std::move(msg);
    return false;
  };
  std::vector<std::size_t> per_shard(shards_.size(), 0);
  for (Slot s = 0; s < replicas_.size(); ++s) {
    const auto &have = replicas_[s];
    if (have.empty())
      continue;
    if (!table_[s].active)
      return fail("inactive subscription still distributed");
    for (std::size_t sh : route_subscription(s))
      if (!std::binary_search(have.begin(), have.end(), sh))
        return fail("subscription missing from a shard its keywords require");
    for (std::size_t sh : have) {
      if (!shards_[sh]->index.contains(s))
        return fail("replica list names a shard without the subscription");
      ++per_shard[sh];
    }
  }
  for (std::size_t sh = 0; sh < shards_.size(); ++sh) {
    if (shards_[sh]->index.size() != per_shard[sh])
      return fail("shard holds subscriptions outside the replica lists");
    if (!shards_[sh]->index.check_invariants(why))
      return false;
  }
  return true;
}

void ShardedBackend::stats(nlohmann::json &out) const {
  std::uint64_t total = 0, max_work = 0;
  for (auto w : metrics_.shard_work) {
    total += w;
    max_work = std::max(max_work, w);
  }
  std::vector<std::size_t> sizes;
  for (const auto &sh : shards_)
    sizes.push_back(sh->index.size());
  out = {{"mechanism", mechanism_.name()},
         {"shards", shards_.size()},
         {"comm_cost", metrics_.comm_cost()},
         {"replication", replication()},
         {"max_shard_work", max_work},
         {"total_work", total},
         {"shard_work", metrics_.shard_work},
         {"shard_subscriptions", sizes},
         {"max_fanout", metrics_.max_fanout},
         {"fanout_violations", metrics_.fanout_violations},
         {"reallocations", metrics_.reallocations}};
}

BackendFactory sharded_backend_factory(MechanismSpec mechanism, std::size_t shards,
                                       std::vector<Message> message_sample, std::size_t vocabulary) {
  auto sample = std::make_shared<std::vector<Message>>(std::move(message_sample));
  return [=](const SubscriptionTable &table, const Space &space, const IndexConfig &config,
             const std::vector<double> &bounds, const PruningOptions &pruning) {
    return std::make_unique<ShardedBackend>(table, space, config, bounds, pruning, mechanism, shards, *sample,
                                            vocabulary);
  };
}

} // namespace skpub
