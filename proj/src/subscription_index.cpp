#include "skpub/subscription_index.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace skpub {

namespace {

int quadrant(const Rect &r, Point p) {
  Point c = r.center();
  return (p.x < c.x ? 0 : 1) + (p.y < c.y ? 0 : 2);
}

Rect child_rect(const Rect &r, int q) {
  Point c = r.center();
  Rect out = r;
  if (q & 1)
    out.min_x = c.x;
  else
    out.max_x = c.x;
  if (q & 2)
    out.min_y = c.y;
  else
    out.max_y = c.y;
  return out;
}

bool member_before(const PostingMember &a, const PostingMember &b) {
  return a.kscore_star < b.kscore_star || (a.kscore_star == b.kscore_star && a.id < b.id);
}

} // namespace

// ---------------------------------------------------------------------------
// SubscriptionTable
// ---------------------------------------------------------------------------

Slot SubscriptionTable::add(Subscription s) {
  if (s.k == 0)
    throw Error("subscription " + std::to_string(s.id) + ": k must be positive");
  if (!(s.alpha >= 0.0 && s.alpha <= 1.0))
    throw Error("subscription " + std::to_string(s.id) + ": alpha outside [0, 1]");
  if (s.terms.empty())
    throw Error("subscription " + std::to_string(s.id) + ": no keywords");
  if (by_id_.count(s.id))
    throw Error("duplicate subscription id " + std::to_string(s.id));
  Slot slot = static_cast<Slot>(records_.size());
  by_id_.emplace(s.id, slot);
  records_.push_back(SubscriptionRecord{std::move(s), 0.0, true});
  ++active_;
  return slot;
}

void SubscriptionTable::deactivate(Slot slot) {
  auto &r = records_.at(slot);
  if (!r.active)
    return;
  r.active = false;
  by_id_.erase(r.sub.id);
  --active_;
}

std::optional<Slot> SubscriptionTable::find(SubId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end())
    return std::nullopt;
  return it->second;
}

void SubscriptionTable::set_theta(Slot slot, double theta) {
  if (!(theta >= 0.0) || !std::isfinite(theta))
    throw Error("threshold must be finite and non-negative");
  records_.at(slot).theta = theta;
}

// ---------------------------------------------------------------------------
// Posting groups
// ---------------------------------------------------------------------------

void PostingGroup::insert(const PostingMember &m) {
  auto it = std::upper_bound(members.begin(), members.end(), m, member_before);
  std::size_t at = static_cast<std::size_t>(it - members.begin());
  members.insert(it, m);
  suffix_maxwt.insert(suffix_maxwt.begin() + static_cast<std::ptrdiff_t>(at), 0.0);
  suffix_alpha.insert(suffix_alpha.begin() + static_cast<std::ptrdiff_t>(at), 0.0);
  refresh_suffix(at);
}

bool PostingGroup::erase(Slot slot) {
  auto it = std::find_if(members.begin(), members.end(),
                         [slot](const PostingMember &m) { return m.slot == slot; });
  if (it == members.end())
    return false;
  std::size_t at = static_cast<std::size_t>(it - members.begin());
  members.erase(it);
  suffix_maxwt.erase(suffix_maxwt.begin() + static_cast<std::ptrdiff_t>(at));
  suffix_alpha.erase(suffix_alpha.begin() + static_cast<std::ptrdiff_t>(at));
  if (at > 0)
    refresh_suffix(at - 1);
  return true;
}

void PostingGroup::refresh_suffix(std::size_t from) {
  const std::size_t n = members.size();
  if (n == 0)
    return;
  from = std::min(from, n - 1);
  for (std::size_t j = from + 1; j-- > 0;) {
    double mw = j + 1 < n ? suffix_maxwt[j + 1] : 0.0;
    double ma = j + 1 < n ? suffix_alpha[j + 1] : 0.0;
    suffix_maxwt[j] = std::max(mw, members[j].maxwt);
    suffix_alpha[j] = std::max(ma, members[j].alpha_star);
  }
}

std::size_t PostingList::size() const {
  std::size_t n = 0;
  for (const auto &g : groups)
    n += g.members.size();
  return n;
}

// ---------------------------------------------------------------------------
// SubscriptionIndex
// ---------------------------------------------------------------------------

SubscriptionIndex::SubscriptionIndex(const SubscriptionTable &table, Space space, IndexConfig config,
                                     std::vector<double> alpha_bounds)
    : table_(table), space_(space), config_(config), bounds_(std::move(alpha_bounds)) {
  if (config_.cell_capacity == 0)
    throw Error("cell capacity must be positive");
  if (!std::is_sorted(bounds_.begin(), bounds_.end()))
    throw Error("alpha bucket bounds must be ascending");
  root_ = std::make_unique<SubscriptionCell>();
  root_->rect = space_.bounds;
  collect_leaves();
}

std::vector<double> SubscriptionIndex::alpha_partition_bounds(std::vector<double> alpha_stars,
                                                              std::size_t groups) {
  std::erase_if(alpha_stars, [](double a) { return !std::isfinite(a); });
  std::vector<double> out;
  if (alpha_stars.empty() || groups <= 1)
    return out;
  std::sort(alpha_stars.begin(), alpha_stars.end());
  const std::size_t n = alpha_stars.size();
  for (std::size_t i = 1; i < groups; ++i) {
    std::size_t idx = std::min(n - 1, (i * n + groups - 1) / groups);
    out.push_back(alpha_stars[idx]);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t SubscriptionIndex::bucket_of(double alpha_star) const {
  return static_cast<std::size_t>(std::upper_bound(bounds_.begin(), bounds_.end(), alpha_star) -
                                  bounds_.begin());
}

double SubscriptionIndex::lambda_s_of(Slot slot) const {
  const auto &r = table_[slot];
  return lambda_s(r.theta, r.sub.alpha);
}

SubscriptionCell *SubscriptionIndex::leaf_for(Point p) {
  if (!space_.bounds.contains(p))
    throw Error("subscription location outside the space bounds");
  SubscriptionCell *c = root_.get();
  while (!c->is_leaf())
    c = c->kids[quadrant(c->rect, p)].get();
  return c;
}

PostingMember SubscriptionIndex::member_for(Slot slot, std::size_t pos) const {
  const auto &r = table_[slot];
  PostingMember m;
  m.slot = slot;
  m.id = r.sub.id;
  m.kscore_star = kscore_star(r.theta, r.sub.alpha);
  m.alpha_star = alpha_star(r.sub.alpha);
  m.weight = r.sub.terms[pos].weight;
  m.pos = static_cast<std::uint32_t>(pos);
  m.wtsum = r.sub.terms.wtsum(pos);
  m.maxwt = r.sub.terms.maxwt(pos);
  return m;
}

void SubscriptionIndex::add_postings(SubscriptionCell &leaf, Slot slot) {
  const auto &r = table_[slot];
  if (r.sub.alpha >= 1.0) {
    leaf.spatial_only.push_back(slot);
    return;
  }
  const std::size_t bucket = bucket_of(alpha_star(r.sub.alpha));
  for (std::size_t pos = 0; pos < r.sub.terms.size(); ++pos) {
    auto &groups = leaf.postings[r.sub.terms[pos].term].groups;
    auto git = std::lower_bound(groups.begin(), groups.end(), bucket,
                                [](const PostingGroup &g, std::size_t b) { return g.bucket < b; });
    if (git == groups.end() || git->bucket != bucket) {
      git = groups.insert(git, PostingGroup{});
      git->bucket = bucket;
    }
    git->insert(member_for(slot, pos));
  }
}

void SubscriptionIndex::remove_postings(SubscriptionCell &leaf, Slot slot) {
  const auto &r = table_[slot];
  if (r.sub.alpha >= 1.0) {
    std::erase(leaf.spatial_only, slot);
    return;
  }
  const std::size_t bucket = bucket_of(alpha_star(r.sub.alpha));
  for (const auto &tw : r.sub.terms) {
    auto lit = leaf.postings.find(tw.term);
    if (lit == leaf.postings.end())
      throw Error("subscription posting list missing");
    auto &groups = lit->second.groups;
    auto git = std::find_if(groups.begin(), groups.end(),
                            [bucket](const PostingGroup &g) { return g.bucket == bucket; });
    if (git == groups.end() || !git->erase(slot))
      throw Error("subscription posting missing");
    if (git->members.empty())
      groups.erase(git);
    if (groups.empty())
      leaf.postings.erase(lit);
  }
}

void SubscriptionIndex::place(SubscriptionCell &leaf, Slot slot) {
  leaf.residents.push_back(slot);
  add_postings(leaf, slot);
  if (cell_of_.size() <= slot) {
    cell_of_.resize(slot + 1, nullptr);
    inner_.resize(slot + 1, 0.0);
    lambda_.resize(slot + 1, 0.0);
  }
  cell_of_[slot] = &leaf;
  inner_[slot] = leaf.rect.boundary_dist(table_[slot].sub.loc);
  lambda_[slot] = lambda_s_of(slot);
  if (lambda_[slot] < leaf.min_lambda)
    leaf.min_lambda = lambda_[slot];
}

void SubscriptionIndex::insert(Slot slot) {
  if (contains(slot))
    throw Error("subscription already indexed");
  const auto &r = table_[slot];
  if (!r.active)
    throw Error("cannot index an inactive subscription");
  SubscriptionCell *leaf = leaf_for(r.sub.loc);
  place(*leaf, slot);
  ++size_;
  if (leaf->residents.size() > config_.cell_capacity && leaf->depth < config_.max_depth) {
    split(*leaf);
    collect_leaves();
  }
}

void SubscriptionIndex::split(SubscriptionCell &leaf) {
  for (int q = 0; q < 4; ++q) {
    auto kid = std::make_unique<SubscriptionCell>();
    kid->rect = child_rect(leaf.rect, q);
    kid->depth = leaf.depth + 1;
    kid->parent = &leaf;
    leaf.kids[q] = std::move(kid);
  }
  std::vector<Slot> moving = std::move(leaf.residents);
  leaf.residents.clear();
  leaf.postings.clear();
  leaf.spatial_only.clear();
  leaf.min_lambda = std::numeric_limits<double>::infinity();
  leaf.lambda_dirty = false;
  for (Slot s : moving)
    place(*leaf.kids[quadrant(leaf.rect, table_[s].sub.loc)], s);
  for (auto &kid : leaf.kids)
    if (kid->residents.size() > config_.cell_capacity && kid->depth < config_.max_depth)
      split(*kid);
}

bool SubscriptionIndex::remove(Slot slot) {
  if (!contains(slot))
    return false;
  SubscriptionCell *leaf = cell_of_[slot];
  remove_postings(*leaf, slot);
  std::erase(leaf->residents, slot);
  if (lambda_[slot] <= leaf->min_lambda)
    leaf->lambda_dirty = true;
  cell_of_[slot] = nullptr;
  --size_;
  maybe_merge(leaf->parent);
  return true;
}

void SubscriptionIndex::maybe_merge(SubscriptionCell *parent) {
  bool merged = false;
  const double limit = config_.merge_fraction * static_cast<double>(config_.cell_capacity);
  for (; parent; parent = parent->parent) {
    std::size_t total = 0;
    bool leaves_only = true;
    for (const auto &kid : parent->kids) {
      leaves_only = leaves_only && kid->is_leaf();
      total += kid->residents.size();
    }
    if (!leaves_only || static_cast<double>(total) >= limit)
      break;
    std::vector<Slot> moving;
    for (auto &kid : parent->kids)
      moving.insert(moving.end(), kid->residents.begin(), kid->residents.end());
    for (auto &kid : parent->kids)
      kid.reset();
    parent->min_lambda = std::numeric_limits<double>::infinity();
    parent->lambda_dirty = false;
    for (Slot s : moving)
      place(*parent, s);
    merged = true;
  }
  if (merged)
    collect_leaves();
}

void SubscriptionIndex::collect_leaves() {
  leaves_.clear();
  std::vector<SubscriptionCell *> stack{root_.get()};
  while (!stack.empty()) {
    SubscriptionCell *c = stack.back();
    stack.pop_back();
    if (c->is_leaf()) {
      leaves_.push_back(c);
      continue;
    }
    for (int q = 3; q >= 0; --q)
      stack.push_back(c->kids[q].get());
  }
}

void SubscriptionIndex::update_threshold(Slot slot) {
  if (!contains(slot))
    throw Error("threshold update for a subscription that is not indexed");
  SubscriptionCell &leaf = *cell_of_[slot];
  const double before = lambda_[slot];
  const double after = lambda_s_of(slot);
  lambda_[slot] = after;
  if (after < leaf.min_lambda)
    leaf.min_lambda = after;
  else if (after > before && before <= leaf.min_lambda)
    leaf.lambda_dirty = true;

  const auto &r = table_[slot];
  if (r.sub.alpha >= 1.0)
    return;
  const std::size_t bucket = bucket_of(alpha_star(r.sub.alpha));
  for (std::size_t pos = 0; pos < r.sub.terms.size(); ++pos) {
    auto &groups = leaf.postings.at(r.sub.terms[pos].term).groups;
    auto git = std::find_if(groups.begin(), groups.end(),
                            [bucket](const PostingGroup &g) { return g.bucket == bucket; });
    if (git == groups.end() || !git->erase(slot))
      throw Error("subscription posting missing on threshold update");
    git->insert(member_for(slot, pos));
  }
}

double SubscriptionIndex::min_lambda_s(const SubscriptionCell &cell) const {
  if (cell.lambda_dirty) {
    double m = std::numeric_limits<double>::infinity();
    for (Slot s : cell.residents)
      m = std::min(m, lambda_[s]);
    cell.min_lambda = m;
    cell.lambda_dirty = false;
  }
  return cell.min_lambda;
}

bool SubscriptionIndex::check_invariants(std::string *why) const {
  auto fail = [&](std::string msg) {
    if (why)
      *why = std::move(msg);
    return false;
  };
  std::size_t total = 0;
  for (const SubscriptionCell *leaf : leaves_) {
    total += leaf->residents.size();
    double true_min = std::numeric_limits<double>::infinity();
    std::unordered_map<TermId, std::size_t> expected;
    std::size_t spatial = 0;
    for (Slot s : leaf->residents) {
      const auto &r = table_[s];
      if (!r.active)
        return fail("inactive subscription indexed");
      if (!leaf->rect.contains(r.sub.loc))
        return fail("subscription " + std::to_string(r.sub.id) + " outside its cell");
      if (cell_of_[s] != leaf)
        return fail("cell pointer mismatch for subscription " + std::to_string(r.sub.id));
      if (inner_[s] != leaf->rect.boundary_dist(r.sub.loc))
        return fail("stale inner distance");
      if (lambda_[s] != lambda_s_of(s))
        return fail("stale spatial threshold");
      true_min = std::min(true_min, lambda_[s]);
      if (r.sub.alpha >= 1.0)
        ++spatial;
      else
        for (const auto &tw : r.sub.terms)
          ++expected[tw.term];
    }
    if (!leaf->lambda_dirty && leaf->min_lambda != true_min)
      return fail("stale cell spatial threshold");
    if (spatial != leaf->spatial_only.size())
      return fail("spatial-only list mismatch");
    if (expected.size() != leaf->postings.size())
      return fail("cell keyword count mismatch");
    for (const auto &[term, list] : leaf->postings) {
      if (expected[term] != list.size())
        return fail("posting list length mismatch for term " + std::to_string(term));
      for (std::size_t g = 0; g < list.groups.size(); ++g) {
        const auto &grp = list.groups[g];
        if (grp.members.empty())
          return fail("empty posting group");
        if (g > 0 && list.groups[g - 1].bucket >= grp.bucket)
          return fail("posting groups out of order");
        double mw = 0.0, ma = 0.0;
        for (std::size_t j = grp.members.size(); j-- > 0;) {
          const auto &m = grp.members[j];
          if (cell_of_[m.slot] != leaf)
            return fail("posting member not resident");
          PostingMember fresh = member_for(m.slot, m.pos);
          if (table_[m.slot].sub.terms[m.pos].term != term)
            return fail("posting member keyword mismatch");
          if (fresh.kscore_star != m.kscore_star || fresh.alpha_star != m.alpha_star ||
              fresh.wtsum != m.wtsum || fresh.maxwt != m.maxwt || fresh.weight != m.weight)
            return fail("stale posting member statistics");
          if (bucket_of(m.alpha_star) != grp.bucket)
            return fail("posting member in the wrong alpha bucket");
          if (j + 1 < grp.members.size() && member_before(grp.members[j + 1], m))
            return fail("posting group not sorted");
          mw = std::max(mw, m.maxwt);
          ma = std::max(ma, m.alpha_star);
          if (grp.suffix_maxwt[j] != mw || grp.suffix_alpha[j] != ma)
            return fail("stale posting group suffix statistics");
        }
      }
    }
  }
  if (total != size_)
    return fail("resident count differs from index size");
  return true;
}

void SubscriptionIndex::stats(nlohmann::json &out) const {
  std::size_t postings = 0, groups = 0, lists = 0, max_cell = 0;
  unsigned depth = 0;
  for (const SubscriptionCell *leaf : leaves_) {
    lists += leaf->postings.size();
    for (const auto &[t, list] : leaf->postings) {
      groups += list.groups.size();
      postings += list.size();
    }
    max_cell = std::max(max_cell, leaf->residents.size());
    depth = std::max(depth, leaf->depth);
  }
  out = {{"subscriptions", size_},  {"leaves", leaves_.size()},  {"posting_lists", lists},
         {"posting_groups", groups}, {"postings", postings},      {"max_cell", max_cell},
         {"max_depth", depth},       {"alpha_buckets", bounds_.size() + 1},
         {"cell_capacity", config_.cell_capacity}};
}

} // namespace skpub
