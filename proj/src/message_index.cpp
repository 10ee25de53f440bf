#include "skpub/message_index.hpp"

#include <algorithm>
#include <queue>

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

bool posting_before(const MessageIndex::Posting &a, const MessageIndex::Posting &b) {
  return a.weight > b.weight || (a.weight == b.weight && a.msg->seq < b.msg->seq);
}

struct HeapOrder {
  // Min-heap on result order: the worst kept entry sits on top.
  bool operator()(const ScoredMessage &a, const ScoredMessage &b) const {
    return ranks_before(RankKey{a.score, a.seq}, RankKey{b.score, b.seq});
  }
};

} // namespace

MessageIndex::MessageIndex(Space space, std::size_t leaf_capacity, unsigned max_depth)
    : space_(space), capacity_(leaf_capacity), max_depth_(max_depth) {
  if (capacity_ == 0)
    throw Error("message index leaf capacity must be positive");
  root_ = std::make_unique<Node>();
  root_->rect = space_.bounds;
  collect_leaves();
}

MessageIndex::Node *MessageIndex::leaf_for(Point p) {
  if (!space_.bounds.contains(p))
    throw Error("message location outside the space bounds");
  Node *n = root_.get();
  while (!n->is_leaf())
    n = n->kids[quadrant(n->rect, p)].get();
  return n;
}

void MessageIndex::add_to_leaf(Node &leaf, const Message &m) {
  leaf.residents.push_back(&m);
  for (const auto &tw : m.terms) {
    auto &list = leaf.lists[tw.term];
    Posting p{tw.weight, &m};
    list.insert(std::upper_bound(list.begin(), list.end(), p, posting_before), p);
  }
}

void MessageIndex::insert(const Message &m) {
  Node *leaf = leaf_for(m.loc);
  add_to_leaf(*leaf, m);
  ++size_;
  if (leaf->residents.size() > capacity_ && leaf->depth < max_depth_) {
    split(*leaf);
    collect_leaves();
  }
}

void MessageIndex::split(Node &leaf) {
  for (int q = 0; q < 4; ++q) {
    leaf.kids[q] = std::make_unique<Node>();
    leaf.kids[q]->rect = child_rect(leaf.rect, q);
    leaf.kids[q]->depth = leaf.depth + 1;
  }
  for (const Message *m : leaf.residents)
    add_to_leaf(*leaf.kids[quadrant(leaf.rect, m->loc)], *m);
  leaf.residents.clear();
  leaf.lists.clear();
  for (auto &kid : leaf.kids)
    if (kid->residents.size() > capacity_ && kid->depth < max_depth_)
      split(*kid);
}

void MessageIndex::expire(const Message &m) {
  Node *leaf = leaf_for(m.loc);
  auto it = std::find(leaf->residents.begin(), leaf->residents.end(), &m);
  if (it == leaf->residents.end())
    throw Error("expiring a message that is not indexed: " + std::to_string(m.id));
  *it = leaf->residents.back();
  leaf->residents.pop_back();
  for (const auto &tw : m.terms) {
    auto lit = leaf->lists.find(tw.term);
    if (lit == leaf->lists.end())
      throw Error("message index posting list missing on expiry");
    auto &list = lit->second;
    auto pit = std::find_if(list.begin(), list.end(), [&](const Posting &p) { return p.msg == &m; });
    if (pit == list.end())
      throw Error("message index posting missing on expiry");
    list.erase(pit);
    if (list.empty())
      leaf->lists.erase(lit);
  }
  --size_;
}

void MessageIndex::collect_leaves() {
  leaves_.clear();
  std::vector<Node *> stack{root_.get()};
  while (!stack.empty()) {
    Node *n = stack.back();
    stack.pop_back();
    if (n->is_leaf()) {
      leaves_.push_back(n);
      continue;
    }
    for (int q = 3; q >= 0; --q)
      stack.push_back(n->kids[q].get());
  }
}

double MessageIndex::leaf_bound(const Subscription &s, const Node &leaf, double *textual) const {
  double t = 0.0;
  for (const auto &tw : s.terms)
    t += tw.weight * leaf.max_weight(tw.term);
  t = std::min(t, 1.0);
  if (textual)
    *textual = t;
  if (t <= 0.0)
    return -std::numeric_limits<double>::infinity();
  double spatial = 1.0 - leaf.rect.mindist(s.loc) / space_.max_dist();
  return combine_score(s.alpha, std::clamp(spatial, 0.0, 1.0), t);
}

std::vector<ScoredMessage> MessageIndex::threshold_query(const Subscription &s, double theta,
                                                         QueryWork *work) const {
  QueryWork w;
  std::vector<ScoredMessage> out;
  std::vector<const Message *> cands;
  std::vector<double> maxw(s.terms.size());

  for (const Node *leaf : leaves_) {
    if (leaf->residents.empty())
      continue;
    ++w.leaves_visited;
    if (leaf_bound(s, *leaf) < theta - kPruneSlack)
      continue;
    double spatial = std::clamp(1.0 - leaf->rect.mindist(s.loc) / space_.max_dist(), 0.0, 1.0);
    double total = 0.0;
    for (std::size_t i = 0; i < s.terms.size(); ++i) {
      maxw[i] = leaf->max_weight(s.terms[i].term);
      total += s.terms[i].weight * maxw[i];
    }
    cands.clear();
    for (std::size_t i = 0; i < s.terms.size(); ++i) {
      auto it = leaf->lists.find(s.terms[i].term);
      if (it == leaf->lists.end())
        continue;
      double rest = total - s.terms[i].weight * maxw[i];
      for (const Posting &p : it->second) {
        double bound = combine_score(s.alpha, spatial, std::min(1.0, s.terms[i].weight * p.weight + rest));
        if (bound < theta - kPruneSlack)
          break;
        ++w.postings_scanned;
        cands.push_back(p.msg);
      }
    }
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    for (const Message *m : cands) {
      ++w.candidates_scored;
      ScoreParts sp = score_parts(s, *m, space_);
      if (sp.qualifies() && sp.score >= theta)
        out.push_back({m->seq, m->id, sp.score});
    }
  }
  std::sort(out.begin(), out.end(), [](const ScoredMessage &a, const ScoredMessage &b) { return a.seq < b.seq; });
  if (work)
    *work += w;
  return out;
}

std::vector<ScoredMessage> MessageIndex::topk_query(const Subscription &s, std::size_t k,
                                                    QueryWork *work) const {
  QueryWork w;
  std::vector<ScoredMessage> heap;
  if (k == 0)
    return heap;

  std::vector<std::pair<double, const Node *>> order;
  for (const Node *leaf : leaves_) {
    if (leaf->residents.empty())
      continue;
    double ub = leaf_bound(s, *leaf);
    if (ub > -std::numeric_limits<double>::infinity())
      order.emplace_back(ub, leaf);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto &a, const auto &b) { return a.first > b.first; });

  auto kth = [&]() {
    return heap.size() < k ? -std::numeric_limits<double>::infinity() : heap.front().score;
  };

  std::vector<const Message *> cands;
  std::vector<double> maxw(s.terms.size());
  for (const auto &[ub, leaf] : order) {
    if (ub < kth() - kPruneSlack)
      break;
    ++w.leaves_visited;
    double spatial = std::clamp(1.0 - leaf->rect.mindist(s.loc) / space_.max_dist(), 0.0, 1.0);
    double total = 0.0;
    for (std::size_t i = 0; i < s.terms.size(); ++i) {
      maxw[i] = leaf->max_weight(s.terms[i].term);
      total += s.terms[i].weight * maxw[i];
    }
    cands.clear();
    const double floor = kth();
    for (std::size_t i = 0; i < s.terms.size(); ++i) {
      auto it = leaf->lists.find(s.terms[i].term);
      if (it == leaf->lists.end())
        continue;
      double rest = total - s.terms[i].weight * maxw[i];
      for (const Posting &p : it->second) {
        double bound = combine_score(s.alpha, spatial, std::min(1.0, s.terms[i].weight * p.weight + rest));
        if (bound < floor - kPruneSlack)
          break;
        ++w.postings_scanned;
        cands.push_back(p.msg);
      }
    }
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    for (const Message *m : cands) {
      ++w.candidates_scored;
      ScoreParts sp = score_parts(s, *m, space_);
      if (!sp.qualifies())
        continue;
      ScoredMessage sm{m->seq, m->id, sp.score};
      if (heap.size() < k) {
        heap.push_back(sm);
        std::push_heap(heap.begin(), heap.end(), HeapOrder{});
      } else if (ranks_before(RankKey{sm.score, sm.seq}, RankKey{heap.front().score, heap.front().seq})) {
        std::pop_heap(heap.begin(), heap.end(), HeapOrder{});
        heap.back() = sm;
        std::push_heap(heap.begin(), heap.end(), HeapOrder{});
      }
    }
  }
  std::sort(heap.begin(), heap.end(), [](const ScoredMessage &a, const ScoredMessage &b) {
    return ranks_before(RankKey{a.score, a.seq}, RankKey{b.score, b.seq});
  });
  if (work)
    *work += w;
  return heap;
}

std::vector<const Message *> MessageIndex::contents() const {
  std::vector<const Message *> out;
  out.reserve(size_);
  for (const Node *leaf : leaves_)
    out.insert(out.end(), leaf->residents.begin(), leaf->residents.end());
  return out;
}

bool MessageIndex::check_integrity(std::string *why) const {
  auto fail = [&](std::string msg) {
    if (why)
      *why = std::move(msg);
    return false;
  };
  std::size_t total = 0;
  for (const Node *leaf : leaves_) {
    total += leaf->residents.size();
    std::unordered_map<TermId, std::size_t> expected;
    for (const Message *m : leaf->residents) {
      if (!leaf->rect.contains(m->loc))
        return fail("message " + std::to_string(m->id) + " outside its leaf");
      for (const auto &tw : m->terms)
        ++expected[tw.term];
    }
    if (expected.size() != leaf->lists.size())
      return fail("leaf keyword count mismatch");
    for (const auto &[term, list] : leaf->lists) {
      auto e = expected.find(term);
      if (e == expected.end() || e->second != list.size())
        return fail("posting list length mismatch for term " + std::to_string(term));
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto pos = list[i].msg->terms.find(term);
        if (!pos || list[i].msg->terms[*pos].weight != list[i].weight)
          return fail("posting weight mismatch for term " + std::to_string(term));
        if (i > 0 && list[i].weight > list[i - 1].weight)
          return fail("posting list not sorted by weight");
      }
    }
  }
  if (total != size_)
    return fail("resident count differs from index size");
  return true;
}

void MessageIndex::stats(nlohmann::json &out) const {
  std::size_t postings = 0, max_leaf = 0;
  unsigned depth = 0;
  for (const Node *leaf : leaves_) {
    for (const auto &[t, list] : leaf->lists)
      postings += list.size();
    max_leaf = std::max(max_leaf, leaf->residents.size());
    depth = std::max(depth, leaf->depth);
  }
  out = {{"messages", size_},   {"leaves", leaves_.size()}, {"postings", postings},
         {"max_leaf", max_leaf}, {"max_depth", depth},      {"leaf_capacity", capacity_}};
}

} // namespace skpub
