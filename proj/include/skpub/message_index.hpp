#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skpub/core.hpp"
#include "skpub/skyband.hpp"

namespace skpub {

/// Work counters of one message-index query; the unit of the re-evaluation
/// cost used by the cost model.
struct QueryWork {
  std::uint64_t leaves_visited = 0;
  std::uint64_t postings_scanned = 0;
  std::uint64_t candidates_scored = 0;

  std::uint64_t total() const { return leaves_visited + postings_scanned + candidates_scored; }
  QueryWork &operator+=(const QueryWork &o) {
    leaves_visited += o.leaves_visited;
    postings_scanned += o.postings_scanned;
    candidates_scored += o.candidates_scored;
    return *this;
  }
};

/// Quadtree over the window's messages with a weight-sorted inverted list per
/// keyword in every leaf. Answers exact threshold and top-k queries for a
/// subscription.
///
/// The index stores pointers to messages owned elsewhere (the window); a
/// message must stay alive until it is expired from the index.
class MessageIndex {
public:
  struct Posting {
    double weight = 0.0;
    const Message *msg = nullptr;
  };

  struct Node {
    Rect rect;
    unsigned depth = 0;
    std::array<std::unique_ptr<Node>, 4> kids;
    std::vector<const Message *> residents;
    /// Sorted by weight descending; front() is the per-leaf max weight.
    std::unordered_map<TermId, std::vector<Posting>> lists;

    bool is_leaf() const { return !kids[0]; }
    double max_weight(TermId t) const {
      auto it = lists.find(t);
      return it == lists.end() || it->second.empty() ? 0.0 : it->second.front().weight;
    }
  };

  explicit MessageIndex(Space space, std::size_t leaf_capacity = 2048, unsigned max_depth = 16);

  void insert(const Message &m);
  /// Throws if `m` is not indexed.
  void expire(const Message &m);

  std::size_t size() const { return size_; }
  std::size_t leaf_count() const { return leaves_.size(); }
  const Space &space() const { return space_; }

  /// Every indexed message with a common keyword and score >= theta,
  /// ordered by arrival.
  std::vector<ScoredMessage> threshold_query(const Subscription &s, double theta,
                                             QueryWork *work = nullptr) const;

  /// The `k` best matching messages in result order (score desc, fresher first).
  std::vector<ScoredMessage> topk_query(const Subscription &s, std::size_t k,
                                        QueryWork *work = nullptr) const;

  /// Recomputes every cached statistic from the residents and compares.
  bool check_integrity(std::string *why = nullptr) const;

  /// All indexed messages (any order).
  std::vector<const Message *> contents() const;

  void stats(nlohmann::json &out) const;

private:
  Node *leaf_for(Point p);
  void add_to_leaf(Node &leaf, const Message &m);
  void split(Node &leaf);
  void collect_leaves();

  /// Upper bound of score(s, .) for anything in `leaf`.
  double leaf_bound(const Subscription &s, const Node &leaf, double *textual = nullptr) const;

  Space space_;
  std::size_t capacity_;
  unsigned max_depth_;
  std::unique_ptr<Node> root_;
  std::vector<Node *> leaves_;
  std::size_t size_ = 0;
};

} // namespace skpub
