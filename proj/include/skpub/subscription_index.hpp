#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skpub/core.hpp"

namespace skpub {

/// Dense handle of a registered subscription.
using Slot = std::uint32_t;

struct SubscriptionRecord {
  Subscription sub;
  /// Current pruning threshold.
  double theta = 0.0;
  bool active = false;
};

/// Owns subscriptions and their thresholds. Indexes hold slots into it.
class SubscriptionTable {
public:
  /// Throws on a duplicate active id, k == 0, alpha outside [0, 1] or an
  /// empty keyword set.
  Slot add(Subscription s);
  void deactivate(Slot slot);

  std::optional<Slot> find(SubId id) const;
  const SubscriptionRecord &operator[](Slot slot) const { return records_.at(slot); }
  void set_theta(Slot slot, double theta);

  std::size_t slots() const { return records_.size(); }
  std::size_t active_count() const { return active_; }

private:
  std::vector<SubscriptionRecord> records_;
  std::unordered_map<SubId, Slot> by_id_;
  std::size_t active_ = 0;
};

struct IndexConfig {
  std::size_t cell_capacity = 1000;
  unsigned max_depth = 16;
  /// Siblings merge back when together they hold less than this fraction of
  /// the capacity.
  double merge_fraction = 0.25;
};

/// One subscription inside a posting group, with the statistics the
/// pruning rules read.
struct PostingMember {
  Slot slot = 0;
  SubId id = 0;
  double kscore_star = 0.0;
  double alpha_star = 0.0;
  /// Weight of the list's keyword in the subscription.
  double weight = 0.0;
  /// Position of that keyword in the subscription's list.
  std::uint32_t pos = 0;
  /// Suffix statistics of the subscription starting at `pos`.
  double wtsum = 0.0;
  double maxwt = 0.0;
};

/// Members of one alpha bucket, sorted by kscore_star ascending (id on
/// ties). suffix_maxwt[j] / suffix_alpha[j] are maxima over members j..end.
struct PostingGroup {
  std::size_t bucket = 0;
  std::vector<PostingMember> members;
  std::vector<double> suffix_maxwt;
  std::vector<double> suffix_alpha;

  double min_kscore_star() const { return members.front().kscore_star; }
  double max_alpha_star() const { return suffix_alpha.front(); }
  double max_maxwt() const { return suffix_maxwt.front(); }

  void insert(const PostingMember &m);
  /// Returns false if the slot is not a member.
  bool erase(Slot slot);
  /// Rebuilds suffix arrays from member `from` down to the front.
  void refresh_suffix(std::size_t from);
};

/// Posting list of one keyword in one cell; groups ordered by bucket.
struct PostingList {
  std::vector<PostingGroup> groups;
  std::size_t size() const;
};

struct SubscriptionCell {
  Rect rect;
  unsigned depth = 0;
  SubscriptionCell *parent = nullptr;
  std::array<std::unique_ptr<SubscriptionCell>, 4> kids;

  std::vector<Slot> residents;
  std::unordered_map<TermId, PostingList> postings;
  /// Subscriptions with alpha == 1; they take no part in the textual lists.
  std::vector<Slot> spatial_only;

  /// Cached min_lambda_s; `lambda_dirty` marks it stale after a raise.
  mutable double min_lambda = std::numeric_limits<double>::infinity();
  mutable bool lambda_dirty = false;

  bool is_leaf() const { return !kids[0]; }
};

/// Quadtree over subscription locations; each leaf cell carries an inverted
/// list per keyword, partitioned by alpha* into buckets and sorted by
/// kscore* so that whole groups and group tails can be skipped.
class SubscriptionIndex {
public:
  /// `alpha_bounds` are the bucket boundaries of alpha*; see alpha_partition_bounds.
  SubscriptionIndex(const SubscriptionTable &table, Space space, IndexConfig config = {},
                    std::vector<double> alpha_bounds = {});

  /// Boundaries splitting the given alpha* values into `groups` quantile
  /// buckets. Infinite values (alpha == 1) are ignored.
  static std::vector<double> alpha_partition_bounds(std::vector<double> alpha_stars, std::size_t groups);

  std::size_t bucket_of(double alpha_star) const;
  const std::vector<double> &alpha_bounds() const { return bounds_; }

  void insert(Slot slot);
  bool remove(Slot slot);
  /// Call after the table's theta for `slot` changed.
  void update_threshold(Slot slot);

  bool contains(Slot slot) const { return slot < cell_of_.size() && cell_of_[slot] != nullptr; }
  std::size_t size() const { return size_; }
  const std::vector<SubscriptionCell *> &leaves() const { return leaves_; }
  const SubscriptionCell *cell_of(Slot slot) const { return cell_of_.at(slot); }

  /// Distance from the subscription to the border of its cell.
  double inner_dist(Slot slot) const { return inner_.at(slot); }

  /// Smallest spatial threshold of the cell's residents (+inf if empty).
  /// Refreshed lazily after a threshold increase.
  double min_lambda_s(const SubscriptionCell &cell) const;

  const SubscriptionTable &table() const { return table_; }
  const Space &space() const { return space_; }
  const IndexConfig &config() const { return config_; }

  /// Recomputes every cached quantity and compares.
  bool check_invariants(std::string *why = nullptr) const;
  void stats(nlohmann::json &out) const;

private:
  SubscriptionCell *leaf_for(Point p);
  void place(SubscriptionCell &leaf, Slot slot);
  void add_postings(SubscriptionCell &leaf, Slot slot);
  void remove_postings(SubscriptionCell &leaf, Slot slot);
  PostingMember member_for(Slot slot, std::size_t pos) const;
  void split(SubscriptionCell &leaf);
  void maybe_merge(SubscriptionCell *parent);
  void collect_leaves();
  double lambda_s_of(Slot slot) const;

  const SubscriptionTable &table_;
  Space space_;
  IndexConfig config_;
  std::vector<double> bounds_;
  std::unique_ptr<SubscriptionCell> root_;
  std::vector<SubscriptionCell *> leaves_;
  std::vector<SubscriptionCell *> cell_of_;
  std::vector<double> inner_;
  std::vector<double> lambda_;
  std::size_t size_ = 0;
};

/// Spatial threshold theta/alpha - (1-alpha)/alpha; -inf for alpha == 0.
inline double lambda_s(double theta, double alpha) {
  if (!(alpha > 0.0))
    return -std::numeric_limits<double>::infinity();
  return theta / alpha - (1.0 - alpha) / alpha;
}

/// Textual threshold kscore* - alpha* * spatial_bound.
inline double lambda_t(double kscore_star, double alpha_star, double spatial_bound) {
  return kscore_star - alpha_star * spatial_bound;
}

/// 1 - mindist(p, cell) / MaxDist; 1 inside the cell.
inline double outer_bound(Point p, const Rect &cell, const Space &space) {
  return 1.0 - cell.mindist(p) / space.max_dist();
}

/// 1 - boundary_dist(p, cell) / MaxDist for a point inside the cell.
inline double inner_bound(Point p, const Rect &cell, const Space &space) {
  return 1.0 - cell.boundary_dist(p) / space.max_dist();
}

/// Spatial upper bound between a subscription at `inner` distance from its
/// cell border and a message `outer` away from the cell; 1 if the message
/// lies in the cell.
inline double combined_bound(double inner, double outer, bool same_cell, const Space &space) {
  if (same_cell)
    return 1.0;
  return 1.0 - (inner + outer) / space.max_dist();
}

} // namespace skpub
