#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace skpub {

/// Vocabulary rank of a term. Lists are kept in increasing rank order,
/// i.e. increasing global frequency.
using TermId = std::uint32_t;
using MessageId = std::int64_t;
using SubId = std::int64_t;

/// Pruning comparisons only fire when the inequality holds by more than this
/// much, so rounding can never turn a qualifying pair into a pruned one.
inline constexpr double kPruneSlack = 1e-9;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point &, const Point &) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Closed axis-aligned rectangle.
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool contains(Point p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  double diagonal() const { return std::hypot(max_x - min_x, max_y - min_y); }
  Point center() const { return {(min_x + max_x) / 2, (min_y + max_y) / 2}; }

  /// Distance from p to the nearest point of the rectangle; 0 inside.
  double mindist(Point p) const {
    double dx = std::max({min_x - p.x, 0.0, p.x - max_x});
    double dy = std::max({min_y - p.y, 0.0, p.y - max_y});
    return std::hypot(dx, dy);
  }

  /// Distance from an interior point to the nearest edge.
  double boundary_dist(Point p) const {
    return std::max(0.0, std::min({p.x - min_x, max_x - p.x, p.y - min_y, max_y - p.y}));
  }

  friend bool operator==(const Rect &, const Rect &) = default;
};

/// Space bounds of a dataset. MaxDist is the diagonal.
struct Space {
  Rect bounds;

  explicit Space(Rect r = {0, 0, 1, 1}) : bounds(r) {
    if (!(r.max_x > r.min_x) || !(r.max_y > r.min_y))
      throw Error("space bounds must have positive extent");
  }
  double max_dist() const { return bounds.diagonal(); }
};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Frozen term statistics for a corpus snapshot. Ranks follow increasing
/// document frequency, ties broken lexicographically.
class Vocabulary {
public:
  Vocabulary() = default;

  /// Builds from per-document term sets (duplicates within a document count once).
  template <class Docs> static Vocabulary from_documents(const Docs &docs) {
    std::unordered_map<std::string, std::uint64_t> df;
    std::uint64_t n = 0;
    for (const auto &doc : docs) {
      ++n;
      std::vector<std::string_view> seen;
      for (const auto &[term, count] : doc) {
        (void)count;
        std::string_view t(term);
        bool dup = false;
        for (auto s : seen)
          dup = dup || s == t;
        if (!dup) {
          seen.push_back(t);
          ++df[std::string(t)];
        }
      }
    }
    return from_counts(std::move(df), n);
  }

  static Vocabulary from_counts(std::unordered_map<std::string, std::uint64_t> df,
                                std::uint64_t corpus_size);

  std::size_t size() const { return terms_.size(); }
  std::uint64_t corpus_size() const { return corpus_size_; }

  std::optional<TermId> rank(std::string_view term) const;
  const std::string &term(TermId id) const { return terms_.at(id); }
  std::uint64_t frequency(TermId id) const { return freq_.at(id); }

  /// ln(|corpus| / df).
  double idf(TermId id) const {
    return std::log(static_cast<double>(corpus_size_) / static_cast<double>(freq_.at(id)));
  }

private:
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, TermId> index_;
  std::uint64_t corpus_size_ = 0;
};

// ---------------------------------------------------------------------------
// Weighted term lists
// ---------------------------------------------------------------------------

struct TermWeight {
  TermId term = 0;
  double weight = 0.0;
  friend bool operator==(const TermWeight &, const TermWeight &) = default;
};

/// Rank-ordered keyword vector with materialized suffix sums (wtsum) and
/// suffix maxima (maxwt). Position i == size() is the empty suffix.
class WeightedTermList {
public:
  WeightedTermList() = default;

  /// Sorts by rank, merges duplicate terms, drops non-positive weights and,
  /// if requested, scales to unit L2 norm.
  static WeightedTermList from_weights(std::vector<TermWeight> entries, bool normalize = true);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const TermWeight &operator[](std::size_t i) const { return entries_[i]; }
  std::span<const TermWeight> entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  double wtsum(std::size_t i) const { return i < wtsum_.size() ? wtsum_[i] : 0.0; }
  double maxwt(std::size_t i) const { return i < maxwt_.size() ? maxwt_[i] : 0.0; }

  /// Position of `term`, if present.
  std::optional<std::size_t> find(TermId term) const;
  bool contains(TermId term) const { return find(term).has_value(); }

private:
  void rebuild_suffixes();

  std::vector<TermWeight> entries_;
  std::vector<double> wtsum_;
  std::vector<double> maxwt_;
};

/// tf-idf weights (tf = raw count), zero-idf terms dropped, unit-normalized.
/// Throws on an unknown term or an all-zero vector.
WeightedTermList build_weights(std::span<const std::pair<std::string, std::uint32_t>> raw_terms,
                               const Vocabulary &vocab);

// ---------------------------------------------------------------------------
// Messages and subscriptions
// ---------------------------------------------------------------------------

struct Message {
  MessageId id = 0;
  /// Arrival sequence number, unique and increasing; freshness is judged on it.
  std::uint64_t seq = 0;
  /// Arrival time: equals seq in count mode, seconds in time mode.
  double t = 0.0;
  Point loc;
  WeightedTermList terms;
};

struct Subscription {
  SubId id = 0;
  Point loc;
  WeightedTermList terms;
  std::uint32_t k = 20;
  double alpha = 0.5;
};

/// alpha / (1 - alpha); +inf for a pure spatial subscription.
inline double alpha_star(double alpha) {
  return alpha >= 1.0 ? std::numeric_limits<double>::infinity() : alpha / (1.0 - alpha);
}

/// theta / (1 - alpha), the threshold scaled into textual units.
inline double kscore_star(double theta, double alpha) {
  return alpha >= 1.0 ? std::numeric_limits<double>::infinity() : theta / (1.0 - alpha);
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

inline double ssim(Point a, Point b, const Space &space) {
  double v = 1.0 - distance(a, b) / space.max_dist();
  return std::clamp(v, 0.0, 1.0);
}

/// Dot product over common terms, sorted merge.
double tsim(const WeightedTermList &a, const WeightedTermList &b);

/// Dot product of a[a_from, a_to) with b[b_from, b_to).
double tsim_range(const WeightedTermList &a, std::size_t a_from, std::size_t a_to,
                  const WeightedTermList &b, std::size_t b_from, std::size_t b_to);

inline double combine_score(double alpha, double spatial, double textual) {
  return alpha * spatial + (1.0 - alpha) * textual;
}

struct ScoreParts {
  double spatial = 0.0;
  double textual = 0.0;
  double score = 0.0;
  /// A message without a common keyword never becomes a result.
  bool qualifies() const { return textual > 0.0; }
};

inline ScoreParts score_parts(const Subscription &s, const Message &m, const Space &space) {
  ScoreParts p;
  p.textual = tsim(s.terms, m.terms);
  p.spatial = ssim(s.loc, m.loc, space);
  p.score = combine_score(s.alpha, p.spatial, p.textual);
  return p;
}

inline double score(const Subscription &s, const Message &m, const Space &space) {
  return score_parts(s, m, space).score;
}

/// Result ordering: higher score first, then fresher.
struct RankKey {
  double score = 0.0;
  std::uint64_t seq = 0;
  friend bool operator==(const RankKey &, const RankKey &) = default;
};

inline bool ranks_before(const RankKey &a, const RankKey &b) {
  return a.score > b.score || (a.score == b.score && a.seq > b.seq);
}

} // namespace skpub
