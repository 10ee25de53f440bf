#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "skpub/core.hpp"

namespace skpub {

/// Empirical score distribution of random messages against one subscription.
///
/// `population` is the number of messages the sample stands for. For a
/// uniform window sample it equals the sample size; for an exact head of the
/// window's score list it is the window size, and prob() is exact for every
/// threshold at or above the smallest sampled score.
class ScoreDistribution {
public:
  ScoreDistribution(std::vector<double> scores, std::size_t population);

  /// Uniform sample: every sampled message counts, non-matching ones are
  /// passed as negative scores (below any threshold).
  static ScoreDistribution from_sample(std::vector<double> scores) {
    std::size_t n = scores.size();
    return ScoreDistribution(std::move(scores), n);
  }

  /// Fraction of the population scoring at least theta.
  double prob(double theta) const;
  /// Number of sampled scores at least theta.
  std::size_t count_at_least(double theta) const;

  std::size_t population() const { return population_; }
  std::size_t sample_size() const { return sorted_.size(); }
  /// Scores ascending.
  std::span<const double> sorted() const { return sorted_; }

private:
  std::vector<double> sorted_;
  std::size_t population_;
};

/// Fraction of `scores` at least theta. Throws on an empty sample.
double estimate_prob(std::span<const double> scores, double theta);

/// Per-update probabilities of a window arrival and a window expiry.
/// Count windows use one half each.
struct UpdateMix {
  double arrival = 0.5;
  double expiry = 0.5;
};

/// Expected partial-skyband size k ln(|W| prob / k); clamped to k when the
/// window is not expected to hold k qualifying messages.
double expected_buffer_size(std::uint32_t k, double window, double prob);

/// Skyband maintenance cost per window update:
/// (arrival + expiry) * prob * expected_buffer_size.
double maintenance_cost(std::uint32_t k, double window, double prob, UpdateMix mix = {});

/// Closed-form expected number of updates until the qualifying set drops
/// below k, for the symmetric reflected walk started at prob*|W| with the
/// barrier at twice the start. Zero when prob*|W| < k.
double expected_trigger_updates(std::uint32_t k, double window, double prob);

/// Same quantity for an arbitrary walk: moves up with p_up, down with p_down,
/// stays otherwise; start `start`, absorbing at k-1, reflecting barrier at
/// `barrier` (an up-move there is lost). Solved exactly on the integer
/// lattice, so `start` and `barrier` are rounded down.
double hitting_time(double p_up, double p_down, double start, std::uint32_t k, double barrier);

/// Walk-based trigger estimate for a general update mix; reduces to the
/// closed form when arrival == expiry.
double expected_trigger_updates(std::uint32_t k, double window, double prob, UpdateMix mix);

/// Ctopk / Z'; +inf when Z' is zero.
inline double reevaluation_cost(double ctopk, double z) {
  if (!(z > 0.0))
    return std::numeric_limits<double>::infinity();
  return ctopk / z;
}

struct CostEstimate {
  double theta = 0.0;
  double prob = 0.0;
  double buffer_size = 0.0;
  double trigger_updates = 0.0;
  double maintenance = 0.0;
  double reevaluation = 0.0;
  double total = 0.0;
};

CostEstimate estimate_cost(double theta, const ScoreDistribution &dist, std::uint32_t k,
                           double window, double ctopk, UpdateMix mix = {});

struct ThetaSearch {
  /// Number of quantile points taken from the score sample.
  std::size_t grid_points = 32;
  /// Candidates below this are not evaluated (the sample is not exact there).
  double floor = 0.0;
};

/// Threshold minimizing maintenance + re-evaluation cost over the quantile
/// grid of `dist`, restricted to [floor, kscore_last]. kscore_last itself is
/// always a candidate; ties favour the higher threshold.
CostEstimate optimize_theta(const ScoreDistribution &dist, std::uint32_t k, double window,
                            double kscore_last, double ctopk, ThetaSearch search = {},
                            UpdateMix mix = {});

/// Running mean of measured threshold-query costs with a configured prior
/// used until the first measurement.
class CostTracker {
public:
  CostTracker() = default;
  explicit CostTracker(double prior) : prior_(prior) {}
  double mean() const { return count_ == 0 ? prior_ : sum_ / static_cast<double>(count_); }
  void record(double cost) {
    sum_ += cost;
    ++count_;
  }
  std::uint64_t count() const { return count_; }

private:
  double prior_ = 1000.0;
  double sum_ = 0.0;
  std::uint64_t count_ = 0;
};

} // namespace skpub
