#include "skpub/cost_model.hpp"

#include <algorithm>
#include <cmath>

namespace skpub {

ScoreDistribution::ScoreDistribution(std::vector<double> scores, std::size_t population)
    : sorted_(std::move(scores)), population_(population) {
  if (population_ == 0)
    throw Error("score distribution needs a nonempty population");
  if (sorted_.size() > population_)
    throw Error("score sample larger than its population");
  std::sort(sorted_.begin(), sorted_.end());
}

std::size_t ScoreDistribution::count_at_least(double theta) const {
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), theta);
  return static_cast<std::size_t>(sorted_.end() - it);
}

double ScoreDistribution::prob(double theta) const {
  return static_cast<double>(count_at_least(theta)) / static_cast<double>(population_);
}

double estimate_prob(std::span<const double> scores, double theta) {
  if (scores.empty())
    throw Error("cannot estimate prob from an empty sample");
  auto n = std::count_if(scores.begin(), scores.end(), [theta](double s) { return s >= theta; });
  return static_cast<double>(n) / static_cast<double>(scores.size());
}

double expected_buffer_size(std::uint32_t k, double window, double prob) {
  double n = window * prob;
  if (n < k)
    return k;
  return k * std::log(n / k);
}

double maintenance_cost(std::uint32_t k, double window, double prob, UpdateMix mix) {
  return (mix.arrival + mix.expiry) * prob * expected_buffer_size(k, window, prob);
}

double expected_trigger_updates(std::uint32_t k, double window, double prob) {
  double start = prob * window;
  if (!(prob > 0.0) || start < k)
    return 0.0;
  double d = start - k + 1;
  return (2.0 * d * start + d * (d + 1.0)) / prob;
}

double hitting_time(double p_up, double p_down, double start, std::uint32_t k, double barrier) {
  if (!(p_down > 0.0))
    return std::numeric_limits<double>::infinity();
  const auto lo = static_cast<std::int64_t>(k) - 1;
  const auto s = static_cast<std::int64_t>(std::floor(start));
  const auto top = std::max(static_cast<std::int64_t>(std::floor(barrier)), s);
  if (s <= lo)
    return 0.0;
  // diff(x) = E(x) - E(x-1); at the barrier an up-move is lost, so
  // diff(top) = 1/p_down and diff(x) = (1 + p_up diff(x+1)) / p_down below it.
  double diff = 1.0 / p_down;
  double total = 0.0;
  for (std::int64_t x = top; x > lo; --x) {
    if (x != top)
      diff = (1.0 + p_up * diff) / p_down;
    if (x <= s)
      total += diff;
  }
  return total;
}

double expected_trigger_updates(std::uint32_t k, double window, double prob, UpdateMix mix) {
  if (mix.arrival == mix.expiry && mix.arrival == 0.5)
    return expected_trigger_updates(k, window, prob);
  double start = prob * window;
  if (!(prob > 0.0) || start < k)
    return 0.0;
  return hitting_time(mix.arrival * prob, mix.expiry * prob, start, k, 2.0 * start);
}

CostEstimate estimate_cost(double theta, const ScoreDistribution &dist, std::uint32_t k,
                           double window, double ctopk, UpdateMix mix) {
  CostEstimate c;
  c.theta = theta;
  c.prob = dist.prob(theta);
  c.buffer_size = expected_buffer_size(k, window, c.prob);
  c.maintenance = maintenance_cost(k, window, c.prob, mix);
  c.trigger_updates = expected_trigger_updates(k, window, c.prob, mix);
  c.reevaluation = reevaluation_cost(ctopk, c.trigger_updates);
  c.total = c.maintenance + c.reevaluation;
  return c;
}

CostEstimate optimize_theta(const ScoreDistribution &dist, std::uint32_t k, double window,
                            double kscore_last, double ctopk, ThetaSearch search, UpdateMix mix) {
  const double ceiling = std::max(0.0, kscore_last);
  const double floor = std::clamp(search.floor, 0.0, ceiling);

  std::vector<double> grid{ceiling};
  auto sorted = dist.sorted();
  if (!sorted.empty() && search.grid_points > 0) {
    const std::size_t g = search.grid_points;
    for (std::size_t j = 0; j < g; ++j) {
      std::size_t idx = g == 1 ? sorted.size() - 1 : j * (sorted.size() - 1) / (g - 1);
      double v = sorted[idx];
      if (v >= floor && v <= ceiling)
        grid.push_back(v);
    }
  }
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  CostEstimate best = estimate_cost(grid.front(), dist, k, window, ctopk, mix);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    CostEstimate c = estimate_cost(grid[i], dist, k, window, ctopk, mix);
    if (c.total < best.total)
      best = c;
  }
  return best;
}

} // namespace skpub
