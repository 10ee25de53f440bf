#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "skpub/core.hpp"
#include "skpub/workload.hpp"

namespace skpub::test {

/// Unnormalized list from (rank, weight) pairs, as in hand-worked examples.
inline WeightedTermList raw_list(std::vector<TermWeight> entries) {
  return WeightedTermList::from_weights(std::move(entries), false);
}

/// Rounds down to two decimals, the way hand-worked figures are quoted.
inline double trunc2(double x) { return std::floor(x * 100.0 + 1e-9) / 100.0; }

/// Cosine of two sparse vectors given as term -> weight maps, computed
/// directly from the definition.
inline double naive_cosine(const std::map<TermId, double> &a, const std::map<TermId, double> &b) {
  double dot = 0, na = 0, nb = 0;
  for (auto [t, w] : a) {
    na += w * w;
    auto it = b.find(t);
    if (it != b.end())
      dot += w * it->second;
  }
  for (auto [t, w] : b)
    nb += w * w;
  return na > 0 && nb > 0 ? dot / std::sqrt(na * nb) : 0.0;
}

/// Small random instance for fuzzing: a unit space, a vocabulary of
/// `vocab` ranks, messages and subscriptions with 1..max_terms keywords.
struct Fuzz {
  std::mt19937_64 rng;
  Space space{Rect{0, 0, 1, 1}};
  std::size_t vocab = 30;
  std::size_t max_terms = 4;
  std::uint64_t next_id = 0;

  explicit Fuzz(std::uint64_t seed) : rng(seed) {}

  Point point() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // A few exact duplicates and clustered points keep ties and cell
    // boundaries in play.
    if (std::bernoulli_distribution(0.1)(rng))
      return {0.5, 0.5};
    if (std::bernoulli_distribution(0.3)(rng))
      return {0.2 + 0.05 * u(rng), 0.7 + 0.05 * u(rng)};
    return {u(rng), u(rng)};
  }

  WeightedTermList terms() {
    std::uniform_int_distribution<std::size_t> n(1, max_terms);
    std::uniform_int_distribution<TermId> t(0, static_cast<TermId>(vocab - 1));
    std::uniform_int_distribution<int> w(1, 4);
    std::vector<TermWeight> e;
    for (std::size_t i = n(rng); i > 0; --i)
      e.push_back({t(rng), static_cast<double>(w(rng))});
    return WeightedTermList::from_weights(std::move(e));
  }

  Message message() {
    Message m;
    m.id = static_cast<MessageId>(next_id++);
    m.loc = point();
    m.terms = terms();
    return m;
  }

  Subscription subscription(SubId id, std::uint32_t k) {
    Subscription s;
    s.id = id;
    s.loc = point();
    s.terms = terms();
    s.k = k;
    std::uniform_real_distribution<double> a(0.05, 0.95);
    s.alpha = a(rng);
    return s;
  }
};

/// Generated desk-scale workload.
inline Workload desk_workload(std::size_t messages, std::size_t subs, std::uint32_t k, std::uint64_t seed,
                              std::size_t vocabulary = 5000) {
  GeneratorConfig g;
  g.messages = messages;
  g.vocabulary = vocabulary;
  return synthetic_workload(g, subs, k, seed);
}

} // namespace skpub::test
