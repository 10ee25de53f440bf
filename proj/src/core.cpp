#include "skpub/core.hpp"

#include <algorithm>
#include <numeric>

namespace skpub {

Vocabulary Vocabulary::from_counts(std::unordered_map<std::string, std::uint64_t> df,
                                   std::uint64_t corpus_size) {
  Vocabulary v;
  v.corpus_size_ = corpus_size;
  std::vector<std::pair<std::string, std::uint64_t>> items(std::make_move_iterator(df.begin()),
                                                           std::make_move_iterator(df.end()));
  std::sort(items.begin(), items.end(), [](const auto &a, const auto &b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  v.terms_.reserve(items.size());
  v.freq_.reserve(items.size());
  for (auto &[term, count] : items) {
    if (count == 0)
      throw Error("vocabulary term with zero frequency: " + term);
    v.index_.emplace(term, static_cast<TermId>(v.terms_.size()));
    v.terms_.push_back(std::move(term));
    v.freq_.push_back(count);
  }
  return v;
}

std::optional<TermId> Vocabulary::rank(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end())
    return std::nullopt;
  return it->second;
}

WeightedTermList WeightedTermList::from_weights(std::vector<TermWeight> entries, bool normalize) {
  std::sort(entries.begin(), entries.end(),
            [](const TermWeight &a, const TermWeight &b) { return a.term < b.term; });
  WeightedTermList out;
  for (const auto &e : entries) {
    if (!out.entries_.empty() && out.entries_.back().term == e.term)
      out.entries_.back().weight += e.weight;
    else
      out.entries_.push_back(e);
  }
  std::erase_if(out.entries_, [](const TermWeight &e) { return !(e.weight > 0.0); });
  if (normalize && !out.entries_.empty()) {
    double norm = 0.0;
    for (const auto &e : out.entries_)
      norm += e.weight * e.weight;
    norm = std::sqrt(norm);
    for (auto &e : out.entries_)
      e.weight /= norm;
  }
  out.rebuild_suffixes();
  return out;
}

void WeightedTermList::rebuild_suffixes() {
  const std::size_t n = entries_.size();
  wtsum_.assign(n, 0.0);
  maxwt_.assign(n, 0.0);
  double sum = 0.0;
  double mx = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    sum += entries_[i].weight;
    mx = std::max(mx, entries_[i].weight);
    wtsum_[i] = sum;
    maxwt_[i] = mx;
  }
}

std::optional<std::size_t> WeightedTermList::find(TermId term) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), term,
                             [](const TermWeight &e, TermId t) { return e.term < t; });
  if (it == entries_.end() || it->term != term)
    return std::nullopt;
  return static_cast<std::size_t>(it - entries_.begin());
}

WeightedTermList build_weights(std::span<const std::pair<std::string, std::uint32_t>> raw_terms,
                               const Vocabulary &vocab) {
  if (raw_terms.empty())
    throw Error("empty term list");
  std::vector<TermWeight> weights;
  weights.reserve(raw_terms.size());
  for (const auto &[term, count] : raw_terms) {
    auto id = vocab.rank(term);
    if (!id)
      throw Error("term not in vocabulary: " + term);
    double w = static_cast<double>(count) * vocab.idf(*id);
    weights.push_back({*id, w});
  }
  auto list = WeightedTermList::from_weights(std::move(weights));
  if (list.empty())
    throw Error("all term weights are zero");
  return list;
}

double tsim_range(const WeightedTermList &a, std::size_t a_from, std::size_t a_to,
                  const WeightedTermList &b, std::size_t b_from, std::size_t b_to) {
  double sum = 0.0;
  std::size_t i = a_from;
  std::size_t j = b_from;
  while (i < a_to && j < b_to) {
    TermId ta = a[i].term;
    TermId tb = b[j].term;
    if (ta < tb) {
      ++i;
    } else if (tb < ta) {
      ++j;
    } else {
      sum += a[i].weight * b[j].weight;
      ++i;
      ++j;
    }
  }
  return sum;
}

double tsim(const WeightedTermList &a, const WeightedTermList &b) {
  return std::min(1.0, tsim_range(a, 0, a.size(), b, 0, b.size()));
}

} // namespace skpub
