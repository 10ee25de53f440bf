#include "skpub/oracle.hpp"

#include <algorithm>

namespace skpub {

BruteForceOracle::BruteForceOracle(Space space, SlidingWindow window, std::vector<Subscription> subs)
    : space_(space), window_(std::move(window)), subs_(std::move(subs)), matches_(subs_.size()),
      top_(subs_.size()), stale_(subs_.size(), 0), stamp_(subs_.size(), ~std::uint64_t{0}) {
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    if (!slots_.emplace(subs_[i].id, i).second)
      throw Error("duplicate subscription id " + std::to_string(subs_[i].id));
    for (const auto &tw : subs_[i].terms)
      by_term_[tw.term].push_back(i);
  }
}

void BruteForceOracle::touched(std::size_t slot, const ScoredMessage &e) {
  const auto &top = top_[slot];
  if (top.size() < subs_[slot].k || !Before{}(top.back(), e))
    stale_[slot] = 1;
}

void BruteForceOracle::process(Message m) {
  m.seq = next_seq_++;
  if (window_.mode() == WindowMode::count)
    m.t = static_cast<double>(m.seq);
  for (std::size_t n = window_.expiring_before(m.t); n > 0; --n) {
    Message old = window_.pop_front();
    auto it = held_.find(old.seq);
    if (it == held_.end())
      continue;
    for (auto [slot, score] : it->second) {
      ScoredMessage e{old.seq, old.id, score};
      touched(slot, e);
      matches_[slot].erase(e);
    }
    held_.erase(it);
  }
  const Message &stored = window_.push(std::move(m));
  std::vector<std::pair<std::size_t, double>> hits;
  for (const auto &tw : stored.terms) {
    auto it = by_term_.find(tw.term);
    if (it == by_term_.end())
      continue;
    for (std::size_t i : it->second) {
      if (stamp_[i] == stored.seq)
        continue;
      stamp_[i] = stored.seq;
      ScoreParts p = score_parts(subs_[i], stored, space_);
      if (!p.qualifies())
        continue;
      ScoredMessage e{stored.seq, stored.id, p.score};
      touched(i, e);
      matches_[i].insert(e);
      hits.emplace_back(i, p.score);
    }
  }
  if (!hits.empty())
    held_.emplace(stored.seq, std::move(hits));
}

std::size_t BruteForceOracle::slot_of(SubId id) const {
  auto it = slots_.find(id);
  if (it == slots_.end())
    throw Error("unknown subscription " + std::to_string(id));
  return it->second;
}

const std::vector<ScoredMessage> &BruteForceOracle::topk(SubId id) const {
  std::size_t slot = slot_of(id);
  auto &top = top_[slot];
  if (stale_[slot]) {
    const auto &all = matches_[slot];
    top.clear();
    for (auto it = all.begin(); it != all.end() && top.size() < subs_[slot].k; ++it)
      top.push_back(*it);
    stale_[slot] = 0;
  }
  return top;
}

std::vector<ScoredMessage> BruteForceOracle::recompute_topk(SubId id) const {
  const Subscription &s = subs_[slot_of(id)];
  std::vector<ScoredMessage> all;
  for (const auto &m : window_) {
    ScoreParts p = score_parts(s, m, space_);
    if (p.qualifies())
      all.push_back({m.seq, m.id, p.score});
  }
  auto n = std::min<std::size_t>(s.k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), Before{});
  all.resize(n);
  return all;
}

} // namespace skpub
