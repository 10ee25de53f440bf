#include "skpub/dissemination.hpp"

#include <algorithm>

namespace skpub {

DisseminationStats &DisseminationStats::operator+=(const DisseminationStats &o) {
  messages += o.messages;
  cells_visited += o.cells_visited;
  cells_pruned += o.cells_pruned;
  groups_visited += o.groups_visited;
  groups_pruned += o.groups_pruned;
  members_skipped += o.members_skipped;
  postings_touched += o.postings_touched;
  prefix_skipped += o.prefix_skipped;
  bound_rejected += o.bound_rejected;
  candidates += o.candidates;
  verified += o.verified;
  deliveries += o.deliveries;
  return *this;
}

std::size_t early_stop_position(const PostingGroup &g, double msg_wtsum, double outer) {
  // The group test on a suffix only gets easier to pass further down: the
  // suffix maxima shrink and kscore* grows. Binary search the first hit.
  std::size_t lo = 0, hi = g.members.size();
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    bool prunable = g.suffix_maxwt[mid] * msg_wtsum <
                    g.members[mid].kscore_star - g.suffix_alpha[mid] * outer - kPruneSlack;
    if (prunable)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

void Disseminator::run(const Message &m, const PruningOptions &opt, std::vector<Delivery> &out,
                       DisseminationStats *stats) {
  DisseminationStats st;
  st.messages = 1;
  const SubscriptionTable &table = index_.table();
  const Space &space = index_.space();
  if (cand_.size() < table.slots())
    cand_.resize(table.slots());
  ++stamp_;
  touched_.clear();

  order_.clear();
  for (const SubscriptionCell *leaf : index_.leaves())
    if (!leaf->residents.empty())
      order_.emplace_back(outer_bound(m.loc, leaf->rect, space), leaf);
  std::stable_sort(order_.begin(), order_.end(),
                   [](const auto &a, const auto &b) { return a.first > b.first; });

  auto enter = [&](Slot slot) -> Candidate & {
    Candidate &c = cand_[slot];
    c = Candidate{};
    c.stamp = stamp_;
    touched_.push_back(slot);
    return c;
  };

  for (const auto &[outer, leaf] : order_) {
    if (opt.cell && cell_prunable(index_.min_lambda_s(*leaf), outer)) {
      ++st.cells_pruned;
      continue;
    }
    ++st.cells_visited;
    const bool inside = leaf->rect.contains(m.loc);
    const double outer_dist = leaf->rect.mindist(m.loc);

    for (Slot slot : leaf->spatial_only) {
      const auto &r = table[slot];
      if (opt.cell && lambda_s(r.theta, r.sub.alpha) > outer + kPruneSlack)
        continue;
      enter(slot).spatial_only = true;
      ++st.candidates;
    }

    for (std::size_t i = 0; i < m.terms.size(); ++i) {
      auto lit = leaf->postings.find(m.terms[i].term);
      if (lit == leaf->postings.end())
        continue;
      const double wt_m = m.terms[i].weight;
      const double wtsum_m = m.terms.wtsum(i);
      const double maxwt_m = m.terms.maxwt(i);

      for (const PostingGroup &g : lit->second.groups) {
        if (opt.group && group_prunable(g, wtsum_m, outer)) {
          ++st.groups_pruned;
          continue;
        }
        ++st.groups_visited;
        std::size_t end = opt.early_stop ? early_stop_position(g, wtsum_m, outer) : g.members.size();
        st.members_skipped += g.members.size() - end;

        for (std::size_t j = 0; j < end; ++j) {
          const PostingMember &pm = g.members[j];
          ++st.postings_touched;
          Candidate &c = cand_[pm.slot];
          const bool known = c.stamp == stamp_;
          if (known && c.rejected)
            continue;
          double ub = combined_bound(index_.inner_dist(pm.slot), outer_dist, inside, space);
          double lt = lambda_t(pm.kscore_star, pm.alpha_star, std::min(ub, outer));
          if (opt.prefix && prefix_skip(maxwt_m, pm.wtsum, lt)) {
            ++st.prefix_skipped;
            if (!known)
              enter(pm.slot).rejected = true;
            continue;
          }
          const WeightedTermList &sw = table[pm.slot].sub.terms;
          if (!known) {
            Candidate &fresh = enter(pm.slot);
            fresh.partial = pm.weight * wt_m;
            ++st.candidates;
          } else {
            // Keywords skipped since the last encounter contribute exactly
            // their dot product; add it so the partial stays exact.
            c.partial += tsim_range(sw, c.s_pos + 1, pm.pos, m.terms, c.m_pos + 1, i);
            c.partial += pm.weight * wt_m;
          }
          Candidate &cur = cand_[pm.slot];
          cur.s_pos = pm.pos;
          cur.m_pos = static_cast<std::uint32_t>(i);
          if (opt.tsim_bound && cur.partial + tsim_upper_bound(sw, pm.pos + 1, m.terms, i + 1) <
                                    lt - kPruneSlack) {
            cur.rejected = true;
            ++st.bound_rejected;
          }
        }
      }
    }
  }

  std::sort(touched_.begin(), touched_.end());
  for (Slot slot : touched_) {
    const Candidate &c = cand_[slot];
    if (c.rejected)
      continue;
    ++st.verified;
    const auto &r = table[slot];
    ScoreParts sp = score_parts(r.sub, m, space);
    if (sp.qualifies() && sp.score >= r.theta) {
      out.push_back({slot, sp.score});
      ++st.deliveries;
    }
  }
  if (stats)
    *stats += st;
}

} // namespace skpub
