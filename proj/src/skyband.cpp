#include "skpub/skyband.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace skpub {

SkybandBuffer SkybandBuffer::build(std::uint32_t k, double theta,
                                   std::span<const ScoredMessage> arrivals) {
  SkybandBuffer buf(k, theta);
  for (const auto &m : arrivals)
    buf.insert(m.seq, m.id, m.score);
  return buf;
}

std::vector<SkybandEntry> SkybandBuffer::insert(std::uint64_t seq, MessageId id, double score) {
  if (score < theta_)
    throw Error("skyband insert below threshold");
  if (has_last_ && seq <= last_seq_)
    throw Error("skyband insert must be fresher than every buffered entry");
  has_last_ = true;
  last_seq_ = seq;

  // First entry with score <= new score; everything from there on is older
  // and not better, hence dominated by the newcomer.
  auto pos = std::lower_bound(entries_.begin(), entries_.end(), score,
                              [](const SkybandEntry &e, double s) { return e.score > s; });
  std::size_t at = static_cast<std::size_t>(pos - entries_.begin());
  entries_.insert(pos, SkybandEntry{seq, id, score, 0});

  std::vector<SkybandEntry> evicted;
  std::size_t out = at + 1;
  for (std::size_t i = at + 1; i < entries_.size(); ++i) {
    SkybandEntry e = entries_[i];
    if (++e.dominance >= k_) {
      evicted.push_back(e);
      continue;
    }
    entries_[out++] = e;
  }
  entries_.resize(out);
  return evicted;
}

bool SkybandBuffer::expire(std::uint64_t seq) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [seq](const SkybandEntry &e) { return e.seq == seq; });
  if (it == entries_.end())
    return false;
  entries_.erase(it);
  return true;
}

std::span<const SkybandEntry> SkybandBuffer::extract_topk() const {
  if (entries_.size() < k_)
    throw ReevaluationRequired();
  return std::span<const SkybandEntry>(entries_).first(k_);
}

void SkybandBuffer::dump(nlohmann::json &out) const {
  out = nlohmann::json::object();
  out["k"] = k_;
  out["theta"] = theta_;
  auto &arr = out["entries"] = nlohmann::json::array();
  for (const auto &e : entries_)
    arr.push_back({{"seq", e.seq}, {"id", e.id}, {"score", e.score}, {"dominance", e.dominance}});
}

} // namespace skpub
