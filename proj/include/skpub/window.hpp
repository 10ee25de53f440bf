#pragma once

#include <cstddef>
#include <deque>

#include "skpub/core.hpp"

namespace skpub {

enum class WindowMode { count, time };

/// FIFO of the live messages. Count mode keeps the most recent `capacity`
/// messages; time mode keeps the messages with t in (now - duration, now].
///
/// Elements are stored in a deque, so references to live messages stay valid
/// until the message itself is popped; the indexes rely on that.
class SlidingWindow {
public:
  static SlidingWindow count_based(std::size_t capacity) {
    if (capacity == 0)
      throw Error("window capacity must be positive");
    return SlidingWindow(WindowMode::count, capacity, 0.0);
  }
  static SlidingWindow time_based(double duration) {
    if (!(duration > 0.0))
      throw Error("window duration must be positive");
    return SlidingWindow(WindowMode::time, 0, duration);
  }

  WindowMode mode() const { return mode_; }
  std::size_t capacity() const { return capacity_; }
  double duration() const { return duration_; }

  /// Number of oldest messages that must leave before a message with
  /// arrival time `t` is admitted.
  std::size_t expiring_before(double t) const {
    if (mode_ == WindowMode::count)
      return items_.size() >= capacity_ ? items_.size() - capacity_ + 1 : 0;
    std::size_t n = 0;
    for (const auto &m : items_) {
      if (m.t > t - duration_)
        break;
      ++n;
    }
    return n;
  }

  const Message &push(Message m) {
    if (!items_.empty() && m.seq <= items_.back().seq)
      throw Error("window arrivals must have increasing sequence numbers");
    if (!items_.empty() && m.t < items_.back().t)
      throw Error("window arrivals must have nondecreasing timestamps");
    items_.push_back(std::move(m));
    return items_.back();
  }

  Message pop_front() {
    Message m = std::move(items_.front());
    items_.pop_front();
    return m;
  }

  const Message &front() const { return items_.front(); }
  const Message &back() const { return items_.back(); }
  const Message &operator[](std::size_t i) const { return items_[i]; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  /// Live message with sequence number `seq`, or nullptr.
  const Message *find(std::uint64_t seq) const {
    if (items_.empty() || seq < items_.front().seq || seq > items_.back().seq)
      return nullptr;
    // Sequence numbers are dense once assigned by the engine.
    std::size_t off = static_cast<std::size_t>(seq - items_.front().seq);
    if (off < items_.size() && items_[off].seq == seq)
      return &items_[off];
    auto it = std::lower_bound(items_.begin(), items_.end(), seq,
                               [](const Message &m, std::uint64_t s) { return m.seq < s; });
    return it != items_.end() && it->seq == seq ? &*it : nullptr;
  }

private:
  SlidingWindow(WindowMode mode, std::size_t capacity, double duration)
      : mode_(mode), capacity_(capacity), duration_(duration) {}

  WindowMode mode_;
  std::size_t capacity_;
  double duration_;
  std::deque<Message> items_;
};

} // namespace skpub
