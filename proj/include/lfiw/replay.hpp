#pragma once

#include "lfiw/common.hpp"

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

namespace lfiw {

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  int policy_epoch = 0;  ///< tag of the policy that generated the transition

  bool operator==(const Transition&) const = default;
};

/// Bounded FIFO of transitions. Used both as the large slow buffer and the
/// small fast buffer; the only difference between the two is capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Appends t and evicts the oldest item when over capacity.
  void push(const Transition& t);

  /// batch_size uniform draws with replacement. Throws std::logic_error on an
  /// empty buffer.
  std::vector<Transition> sample_minibatch(std::size_t batch_size, std::uint64_t seed) const;
  std::vector<Transition> sample_minibatch(std::size_t batch_size, Rng& rng) const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::uint64_t insert_count() const { return insert_count_; }
  const std::deque<Transition>& items() const { return items_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
  std::uint64_t insert_count_ = 0;
};

/// One transition per row: state,action,reward,next_state,policy_epoch.
void write_buffer_csv(std::ostream& out, const ReplayBuffer& buffer);

}  // namespace lfiw
