#include "lfiw/replay.hpp"

#include <ostream>
#include <stdexcept>

namespace lfiw {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  items_.push_back(t);
  ++insert_count_;
  while (items_.size() > capacity_) items_.pop_front();
}

std::vector<Transition> ReplayBuffer::sample_minibatch(std::size_t batch_size, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("ReplayBuffer: cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Transition> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(items_[pick(rng)]);
  return batch;
}

std::vector<Transition> ReplayBuffer::sample_minibatch(std::size_t batch_size, std::uint64_t seed) const {
  Rng rng(seed);
  return sample_minibatch(batch_size, rng);
}

void write_buffer_csv(std::ostream& out, const ReplayBuffer& buffer) {
  const auto old_precision = out.precision(17);
  out << "state,action,reward,next_state,policy_epoch\n";
  for (const Transition& t : buffer.items())
    out << t.state << ',' << t.action << ',' << t.reward << ',' << t.next_state << ',' << t.policy_epoch << '\n';
  out.precision(old_precision);
}

}  // namespace lfiw
