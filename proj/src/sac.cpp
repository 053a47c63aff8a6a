#include "scopil/sac.hpp"

namespace scopil {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (t.a < 0 || t.a >= kNumActions) throw std::invalid_argument("transition action outside 0..8");
  Row s{}, s2{};
  for (int i = 0; i < kStateDim; ++i) {
    s[i] = static_cast<float>(t.s[i]);
    s2[i] = static_cast<float>(t.s2[i]);
  }
  if (size_ < capacity_) {
    // Grow lazily so a 10^6-capacity buffer costs nothing until filled.
    s_.push_back(s);
    s2_.push_back(s2);
    a_.push_back(static_cast<std::uint8_t>(t.a));
    r_.push_back(static_cast<float>(t.r));
    done_.push_back(t.done ? 1 : 0);
    ++size_;
  } else {
    s_[head_] = s;
    s2_[head_] = s2;
    a_[head_] = static_cast<std::uint8_t>(t.a);
    r_[head_] = static_cast<float>(t.r);
    done_[head_] = t.done ? 1 : 0;
  }
  head_ = (head_ + 1) % capacity_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay index");
  Transition t;
  for (int k = 0; k < kStateDim; ++k) {
    t.s[k] = s_[i][k];
    t.s2[k] = s2_[i][k];
  }
  t.a = a_[i];
  t.r = r_[i];
  t.done = done_[i] != 0;
  return t;
}

ReplayBatch<float> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (n == 0 || size_ < n) throw std::invalid_argument("replay buffer holds fewer transitions than the batch size");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  ReplayBatch<float> b;
  const auto cols = static_cast<Eigen::Index>(n);
  b.s.resize(kStateDim, cols);
  b.s2.resize(kStateDim, cols);
  b.r.resize(cols);
  b.done.resize(cols);
  b.a.resize(n);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const std::size_t i = pick(rng);
    for (int k = 0; k < kStateDim; ++k) {
      b.s(k, j) = s_[i][k];
      b.s2(k, j) = s2_[i][k];
    }
    b.a[static_cast<std::size_t>(j)] = a_[i];
    b.r[j] = r_[i];
    b.done[j] = done_[i];
  }
  return b;
}

}  // namespace scopil
