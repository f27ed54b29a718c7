#include "cnpc/joint_space.hpp"

#include <string>

#include "cnpc/error.hpp"

namespace cnpc {

JointSpace::JointSpace(std::vector<std::size_t> cardinalities, std::size_t cap)
    : cards_(std::move(cardinalities)), strides_(cards_.size(), 1) {
  for (std::size_t card : cards_) {
    if (card == 0) throw ValidationError("joint space with an empty state set");
    if (size_ > cap / card) {
      throw CapExceededError("joint space exceeds the enumeration cap of " + std::to_string(cap) + " states");
    }
    size_ *= card;
  }
  if (size_ > cap) throw CapExceededError("joint space exceeds the enumeration cap of " + std::to_string(cap) + " states");
  for (std::size_t i = cards_.size(); i-- > 1;) strides_[i - 1] = strides_[i] * cards_[i];
}

std::size_t JointSpace::index(std::span<const std::size_t> states) const {
  std::size_t result = 0;
  for (std::size_t i = 0; i < cards_.size(); ++i) result += states[i] * strides_[i];
  return result;
}

void JointSpace::decode(std::size_t index, std::span<std::size_t> out) const {
  for (std::size_t i = 0; i < cards_.size(); ++i) {
    out[i] = index / strides_[i];
    index %= strides_[i];
  }
}

std::vector<std::size_t> JointSpace::decode(std::size_t index) const {
  std::vector<std::size_t> out(cards_.size());
  decode(index, out);
  return out;
}

bool JointSpace::next(std::span<std::size_t> states) const {
  for (std::size_t i = cards_.size(); i-- > 0;) {
    if (++states[i] < cards_[i]) return true;
    states[i] = 0;
  }
  return false;
}

}  // namespace cnpc
