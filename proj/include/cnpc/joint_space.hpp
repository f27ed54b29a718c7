#ifndef CNPC_JOINT_SPACE_HPP_
#define CNPC_JOINT_SPACE_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace cnpc {

// Mixed-radix indexing over a product of finite state spaces. Position 0 is
// the most significant digit, so index order is lexicographic order.
class JointSpace {
 public:
  JointSpace() = default;
  // Throws CapExceededError when the product exceeds `cap`.
  explicit JointSpace(std::vector<std::size_t> cardinalities, std::size_t cap = std::size_t{1} << 40);

  std::size_t size() const { return size_; }
  std::size_t rank() const { return cards_.size(); }
  const std::vector<std::size_t>& cardinalities() const { return cards_; }

  std::size_t index(std::span<const std::size_t> states) const;
  void decode(std::size_t index, std::span<std::size_t> out) const;
  std::vector<std::size_t> decode(std::size_t index) const;

  // Advances `states` to the next assignment; returns false after the last.
  bool next(std::span<std::size_t> states) const;

 private:
  std::vector<std::size_t> cards_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

}  // namespace cnpc

#endif  // CNPC_JOINT_SPACE_HPP_
