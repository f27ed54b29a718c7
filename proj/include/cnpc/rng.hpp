#ifndef CNPC_RNG_HPP_
#define CNPC_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace cnpc {

// Seeded generator shared by sampling, initialization and shuffling.
// uniform() is derived bit-wise from the engine output so sampled label
// tables do not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  double normal() { return normal_(engine_); }

  // Dirichlet(1, ..., 1) draw of length k.
  Eigen::VectorXd dirichlet(std::size_t k) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = -std::log1p(-uniform());
    double total = v.sum();
    if (total <= 0.0) return Eigen::VectorXd::Constant(v.size(), 1.0 / static_cast<double>(k));
    return v / total;
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    // Fisher-Yates on uniform() for cross-library reproducibility.
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cnpc

#endif  // CNPC_RNG_HPP_
