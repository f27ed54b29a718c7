#ifndef CNPC_PREDICTOR_HPP_
#define CNPC_PREDICTOR_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/causal_model.hpp"

namespace cnpc {

inline constexpr double kProbabilityFloor = 1e-12;

// Shared relu layer followed by one softmax head per attribute.
struct PredictorParams {
  Eigen::MatrixXd shared_w;  // input_dim x hidden
  Eigen::VectorXd shared_b;
  std::vector<Eigen::MatrixXd> head_w;  // hidden x |A_k|
  std::vector<Eigen::VectorXd> head_b;
  std::vector<std::string> head_names;

  std::size_t input_dim() const { return static_cast<std::size_t>(shared_w.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(shared_w.cols()); }
  std::size_t head_count() const { return head_w.size(); }
  std::size_t head_width(std::size_t k) const { return static_cast<std::size_t>(head_w[k].cols()); }
  std::size_t head_index(std::string_view name) const;

  // Same shapes, all zero.
  PredictorParams zeros_like() const;
  std::size_t parameter_count() const;
  // Flat views in a fixed order (shared_w, shared_b, head_w..., head_b...),
  // used by the optimizer and by finite-difference checks.
  double& coordinate(std::size_t index);
  double coordinate(std::size_t index) const;

  bool operator==(const PredictorParams& other) const;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  std::size_t hidden_dim = 128;
  std::uint64_t seed = 42;
  bool keep_last_epoch = false;
};

using AttrDists = std::vector<Eigen::VectorXd>;

// Inputs one row per instance; labels row-major with one column per head.
struct AttributeBatch {
  Eigen::MatrixXd x;
  std::vector<std::size_t> labels;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t label(std::size_t row, std::size_t head, std::size_t heads) const { return labels[row * heads + head]; }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
PredictorParams init_predictor(std::size_t input_dim, std::size_t hidden_dim, const std::vector<std::string>& names,
                               const std::vector<std::size_t>& widths, std::uint64_t seed);
PredictorParams init_predictor_for(const CausalModel& model, std::size_t input_dim, const TrainConfig& config);

AttrDists forward(const PredictorParams& params, const Eigen::VectorXd& x);
// Per-head probability matrices, one row per instance.
std::vector<Eigen::MatrixXd> forward_batch(const PredictorParams& params, const Eigen::MatrixXd& x);

// Mean over instances and heads of -ln p(a_k*) / ln|A_k|, plus
// weight_decay/2 * ||W||^2 over weight matrices.
double loss(const PredictorParams& params, const AttributeBatch& batch, double weight_decay = 0.0);
PredictorParams grad(const PredictorParams& params, const AttributeBatch& batch, double weight_decay = 0.0);
// Gradient of the (undecayed) loss with respect to the inputs.
Eigen::MatrixXd input_grad(const PredictorParams& params, const AttributeBatch& batch);

// v <- momentum * v + g; p <- p - lr * v. Weight decay is folded into g by
// the caller's gradient.
class MomentumSgd {
 public:
  struct Slot {
    double* value;
    const double* grad;
    std::size_t size;
  };

  MomentumSgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}
  // Slots must keep the same order and sizes across calls.
  void step(const std::vector<Slot>& slots);

 private:
  double lr_;
  double momentum_;
  std::vector<Eigen::VectorXd> velocity_;
};

// Slots pairing every tensor of `params` with the same tensor of `grads`.
std::vector<MomentumSgd::Slot> optimizer_slots(PredictorParams& params, const PredictorParams& grads);

struct TrainResult {
  PredictorParams params;
  std::size_t best_epoch = 0;
  std::vector<double> val_accuracy;  // per epoch
};

TrainResult train(const TrainConfig& config, const PredictorParams& init, const AttributeBatch& train_split,
                  const AttributeBatch& val_split);

// Per-head argmax accuracy averaged over heads.
double mean_attribute_accuracy(const PredictorParams& params, const AttributeBatch& batch);

// Intervened heads become point masses on the forced state.
AttrDists clamp(const AttrDists& dists, const InterventionSet& interventions, const std::vector<std::string>& names);

Eigen::VectorXd pgd_embedding(const PredictorParams& params, const Eigen::VectorXd& x,
                              const std::vector<std::size_t>& labels, double epsilon, double step,
                              std::size_t iters);

std::string serialize_predictor(const PredictorParams& params, const TrainConfig& config,
                                const std::string& dataset_digest);
struct PredictorFile {
  PredictorParams params;
  TrainConfig config;
  std::string dataset_digest;
};
PredictorFile parse_predictor(std::string_view text);
PredictorFile read_predictor_file(const std::string& path);
void write_predictor_file(const std::string& path, const PredictorParams& params, const TrainConfig& config,
                          const std::string& dataset_digest);

}  // namespace cnpc

#endif  // CNPC_PREDICTOR_HPP_
