#ifndef CNPC_EVALUATION_HPP_
#define CNPC_EVALUATION_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/data_gen.hpp"
#include "cnpc/fusion.hpp"
#include "cnpc/predictor.hpp"

namespace cnpc {

// Sum p ln(p/q) with 0 ln 0 = 0 and q floored at 1e-12.
double kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct Metrics {
  double task_accuracy = 0.0;
  double mean_attribute_accuracy = 0.0;
};

// Attribute predictions and truths are row-major, one column per attribute.
Metrics metrics(const std::vector<std::size_t>& predicted_class, const std::vector<std::size_t>& true_class,
                const std::vector<std::size_t>& predicted_attrs, const std::vector<std::size_t>& true_attrs,
                std::size_t attributes);

struct SweepRow {
  std::string variant;  // NPC or CNPC
  std::string corruption;
  double alpha = 0.0;
  std::size_t budget = 0;
  std::string seed;  // seed value, or "mean" for the across-seed average
  double task_acc = 0.0;
  double attr_acc = 0.0;
};

struct SweepRun {
  std::uint64_t seed = 0;
  const Dataset* dataset = nullptr;  // possibly corrupted; test split is scored
  const PredictorParams* predictor = nullptr;
};

struct SweepOptions {
  double alpha = 0.9;
  // Score CNPC attributes by joint argmax instead of per-attribute marginals.
  bool joint_argmax_attributes = false;
  // Score the validation split instead of the test split. Corruptions touch
  // only test rows, so this always sees in-distribution data.
  bool validation_split = false;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::size_t flagged_class_rows = 0;
};

// For every test instance and budget b = 0..K, intervene on the first b
// attributes of the depth order with their true labels and score NPC and
// CNPC. Emits one row per (variant, budget, seed) and the seed mean.
// Trains a predictor on the dataset's train split, selecting on val.
TrainResult train_predictor(const Dataset& dataset, const TrainConfig& config);

SweepReport run_sweep(const std::vector<SweepRun>& runs, const FusionEngine& engine, const SweepOptions& options);

std::vector<double> default_alpha_grid();
SweepReport ablate_alpha(const std::vector<SweepRun>& runs, const FusionEngine& engine,
                         const std::vector<double>& grid, bool joint_argmax_attributes = false);

struct AlphaSelection {
  double alpha = 0.0;
  std::vector<double> grid;
  std::vector<double> scores;  // CNPC task accuracy on val, averaged over budgets and runs
};

// Picks the grid value with the best validation score; ties go to the smaller alpha.
AlphaSelection select_alpha(const std::vector<SweepRun>& runs, const FusionEngine& engine,
                            const std::vector<double>& grid, bool joint_argmax_attributes = false);

std::string report_csv(const SweepReport& report);
std::string report_summary_json(const SweepReport& report, const std::vector<SweepRun>& runs);

const SweepRow& find_row(const SweepReport& report, std::string_view variant, std::size_t budget,
                         std::string_view seed = "mean", double alpha = -1.0);

}  // namespace cnpc

#endif  // CNPC_EVALUATION_HPP_
