#include "cnpc/evaluation.hpp"

#include <cmath>
#include <map>
#include <set>

#include "cnpc/circuit.hpp"
#include "cnpc/error.hpp"
#include "cnpc/io.hpp"

namespace cnpc {

using nlohmann::json;

double kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw ValidationError("kl: distributions have different lengths");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    total += p[i] * std::log(p[i] / std::max(q[i], kProbabilityFloor));
  }
  return total;
}

Metrics metrics(const std::vector<std::size_t>& predicted_class, const std::vector<std::size_t>& true_class,
                const std::vector<std::size_t>& predicted_attrs, const std::vector<std::size_t>& true_attrs,
                std::size_t attributes) {
  const std::size_t n = true_class.size();
  if (n == 0) throw ValidationError("metrics: empty test set");
  if (predicted_class.size() != n || predicted_attrs.size() != n * attributes || true_attrs.size() != n * attributes) {
    throw ValidationError("metrics: prediction and ground-truth sizes differ");
  }
  Metrics m;
  double task = 0.0;
  double attr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (predicted_class[i] == true_class[i]) task += 1.0;
    if (attributes == 0) continue;
    double hits = 0.0;
    for (std::size_t k = 0; k < attributes; ++k) {
      if (predicted_attrs[i * attributes + k] == true_attrs[i * attributes + k]) hits += 1.0;
    }
    attr += hits / static_cast<double>(attributes);
  }
  m.task_accuracy = task / static_cast<double>(n);
  m.mean_attribute_accuracy = attr / static_cast<double>(n);
  return m;
}

namespace {

std::size_t argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

}  // namespace

TrainResult train_predictor(const Dataset& dataset, const TrainConfig& config) {
  PredictorParams init = init_predictor_for(dataset.model, static_cast<std::size_t>(dataset.embeddings.cols()), config);
  return train(config, init, dataset.batch(dataset.splits.train), dataset.batch(dataset.splits.val));
}

SweepReport run_sweep(const std::vector<SweepRun>& runs, const FusionEngine& engine, const SweepOptions& options) {
  check_alpha(options.alpha);
  if (runs.empty()) throw ValidationError("run_sweep: no runs");
  const auto& names = engine.attribute_names();
  const std::size_t heads = names.size();
  SweepReport report;
  report.flagged_class_rows = engine.class_table().flagged_count;

  // metrics per (variant, budget) per run
  std::map<std::pair<std::string, std::size_t>, std::vector<Metrics>> cells;
  for (const auto& run : runs) {
    if (!run.dataset || !run.predictor) throw ValidationError("run_sweep: run without dataset or predictor");
    const Dataset& ds = *run.dataset;
    if (structure_digest(ds.model) != engine.circuit_digest()) {
      throw ValidationError("run_sweep: dataset model does not match the circuit (digest mismatch)");
    }
    if (run.predictor->head_names != names) throw ValidationError("run_sweep: predictor heads do not match the circuit");
    const auto& test = options.validation_split ? ds.splits.val : ds.splits.test;
    if (test.empty()) throw ValidationError("run_sweep: empty evaluation split");
    AttributeBatch batch = ds.batch(test);
    auto probs = forward_batch(*run.predictor, batch.x);
    auto depth = depth_order(ds.model);
    std::vector<std::size_t> depth_heads;
    for (const auto& name : depth) depth_heads.push_back(run.predictor->head_index(name));

    std::vector<std::size_t> true_class;
    for (auto r : test) true_class.push_back(ds.class_label(r));

    for (std::size_t budget = 0; budget <= heads; ++budget) {
      std::vector<std::size_t> npc_class, cnpc_class, npc_attrs, cnpc_attrs;
      for (std::size_t i = 0; i < test.size(); ++i) {
        AttrDists neural;
        for (std::size_t k = 0; k < heads; ++k) neural.push_back(probs[k].row(static_cast<Eigen::Index>(i)).transpose());
        InterventionSet interventions;
        for (std::size_t b = 0; b < budget; ++b) {
          interventions.assignments[depth[b]] = batch.label(i, depth_heads[b], heads);
        }
        FusedPrediction fused = engine.predict(neural, interventions, options.alpha);
        npc_class.push_back(argmax(fused.npc_class));
        cnpc_class.push_back(argmax(fused.cnpc_class));
        for (auto a : fused.npc_labels.attributes) npc_attrs.push_back(a);
        const auto cnpc = options.joint_argmax_attributes ? fused.cnpc_labels.attributes
                                                          : marginal_argmax(fused.poe_marginals);
        for (auto a : cnpc) cnpc_attrs.push_back(a);
      }
      cells[{"NPC", budget}].push_back(metrics(npc_class, true_class, npc_attrs, batch.labels, heads));
      cells[{"CNPC", budget}].push_back(metrics(cnpc_class, true_class, cnpc_attrs, batch.labels, heads));
    }
  }

  const std::string corruption = options.validation_split ? "none" : runs.front().dataset->corruption;
  for (const char* variant : {"NPC", "CNPC"}) {
    for (std::size_t budget = 0; budget <= heads; ++budget) {
      const auto& per_run = cells.at({variant, budget});
      double task = 0.0;
      double attr = 0.0;
      for (std::size_t r = 0; r < runs.size(); ++r) {
        report.rows.push_back({variant, corruption, options.alpha, budget, std::to_string(runs[r].seed),
                               per_run[r].task_accuracy, per_run[r].mean_attribute_accuracy});
        task += per_run[r].task_accuracy;
        attr += per_run[r].mean_attribute_accuracy;
      }
      const double n = static_cast<double>(runs.size());
      report.rows.push_back({variant, corruption, options.alpha, budget, "mean", task / n, attr / n});
    }
  }
  return report;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  return grid;
}

SweepReport ablate_alpha(const std::vector<SweepRun>& runs, const FusionEngine& engine,
                         const std::vector<double>& grid, bool joint_argmax_attributes) {
  if (grid.empty()) throw ValidationError("ablate_alpha: empty grid");
  SweepReport out;
  for (double alpha : grid) {
    SweepReport part = run_sweep(runs, engine, {alpha, joint_argmax_attributes, false});
    out.flagged_class_rows = part.flagged_class_rows;
    out.rows.insert(out.rows.end(), part.rows.begin(), part.rows.end());
  }
  return out;
}

AlphaSelection select_alpha(const std::vector<SweepRun>& runs, const FusionEngine& engine,
                            const std::vector<double>& grid, bool joint_argmax_attributes) {
  if (grid.empty()) throw ValidationError("select_alpha: empty grid");
  AlphaSelection out;
  out.grid = grid;
  double best = -1.0;
  for (double alpha : grid) {
    SweepReport part = run_sweep(runs, engine, {alpha, joint_argmax_attributes, true});
    double score = 0.0;
    std::size_t count = 0;
    for (const auto& row : part.rows) {
      if (row.variant == "CNPC" && row.seed == "mean") {
        score += row.task_acc;
        ++count;
      }
    }
    score /= static_cast<double>(count);
    out.scores.push_back(score);
    if (score > best) {
      best = score;
      out.alpha = alpha;
    }
  }
  return out;
}

std::string report_csv(const SweepReport& report) {
  std::string out = "variant,corruption,alpha,budget,seed,task_acc,attr_acc\n";
  for (const auto& r : report.rows) {
    out += r.variant + "," + r.corruption + "," + format_short(r.alpha) + "," + std::to_string(r.budget) + "," +
           r.seed + "," + format_short(r.task_acc) + "," + format_short(r.attr_acc) + "\n";
  }
  return out;
}

std::string report_summary_json(const SweepReport& report, const std::vector<SweepRun>& runs) {
  json seeds = json::array();
  for (const auto& run : runs) seeds.push_back(run.seed);
  std::set<double> alphas;
  json means = json::array();
  for (const auto& r : report.rows) {
    alphas.insert(r.alpha);
    if (r.seed != "mean") continue;
    means.push_back({{"variant", r.variant},
                     {"alpha", r.alpha},
                     {"budget", r.budget},
                     {"task_acc", r.task_acc},
                     {"attr_acc", r.attr_acc}});
  }
  json doc = {{"seeds", seeds},
              {"corruption", runs.empty() || !runs.front().dataset ? "none" : runs.front().dataset->corruption},
              {"alphas", std::vector<double>(alphas.begin(), alphas.end())},
              {"cells", report.rows.size()},
              {"flagged_class_rows", report.flagged_class_rows},
              {"mean", means}};
  return canonical_dump(doc);
}

const SweepRow& find_row(const SweepReport& report, std::string_view variant, std::size_t budget,
                         std::string_view seed, double alpha) {
  for (const auto& r : report.rows) {
    if (r.variant == variant && r.budget == budget && r.seed == seed && (alpha < 0.0 || r.alpha == alpha)) return r;
  }
  throw ValidationError("report has no row for " + std::string(variant) + " budget " + std::to_string(budget));
}

}  // namespace cnpc
