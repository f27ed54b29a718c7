#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cnpc/bounds.hpp"
#include "cnpc/causal_model.hpp"
#include "cnpc/circuit.hpp"
#include "cnpc/circuit_runtime.hpp"
#include "cnpc/data_gen.hpp"
#include "cnpc/error.hpp"
#include "cnpc/evaluation.hpp"
#include "cnpc/exact_oracle.hpp"
#include "cnpc/fusion.hpp"
#include "cnpc/io.hpp"
#include "cnpc/predictor.hpp"
#include "cnpc/service.hpp"

using namespace cnpc;

namespace {

void setup_logging() {
  const char* level = std::getenv("CNPC_LOG");
  spdlog::set_default_logger(spdlog::stderr_color_mt("cnpc"));
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

// Accepts a corruption descriptor ("gaussian:3") or a file tag ("gaussian_3").
std::string corruption_tag(const std::string& text) {
  if (text.empty() || text == "none") return "none";
  try {
    return CorruptionConfig::parse(text).tag();
  } catch (const ValidationError&) {
    // "mode:args" is a descriptor and must parse; anything else is taken as a file tag
    if (text.find(':') != std::string::npos) throw;
    return text;
  }
}

std::optional<std::string> optional_tag(const std::string& text) {
  std::string tag = corruption_tag(text);
  if (tag == "none") return std::nullopt;
  return tag;
}

// "NAME=STATE" where STATE is a label, or a state index when no label matches.
std::pair<std::string, std::size_t> parse_binding(const CausalModel& model, const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ValidationError("expected NAME=STATE, got '" + text + "'");
  }
  std::string name = text.substr(0, eq);
  std::string state = text.substr(eq + 1);
  auto index = model.find(name);
  if (!index) throw ValidationError("unknown variable " + name);
  const auto& var = model.variable(*index);
  for (std::size_t s = 0; s < var.cardinality(); ++s) {
    if (var.states[s] == state) return {name, s};
  }
  if (state.find_first_not_of("0123456789") == std::string::npos) {
    std::size_t s = std::stoul(state);
    if (s < var.cardinality()) return {name, s};
  }
  throw ValidationError("unknown state " + state + " of " + name);
}

Assignment parse_bindings(const CausalModel& model, const std::vector<std::string>& texts) {
  Assignment out;
  for (const auto& text : texts) {
    auto [name, state] = parse_binding(model, text);
    if (out.contains(name)) throw ValidationError("variable " + name + " bound twice");
    out[name] = state;
  }
  return out;
}

std::string print_value(double v) { return format_short(v); }

Circuit load_or_compile(const CausalModel& model, const std::string& circuit_path) {
  if (circuit_path.empty()) return compile(model, minfill_order(model));
  Circuit circuit = read_circuit_file(circuit_path);
  check_circuit_matches(circuit, model);
  return circuit;
}

struct SweepInputs {
  std::vector<Dataset> datasets;
  std::vector<PredictorParams> predictors;
  std::vector<SweepRun> runs;
};

void load_sweep_inputs(SweepInputs& in, const std::vector<std::string>& data_dirs,
                       const std::vector<std::string>& predictor_paths, const std::string& corruption) {
  if (data_dirs.empty()) throw ValidationError("at least one --data-dir is required");
  if (data_dirs.size() != predictor_paths.size()) {
    throw ValidationError("give one --predictor per --data-dir");
  }
  auto tag = optional_tag(corruption);
  in.datasets.reserve(data_dirs.size());
  in.predictors.reserve(data_dirs.size());
  for (std::size_t i = 0; i < data_dirs.size(); ++i) {
    in.datasets.push_back(read_dataset(data_dirs[i], tag));
    PredictorFile file = read_predictor_file(predictor_paths[i]);
    if (file.dataset_digest != in.datasets.back().base_digest) {
      throw ValidationError("predictor " + predictor_paths[i] + " was not trained on " + data_dirs[i]);
    }
    in.predictors.push_back(std::move(file.params));
  }
  for (std::size_t i = 0; i < in.datasets.size(); ++i) {
    in.runs.push_back({in.datasets[i].seed, &in.datasets[i], &in.predictors[i]});
  }
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
    spdlog::info("wrote {}", path);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Causal neural probabilistic circuits: data, training, inference and evaluation"};
  app.require_subcommand(1);

  // gen-data
  std::string model_path, data_dir, predictor_path, out_path;
  std::uint64_t seed = 42;
  std::size_t n = 5000, spurious = 0;
  std::vector<std::string> corruptions;
  auto* gen = app.add_subcommand("gen-data", "Sample labels, build embeddings and corrupted test splits");
  gen->add_option("--model", model_path, "Model file with CPDs (default: built-in mnistadd_syn)");
  gen->add_option("--data-dir", data_dir, "Output dataset directory")->required();
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--n", n, "Number of instances");
  gen->add_option("--spurious-channels", spurious, "Spurious code channels per attribute");
  gen->add_option("--corruption", corruptions,
                  "Corruptions of the test split: gaussian:SIGMA, permute:SEED, pgd:EPS:STEP:ITERS, spurious_flip");
  gen->add_option("--predictor", predictor_path, "Trained predictor (required for pgd)");

  // fit-params
  double smoothing = 1.0;
  auto* fit = app.add_subcommand("fit-params", "Fit CPDs from the training labels of a dataset");
  fit->add_option("--model", model_path, "Model structure file (default: the dataset's model)");
  fit->add_option("--data-dir", data_dir, "Dataset directory")->required();
  fit->add_option("--smoothing", smoothing, "Additive smoothing pseudo-count");
  fit->add_option("--out,--params", out_path, "Output params file")->required();

  // compile
  std::string params_path, circuit_path, order_name = "minfill";
  auto* comp = app.add_subcommand("compile", "Compile a model into an arithmetic circuit");
  comp->add_option("--model,--params", model_path, "Model file")->required();
  comp->add_option("--circuit,--out", circuit_path, "Output circuit file")->required();
  comp->add_option("--order", order_name, "Elimination order: minfill or reverse-declaration")
      ->check(CLI::IsMember({"minfill", "reverse-declaration"}));

  // train-predictor
  TrainConfig train_config;
  auto* trn = app.add_subcommand("train-predictor", "Train the attribute predictor on a dataset");
  trn->add_option("--data-dir", data_dir, "Dataset directory")->required();
  trn->add_option("--predictor,--out", predictor_path, "Output predictor file")->required();
  trn->add_option("--seed", train_config.seed, "Training seed");
  trn->add_option("--epochs", train_config.epochs, "Epochs");
  trn->add_option("--batch-size", train_config.batch_size, "Minibatch size");
  trn->add_option("--lr", train_config.learning_rate, "Learning rate");
  trn->add_option("--momentum", train_config.momentum, "Momentum");
  trn->add_option("--weight-decay", train_config.weight_decay, "Weight decay on weights");
  trn->add_option("--hidden", train_config.hidden_dim, "Hidden width");

  // query
  std::vector<std::string> events, given, dos;
  bool with_oracle = false;
  auto* qry = app.add_subcommand("query", "Marginal, conditional or interventional query on the circuit");
  qry->add_option("--params,--model", params_path, "Model file with CPDs")->required();
  qry->add_option("--circuit", circuit_path, "Compiled circuit (compiled on the fly if omitted)");
  qry->add_option("--event", events, "Query event NAME=STATE")->required();
  qry->add_option("--given", given, "Evidence NAME=STATE");
  qry->add_option("--do", dos, "Intervention NAME=STATE");
  qry->add_flag("--oracle", with_oracle, "Cross-check against exact enumeration");

  // eval / ablate-alpha
  std::vector<std::string> data_dirs, predictor_paths;
  std::string corruption = "none", summary_path;
  double alpha = 0.9;
  bool joint_argmax = false;
  auto add_sweep_options = [&](CLI::App* sub) {
    sub->add_option("--params", params_path, "Model file with CPDs")->required();
    sub->add_option("--circuit", circuit_path, "Compiled circuit")->required();
    sub->add_option("--data-dir", data_dirs, "Dataset directory, one per seed")->required();
    sub->add_option("--predictor", predictor_paths, "Predictor file, one per dataset")->required();
    sub->add_option("--corruption", corruption, "Corruption tag or descriptor of the test embeddings");
    sub->add_option("--out", out_path, "Report CSV (default: stdout)");
    sub->add_flag("--joint-argmax", joint_argmax, "Score CNPC attributes by joint argmax");
  };
  auto* evl = app.add_subcommand("eval", "Intervention-budget sweep, NPC vs CNPC");
  add_sweep_options(evl);
  evl->add_option("--alpha", alpha, "Fusion weight")->check(CLI::Range(0.0, 1.0));
  evl->add_option("--summary", summary_path, "Summary JSON path");
  bool select = false;
  evl->add_flag("--select-alpha", select, "Pick alpha from the default grid on the validation split (overrides --alpha)");
  std::vector<double> grid;
  auto* abl = app.add_subcommand("ablate-alpha", "Sweep over a grid of fusion weights");
  add_sweep_options(abl);
  abl->add_option("--grid", grid, "Alpha values (default 0.0 to 1.0 step 0.1)");

  // verify-bounds
  std::size_t trials = 50;
  auto* vb = app.add_subcommand("verify-bounds", "Check the KL bounds on random discrete worlds");
  vb->add_option("--trials", trials, "Random trials");
  vb->add_option("--seed", seed, "World seed");
  vb->add_option("--out", out_path, "bounds.csv path (default: stdout)");

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  bool reveal = false;
  auto* srv = app.add_subcommand("serve", "HTTP service for the intervention console");
  srv->add_option("--params,--model", params_path, "Model file with CPDs")->required();
  srv->add_option("--circuit", circuit_path, "Compiled circuit")->required();
  srv->add_option("--predictor", predictor_path, "Predictor file")->required();
  srv->add_option("--data-dir", data_dir, "Dataset directory");
  srv->add_option("--corruption", corruption, "Corruption tag of the served embeddings");
  srv->add_option("--alpha", alpha, "Default fusion weight")->check(CLI::Range(0.0, 1.0));
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port");
  srv->add_flag("--reveal-ground-truth", reveal, "Include true labels in /instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      CausalModel model = model_path.empty() ? mnistadd_syn() : read_model_file(model_path);
      DatasetConfig config;
      config.n = n;
      config.seed = seed;
      config.embed.seed = seed;
      config.spurious_channels = spurious;
      Dataset base = make_dataset(model, config);
      write_dataset(base, data_dir);
      std::optional<PredictorParams> predictor;
      if (!predictor_path.empty()) {
        PredictorFile file = read_predictor_file(predictor_path);
        if (file.dataset_digest != base.base_digest) {
          throw ValidationError("predictor " + predictor_path + " was not trained on this dataset");
        }
        predictor = std::move(file.params);
      }
      for (const auto& descriptor : corruptions) {
        Dataset shifted = corrupt(base, CorruptionConfig::parse(descriptor), predictor ? &*predictor : nullptr);
        write_dataset(shifted, data_dir);
        spdlog::info("wrote corruption {}", shifted.corruption);
      }
      spdlog::info("dataset {} ({} instances) in {}", base.base_digest.substr(0, 12), base.size(), data_dir);
    } else if (*fit) {
      Dataset ds = read_dataset(data_dir);
      CausalModel structure = model_path.empty() ? ds.model : read_model_file(model_path);
      CausalModel fitted = fit_cpds(structure, ds.labels.select_rows(ds.splits.train), smoothing);
      write_model_file(fitted, out_path);
    } else if (*comp) {
      CausalModel model = read_model_file(model_path);
      auto order = order_name == "minfill" ? minfill_order(model) : reverse_declaration_order(model);
      Circuit circuit = compile(model, order);
      write_circuit_file(circuit, circuit_path);
      spdlog::info("{} nodes, {} internal", circuit.nodes.size(), circuit.internal_node_count());
    } else if (*trn) {
      Dataset ds = read_dataset(data_dir);
      TrainResult result = train_predictor(ds, train_config);
      write_predictor_file(predictor_path, result.params, train_config, ds.base_digest);
      spdlog::info("best epoch {}, val attribute accuracy {:.4f}", result.best_epoch, result.val_accuracy.at(result.best_epoch));
    } else if (*qry) {
      CausalModel model = read_model_file(params_path);
      Circuit circuit = load_or_compile(model, circuit_path);
      CircuitQuery query(circuit, bind_params(circuit, model));
      Assignment event = parse_bindings(model, events);
      Assignment evidence = parse_bindings(model, given);
      InterventionSet interventions{parse_bindings(model, dos)};
      double value = evidence.empty() ? query.interventional(event, interventions)
                                      : query.interventional_conditional(event, evidence, interventions);
      std::cout << print_value(value) << "\n";
      if (with_oracle) {
        CausalModel world = interventions.empty() ? model : mutilate(model, interventions);
        double reference = evidence.empty() ? oracle::marginal(world, event) : oracle::conditional(world, event, evidence);
        double diff = std::abs(value - reference);
        std::cout << "oracle " << print_value(reference) << " abs_diff " << print_value(diff) << "\n";
        if (diff > 1e-9) throw ValidationError("circuit and oracle disagree");
      }
    } else if (*evl || *abl) {
      CausalModel model = read_model_file(params_path);
      Circuit circuit = load_or_compile(model, circuit_path);
      SweepInputs in;
      load_sweep_inputs(in, data_dirs, predictor_paths, corruption);
      CircuitQuery query(circuit, bind_params(circuit, model));
      FusionEngine engine(query, in.predictors.front().head_names);
      if (*evl && select) {
        AlphaSelection chosen = select_alpha(in.runs, engine, default_alpha_grid(), joint_argmax);
        alpha = chosen.alpha;
        spdlog::info("selected alpha {} on the validation split", format_short(alpha));
      }
      SweepReport report = *evl ? run_sweep(in.runs, engine, {alpha, joint_argmax, false})
                                : ablate_alpha(in.runs, engine, grid.empty() ? default_alpha_grid() : grid, joint_argmax);
      write_or_print(out_path, report_csv(report));
      if (!summary_path.empty()) write_text_file(summary_path, report_summary_json(report, in.runs));
    } else if (*vb) {
      BoundReport report = verify_bounds(trials, seed);
      write_or_print(out_path, bounds_csv(report));
      double worst = 0.0;
      for (const auto& row : report.rows) worst = std::min(worst, row.slack);
      spdlog::info("{} trials, {} rows, smallest slack {:.3g}", report.trials, report.rows.size(), worst);
    } else if (*srv) {
      BundlePaths paths{params_path, circuit_path, predictor_path, data_dir, optional_tag(corruption)};
      auto bundle = load_bundle(paths, alpha, reveal);
      serve(*bundle, host, port);
    }
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
