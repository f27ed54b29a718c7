#ifndef CNPC_DATA_GEN_HPP_
#define CNPC_DATA_GEN_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/causal_model.hpp"
#include "cnpc/predictor.hpp"

namespace cnpc {

// Ancestral sampling in topological order; deterministic given the seed.
LabelTable sample_labels(const CausalModel& model, std::size_t n, std::uint64_t seed);

// Two digits A1, A2 and their sum Y. A2 = (A1 + 1) % 10 with probability 0.8,
// otherwise uniform over the other nine digits.
CausalModel mnistadd_syn();

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  bool operator==(const Splits&) const = default;
};

// Seeded shuffle, then 80/10/10 (floor for train and val, remainder to test).
Splits split(std::size_t n, std::uint64_t seed);

struct EmbedConfig {
  std::size_t latent_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double noise_weight = 0.5;
  std::uint64_t seed = 42;
};

// One-hot encoding of the attribute columns of `labels`, in model order.
Eigen::MatrixXd one_hot_attributes(const CausalModel& model, const LabelTable& labels);

// Autoencoder embedding: train input->hidden->latent (relu hidden, linear
// latent) with a mirrored decoder on the training rows, then mix the encoder
// output with standard-normal noise and standardize every dimension with
// training-row statistics.
Eigen::MatrixXd embed(const CausalModel& model, const LabelTable& labels, const std::vector<std::size_t>& train_rows,
                      const EmbedConfig& config);

// Extra embedding channels carrying a fixed code per (attribute, state).
struct SpuriousChannels {
  std::size_t channels_per_attribute = 0;
  double noise_std = 0.1;
  std::vector<Eigen::MatrixXd> codes;  // per attribute: states x channels

  bool enabled() const { return channels_per_attribute > 0; }
};

struct CorruptionConfig {
  enum class Mode { none, gaussian, permute, pgd, spurious_flip };
  Mode mode = Mode::none;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double step = 0.0;
  std::size_t iters = 0;

  // "none", "gaussian:SIGMA", "permute:SEED", "pgd:EPS:STEP:ITERS", "spurious_flip".
  static CorruptionConfig parse(std::string_view text);
  std::string tag() const;
};

struct Dataset {
  CausalModel model;
  LabelTable labels;           // every model variable, state indices
  Eigen::MatrixXd embeddings;  // rows aligned with labels
  Splits splits;
  EmbedConfig embed_config;
  SpuriousChannels spurious;
  std::uint64_t seed = 0;
  std::string corruption = "none";
  // Digest of the uncorrupted label, embedding and split files; corruption
  // keeps it so a predictor trained on the base data still matches.
  std::string base_digest;

  std::size_t size() const { return labels.rows; }
  // Attribute labels of the given rows, one column per attribute in model order.
  AttributeBatch batch(const std::vector<std::size_t>& rows) const;
  std::vector<std::size_t> attribute_labels(std::size_t row) const;
  std::size_t class_label(std::size_t row) const;
};

// SHA-256 over the canonical label, embedding and split files.
std::string dataset_digest(const Dataset& dataset);

struct DatasetConfig {
  std::size_t n = 5000;
  std::uint64_t seed = 42;
  EmbedConfig embed;
  std::size_t spurious_channels = 0;
};

Dataset make_dataset(const CausalModel& model, const DatasetConfig& config);

// Applies a corruption to the test rows only. The predictor is required for pgd.
Dataset corrupt(const Dataset& dataset, const CorruptionConfig& config, const PredictorParams* predictor = nullptr);

std::string labels_csv(const CausalModel& model, const LabelTable& labels);
LabelTable parse_labels_csv(const CausalModel& model, std::string_view text);
std::string embeddings_csv(const Eigen::MatrixXd& embeddings);
Eigen::MatrixXd parse_embeddings_csv(std::string_view text);
std::string splits_json(const Splits& splits);
Splits parse_splits_json(std::string_view text, std::size_t n);

// Writes model.json, labels.csv, embeddings.csv, splits.json, manifest.json.
// A corrupted dataset writes only embeddings_<tag>.csv next to the base files.
void write_dataset(const Dataset& dataset, const std::string& dir);
// Reads the base dataset; `corruption` selects embeddings_<tag>.csv if set.
Dataset read_dataset(const std::string& dir, const std::optional<std::string>& corruption = std::nullopt);

}  // namespace cnpc

#endif  // CNPC_DATA_GEN_HPP_
