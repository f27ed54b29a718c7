#include "cnpc/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cnpc/error.hpp"
#include "cnpc/io.hpp"
#include "cnpc/rng.hpp"

namespace cnpc {

using nlohmann::json;

namespace {

template <typename F>
void for_each_tensor(PredictorParams& p, F&& f) {
  f(p.shared_w.data(), static_cast<std::size_t>(p.shared_w.size()));
  f(p.shared_b.data(), static_cast<std::size_t>(p.shared_b.size()));
  for (auto& w : p.head_w) f(w.data(), static_cast<std::size_t>(w.size()));
  for (auto& b : p.head_b) f(b.data(), static_cast<std::size_t>(b.size()));
}

void softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
    row = row.array().max(kProbabilityFloor).matrix();
    row /= row.sum();
  }
}

struct ForwardCache {
  Eigen::MatrixXd pre;     // n x hidden, before relu
  Eigen::MatrixXd hidden;  // n x hidden
  std::vector<Eigen::MatrixXd> probs;
};

ForwardCache run_forward(const PredictorParams& params, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
    throw ValidationError("embedding dimension " + std::to_string(x.cols()) + " does not match predictor input " +
                          std::to_string(params.input_dim()));
  }
  if (!x.allFinite()) throw ValidationError("predictor input contains non-finite values");
  ForwardCache cache;
  cache.pre = x * params.shared_w;
  cache.pre.rowwise() += params.shared_b.transpose();
  cache.hidden = cache.pre.cwiseMax(0.0);
  for (std::size_t k = 0; k < params.head_count(); ++k) {
    Eigen::MatrixXd logits = cache.hidden * params.head_w[k];
    logits.rowwise() += params.head_b[k].transpose();
    softmax_rows(logits);
    cache.probs.push_back(std::move(logits));
  }
  return cache;
}

void check_batch(const PredictorParams& params, const AttributeBatch& batch) {
  if (batch.rows() == 0) throw ValidationError("empty batch");
  if (batch.labels.size() != batch.rows() * params.head_count()) {
    throw ValidationError("label matrix does not match the predictor heads");
  }
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    for (std::size_t k = 0; k < params.head_count(); ++k) {
      if (batch.label(i, k, params.head_count()) >= params.head_width(k)) {
        throw ValidationError("label out of range for head " + params.head_names[k]);
      }
    }
  }
}

// d loss / d pre-activation, plus the cache used to produce it.
Eigen::MatrixXd backward_to_pre(const PredictorParams& params, const AttributeBatch& batch, const ForwardCache& cache,
                                std::vector<Eigen::MatrixXd>& head_grads) {
  const std::size_t n = batch.rows();
  const std::size_t heads = params.head_count();
  Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                   static_cast<Eigen::Index>(params.hidden_dim()));
  head_grads.clear();
  for (std::size_t k = 0; k < heads; ++k) {
    const double scale =
        1.0 / (static_cast<double>(n) * static_cast<double>(heads) * std::log(static_cast<double>(params.head_width(k))));
    Eigen::MatrixXd g = cache.probs[k];
    for (std::size_t i = 0; i < n; ++i) {
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.label(i, k, heads))) -= 1.0;
    }
    g *= scale;
    d_hidden.noalias() += g * params.head_w[k].transpose();
    head_grads.push_back(std::move(g));
  }
  return d_hidden.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
}

}  // namespace

std::size_t PredictorParams::head_index(std::string_view name) const {
  for (std::size_t k = 0; k < head_names.size(); ++k) {
    if (head_names[k] == name) return k;
  }
  throw ValidationError("predictor has no head for attribute " + std::string(name));
}

PredictorParams PredictorParams::zeros_like() const {
  PredictorParams out = *this;
  for_each_tensor(out, [](double* data, std::size_t size) { std::fill(data, data + size, 0.0); });
  return out;
}

std::size_t PredictorParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor(const_cast<PredictorParams&>(*this), [&total](double*, std::size_t size) { total += size; });
  return total;
}

double& PredictorParams::coordinate(std::size_t index) {
  double* found = nullptr;
  std::size_t remaining = index;
  for_each_tensor(*this, [&](double* data, std::size_t size) {
    if (found) return;
    if (remaining < size) {
      found = data + remaining;
    } else {
      remaining -= size;
    }
  });
  if (!found) throw ValidationError("parameter coordinate out of range");
  return *found;
}

double PredictorParams::coordinate(std::size_t index) const {
  return const_cast<PredictorParams&>(*this).coordinate(index);
}

bool PredictorParams::operator==(const PredictorParams& other) const {
  if (head_names != other.head_names || head_w.size() != other.head_w.size()) return false;
  auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; };
  if (!same(shared_w, other.shared_w) || !same(shared_b, other.shared_b)) return false;
  for (std::size_t k = 0; k < head_w.size(); ++k) {
    if (!same(head_w[k], other.head_w[k]) || !same(head_b[k], other.head_b[k])) return false;
  }
  return true;
}

PredictorParams init_predictor(std::size_t input_dim, std::size_t hidden_dim, const std::vector<std::string>& names,
                               const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0 || names.empty() || names.size() != widths.size()) {
    throw ValidationError("invalid predictor dimensions");
  }
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m, double bound) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
  };
  auto fill_vec = [&rng](Eigen::VectorXd& v, double bound) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  };
  PredictorParams p;
  p.head_names = names;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  p.shared_w.resize(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(hidden_dim));
  p.shared_b.resize(static_cast<Eigen::Index>(hidden_dim));
  fill(p.shared_w, b1);
  fill_vec(p.shared_b, b1);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (std::size_t w : widths) {
    if (w < 2) throw ValidationError("head width must be at least 2");
    Eigen::MatrixXd hw(static_cast<Eigen::Index>(hidden_dim), static_cast<Eigen::Index>(w));
    Eigen::VectorXd hb(static_cast<Eigen::Index>(w));
    fill(hw, b2);
    fill_vec(hb, b2);
    p.head_w.push_back(std::move(hw));
    p.head_b.push_back(std::move(hb));
  }
  return p;
}

PredictorParams init_predictor_for(const CausalModel& model, std::size_t input_dim, const TrainConfig& config) {
  std::vector<std::string> names;
  std::vector<std::size_t> widths;
  for (auto a : model.attribute_indices()) {
    names.push_back(model.variable(a).name);
    widths.push_back(model.variable(a).cardinality());
  }
  return init_predictor(input_dim, config.hidden_dim, names, widths, config.seed);
}

AttrDists forward(const PredictorParams& params, const Eigen::VectorXd& x) {
  auto cache = run_forward(params, x.transpose());
  AttrDists out;
  for (auto& p : cache.probs) out.push_back(p.row(0).transpose());
  return out;
}

std::vector<Eigen::MatrixXd> forward_batch(const PredictorParams& params, const Eigen::MatrixXd& x) {
  return run_forward(params, x).probs;
}

double loss(const PredictorParams& params, const AttributeBatch& batch, double weight_decay) {
  check_batch(params, batch);
  auto cache = run_forward(params, batch.x);
  const std::size_t heads = params.head_count();
  double total = 0.0;
  for (std::size_t k = 0; k < heads; ++k) {
    const double norm = std::log(static_cast<double>(params.head_width(k)));
    double ce = 0.0;
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      ce -= std::log(cache.probs[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.label(i, k, heads))));
    }
    total += ce / norm;
  }
  total /= static_cast<double>(batch.rows() * heads);
  if (weight_decay != 0.0) {
    double sq = params.shared_w.squaredNorm();
    for (const auto& w : params.head_w) sq += w.squaredNorm();
    total += 0.5 * weight_decay * sq;
  }
  return total;
}

PredictorParams grad(const PredictorParams& params, const AttributeBatch& batch, double weight_decay) {
  check_batch(params, batch);
  auto cache = run_forward(params, batch.x);
  std::vector<Eigen::MatrixXd> head_grads;
  Eigen::MatrixXd d_pre = backward_to_pre(params, batch, cache, head_grads);
  PredictorParams g;
  g.head_names = params.head_names;
  g.shared_w.noalias() = batch.x.transpose() * d_pre;
  g.shared_b = d_pre.colwise().sum().transpose();
  if (weight_decay != 0.0) g.shared_w += weight_decay * params.shared_w;
  for (std::size_t k = 0; k < params.head_count(); ++k) {
    Eigen::MatrixXd hw = cache.hidden.transpose() * head_grads[k];
    if (weight_decay != 0.0) hw += weight_decay * params.head_w[k];
    g.head_w.push_back(std::move(hw));
    g.head_b.push_back(head_grads[k].colwise().sum().transpose());
  }
  return g;
}

Eigen::MatrixXd input_grad(const PredictorParams& params, const AttributeBatch& batch) {
  check_batch(params, batch);
  auto cache = run_forward(params, batch.x);
  std::vector<Eigen::MatrixXd> head_grads;
  Eigen::MatrixXd d_pre = backward_to_pre(params, batch, cache, head_grads);
  return d_pre * params.shared_w.transpose();
}

void MomentumSgd::step(const std::vector<Slot>& slots) {
  if (velocity_.empty()) {
    for (const auto& s : slots) velocity_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.size)));
  }
  if (velocity_.size() != slots.size()) throw ValidationError("optimizer slots changed between steps");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> value(slots[i].value, static_cast<Eigen::Index>(slots[i].size));
    Eigen::Map<const Eigen::VectorXd> g(slots[i].grad, static_cast<Eigen::Index>(slots[i].size));
    velocity_[i] = momentum_ * velocity_[i] + g;
    value -= lr_ * velocity_[i];
  }
}

std::vector<MomentumSgd::Slot> optimizer_slots(PredictorParams& params, const PredictorParams& grads) {
  std::vector<MomentumSgd::Slot> slots;
  auto add = [&slots](auto& p, const auto& g) {
    slots.push_back({p.data(), g.data(), static_cast<std::size_t>(p.size())});
  };
  add(params.shared_w, grads.shared_w);
  add(params.shared_b, grads.shared_b);
  for (std::size_t k = 0; k < params.head_count(); ++k) add(params.head_w[k], grads.head_w[k]);
  for (std::size_t k = 0; k < params.head_count(); ++k) add(params.head_b[k], grads.head_b[k]);
  return slots;
}

double mean_attribute_accuracy(const PredictorParams& params, const AttributeBatch& batch) {
  check_batch(params, batch);
  auto probs = forward_batch(params, batch.x);
  const std::size_t heads = params.head_count();
  double correct = 0.0;
  for (std::size_t k = 0; k < heads; ++k) {
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      Eigen::Index arg = 0;
      probs[k].row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      if (static_cast<std::size_t>(arg) == batch.label(i, k, heads)) correct += 1.0;
    }
  }
  return correct / static_cast<double>(batch.rows() * heads);
}

TrainResult train(const TrainConfig& config, const PredictorParams& init, const AttributeBatch& train_split,
                  const AttributeBatch& val_split) {
  if (train_split.rows() == 0 || val_split.rows() == 0) throw ValidationError("train: empty split");
  if (config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0)) {
    throw ValidationError("train: epochs, batch size and learning rate must be positive");
  }
  check_batch(init, train_split);
  check_batch(init, val_split);
  const std::size_t heads = init.head_count();
  TrainResult result;
  result.params = init;
  PredictorParams current = init;
  MomentumSgd opt(config.learning_rate, config.momentum);
  Rng rng(config.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(train_split.rows());
  std::iota(order.begin(), order.end(), 0);
  double best = -1.0;
  AttributeBatch mini;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      mini.x.resize(static_cast<Eigen::Index>(end - start), train_split.x.cols());
      mini.labels.resize((end - start) * heads);
      for (std::size_t i = start; i < end; ++i) {
        mini.x.row(static_cast<Eigen::Index>(i - start)) = train_split.x.row(static_cast<Eigen::Index>(order[i]));
        for (std::size_t k = 0; k < heads; ++k) {
          mini.labels[(i - start) * heads + k] = train_split.label(order[i], k, heads);
        }
      }
      PredictorParams g = grad(current, mini, config.weight_decay);
      opt.step(optimizer_slots(current, g));
    }
    double acc = mean_attribute_accuracy(current, val_split);
    result.val_accuracy.push_back(acc);
    if (config.keep_last_epoch || acc > best) {
      best = acc;
      result.params = current;
      result.best_epoch = epoch;
    }
  }
  return result;
}

AttrDists clamp(const AttrDists& dists, const InterventionSet& interventions, const std::vector<std::string>& names) {
  if (dists.size() != names.size()) throw ValidationError("clamp: head names do not match distributions");
  AttrDists out = dists;
  for (const auto& [name, state] : interventions.assignments) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("clamp: unknown attribute " + name);
    auto& head = out[static_cast<std::size_t>(it - names.begin())];
    if (state >= static_cast<std::size_t>(head.size())) throw ValidationError("clamp: state out of range for " + name);
    head.setZero();
    head[static_cast<Eigen::Index>(state)] = 1.0;
  }
  return out;
}

Eigen::VectorXd pgd_embedding(const PredictorParams& params, const Eigen::VectorXd& x,
                              const std::vector<std::size_t>& labels, double epsilon, double step,
                              std::size_t iters) {
  if (epsilon < 0.0 || step < 0.0) throw ValidationError("pgd: epsilon and step must be nonnegative");
  AttributeBatch batch{x.transpose(), labels};
  const Eigen::RowVectorXd lo = x.transpose().array() - epsilon;
  const Eigen::RowVectorXd hi = x.transpose().array() + epsilon;
  for (std::size_t it = 0; it < iters && epsilon > 0.0; ++it) {
    Eigen::RowVectorXd g = input_grad(params, batch).row(0);
    batch.x.row(0) += step * g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    batch.x.row(0) = batch.x.row(0).cwiseMax(lo).cwiseMin(hi);
  }
  return batch.x.row(0).transpose();
}

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd matrix_from(const json& rows, std::size_t r, std::size_t c, const std::string& what) {
  if (rows.size() != r) throw ValidationError("predictor: " + what + " has wrong row count");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw ValidationError("predictor: " + what + " has wrong row width");
    for (std::size_t j = 0; j < c; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const json& values, std::size_t n, const std::string& what) {
  if (values.size() != n) throw ValidationError("predictor: " + what + " has wrong length");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = values[i].get<double>();
  return v;
}

}  // namespace

std::string serialize_predictor(const PredictorParams& params, const TrainConfig& config,
                                const std::string& dataset_digest) {
  json heads = json::array();
  for (std::size_t k = 0; k < params.head_count(); ++k) {
    heads.push_back({{"name", params.head_names[k]},
                     {"width", params.head_width(k)},
                     {"weight", matrix_json(params.head_w[k])},
                     {"bias", vector_json(params.head_b[k])}});
  }
  json doc = {{"input_dim", params.input_dim()},
              {"hidden_dim", params.hidden_dim()},
              {"shared", {{"weight", matrix_json(params.shared_w)}, {"bias", vector_json(params.shared_b)}}},
              {"heads", heads},
              {"dataset_digest", dataset_digest},
              {"config",
               {{"epochs", config.epochs},
                {"batch_size", config.batch_size},
                {"learning_rate", config.learning_rate},
                {"momentum", config.momentum},
                {"weight_decay", config.weight_decay},
                {"hidden_dim", config.hidden_dim},
                {"seed", config.seed},
                {"keep_last_epoch", config.keep_last_epoch}}}};
  return canonical_dump(doc);
}

PredictorFile parse_predictor(std::string_view text) {
  json doc = parse_json(text, "predictor");
  PredictorFile out;
  try {
    const auto input_dim = doc.at("input_dim").get<std::size_t>();
    const auto hidden_dim = doc.at("hidden_dim").get<std::size_t>();
    out.params.shared_w = matrix_from(doc.at("shared").at("weight"), input_dim, hidden_dim, "shared weight");
    out.params.shared_b = vector_from(doc.at("shared").at("bias"), hidden_dim, "shared bias");
    for (const auto& head : doc.at("heads")) {
      const auto width = head.at("width").get<std::size_t>();
      out.params.head_names.push_back(head.at("name").get<std::string>());
      out.params.head_w.push_back(matrix_from(head.at("weight"), hidden_dim, width, "head weight"));
      out.params.head_b.push_back(vector_from(head.at("bias"), width, "head bias"));
    }
    if (out.params.head_w.empty()) throw ValidationError("predictor: no heads");
    const json& c = doc.at("config");
    out.config.epochs = c.at("epochs").get<std::size_t>();
    out.config.batch_size = c.at("batch_size").get<std::size_t>();
    out.config.learning_rate = c.at("learning_rate").get<double>();
    out.config.momentum = c.at("momentum").get<double>();
    out.config.weight_decay = c.at("weight_decay").get<double>();
    out.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    out.config.seed = c.at("seed").get<std::uint64_t>();
    out.config.keep_last_epoch = c.at("keep_last_epoch").get<bool>();
    out.dataset_digest = doc.at("dataset_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("predictor: malformed document: ") + e.what());
  }
  if (!out.params.shared_w.allFinite()) throw ValidationError("predictor: non-finite weights");
  return out;
}

PredictorFile read_predictor_file(const std::string& path) { return parse_predictor(read_text_file(path)); }

void write_predictor_file(const std::string& path, const PredictorParams& params, const TrainConfig& config,
                          const std::string& dataset_digest) {
  write_text_file(path, serialize_predictor(params, config, dataset_digest));
}

}  // namespace cnpc
