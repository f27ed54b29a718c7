#include "cnpc/data_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "cnpc/error.hpp"
#include "cnpc/io.hpp"
#include "cnpc/rng.hpp"

namespace cnpc {

using nlohmann::json;

LabelTable sample_labels(const CausalModel& model, std::size_t n, std::uint64_t seed) {
  if (!model.has_cpds()) throw ValidationError("sample_labels: model has no CPDs");
  auto order = model.topological_order();
  LabelTable out;
  for (const auto& v : model.variables()) out.columns.push_back(v.name);
  out.rows = n;
  out.values.resize(n * model.size());
  Rng rng(seed);
  std::vector<std::size_t> states(model.size(), 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t v : order) {
      const auto& table = model.cpd(v).probabilities;
      const auto row = static_cast<Eigen::Index>(model.cpd_row(v, states));
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t pick = static_cast<std::size_t>(table.cols()) - 1;
      for (Eigen::Index c = 0; c < table.cols(); ++c) {
        acc += table(row, c);
        if (u < acc) {
          pick = static_cast<std::size_t>(c);
          break;
        }
      }
      // Guard against a zero-probability last state when rounding leaves acc < 1.
      while (pick > 0 && table(row, static_cast<Eigen::Index>(pick)) == 0.0) --pick;
      states[v] = pick;
    }
    for (std::size_t v = 0; v < model.size(); ++v) out.at(r, v) = states[v];
  }
  return out;
}

CausalModel mnistadd_syn() {
  std::vector<std::string> digits;
  for (int d = 0; d < 10; ++d) digits.push_back(std::to_string(d));
  std::vector<std::string> sums;
  for (int s = 0; s < 19; ++s) sums.push_back(std::to_string(s));
  std::vector<Variable> variables{{"A1", digits, Role::attribute}, {"A2", digits, Role::attribute},
                                  {"Y", sums, Role::class_label}};
  std::vector<Edge> edges{{"A1", "A2"}, {"A1", "Y"}, {"A2", "Y"}};

  Eigen::MatrixXd a1 = Eigen::MatrixXd::Constant(1, 10, 0.1);
  Eigen::MatrixXd a2 = Eigen::MatrixXd::Constant(10, 10, 0.2 / 9.0);
  for (int d = 0; d < 10; ++d) a2(d, (d + 1) % 10) = 0.8;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(100, 19);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) y(i * 10 + j, i + j) = 1.0;

  std::map<std::string, CpdTable> cpds;
  cpds["A1"] = CpdTable{"A1", {}, a1};
  cpds["A2"] = CpdTable{"A2", {"A1"}, a2};
  cpds["Y"] = CpdTable{"Y", {"A1", "A2"}, y};
  return CausalModel(std::move(variables), std::move(edges), std::move(cpds));
}

Splits split(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  Splits s;
  s.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  s.val.assign(order.begin() + static_cast<long>(n_train), order.begin() + static_cast<long>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<long>(n_train + n_val), order.end());
  return s;
}

Eigen::MatrixXd one_hot_attributes(const CausalModel& model, const LabelTable& labels) {
  auto attrs = model.attribute_indices();
  std::size_t width = 0;
  for (auto a : attrs) width += model.variable(a).cardinality();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.rows), static_cast<Eigen::Index>(width));
  std::vector<std::size_t> cols;
  for (auto a : attrs) cols.push_back(labels.column_index(model.variable(a).name));
  for (std::size_t r = 0; r < labels.rows; ++r) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + labels.at(r, cols[k]))) = 1.0;
      offset += model.variable(attrs[k]).cardinality();
    }
  }
  return out;
}

namespace {

struct Autoencoder {
  // Encoder in -> hidden -> latent, decoder latent -> hidden -> in.
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  Autoencoder(std::size_t in, std::size_t hidden, std::size_t latent, Rng& rng) {
    const std::size_t dims[5] = {in, hidden, latent, hidden, in};
    for (int l = 0; l < 4; ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      Eigen::MatrixXd m(static_cast<Eigen::Index>(dims[l]), static_cast<Eigen::Index>(dims[l + 1]));
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
      Eigen::VectorXd v(static_cast<Eigen::Index>(dims[l + 1]));
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
      w.push_back(std::move(m));
      b.push_back(std::move(v));
    }
  }

  // Layers 0 and 2 are relu; 1 (latent) and 3 (reconstruction) are linear.
  std::vector<Eigen::MatrixXd> forward(const Eigen::MatrixXd& x, int layers = 4) const {
    std::vector<Eigen::MatrixXd> acts{x};
    for (int l = 0; l < layers; ++l) {
      Eigen::MatrixXd z = acts.back() * w[static_cast<std::size_t>(l)];
      z.rowwise() += b[static_cast<std::size_t>(l)].transpose();
      if (l == 0 || l == 2) z = z.cwiseMax(0.0);
      acts.push_back(std::move(z));
    }
    return acts;
  }

  void train_step(const Eigen::MatrixXd& x, MomentumSgd& opt) {
    auto acts = forward(x);
    const double scale = 2.0 / static_cast<double>(x.rows() * x.cols());
    Eigen::MatrixXd delta = (acts[4] - x) * scale;
    std::vector<Eigen::MatrixXd> gw(4);
    std::vector<Eigen::VectorXd> gb(4);
    for (int l = 3; l >= 0; --l) {
      const auto ul = static_cast<std::size_t>(l);
      gw[ul] = acts[ul].transpose() * delta;
      gb[ul] = delta.colwise().sum().transpose();
      if (l > 0) {
        delta = delta * w[ul].transpose();
        if (l == 1 || l == 3) delta = delta.cwiseProduct((acts[ul].array() > 0.0).cast<double>().matrix());
      }
    }
    std::vector<MomentumSgd::Slot> slots;
    for (std::size_t l = 0; l < 4; ++l) {
      slots.push_back({w[l].data(), gw[l].data(), static_cast<std::size_t>(w[l].size())});
      slots.push_back({b[l].data(), gb[l].data(), static_cast<std::size_t>(b[l].size())});
    }
    opt.step(slots);
  }
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// Column-wise z-scores using statistics of the given rows.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd sub = gather_rows(m, rows);
  Eigen::RowVectorXd mean = sub.colwise().mean();
  Eigen::RowVectorXd sd =
      ((sub.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(sub.rows())).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (!(sd[j] > 0.0)) sd[j] = 1.0;
  }
  return (m.rowwise() - mean).array().rowwise() / sd.array();
}

}  // namespace

Eigen::MatrixXd embed(const CausalModel& model, const LabelTable& labels, const std::vector<std::size_t>& train_rows,
                      const EmbedConfig& config) {
  if (labels.rows == 0 || train_rows.empty()) throw ValidationError("embed: empty label table");
  if (config.latent_dim == 0 || config.hidden_dim == 0 || config.batch_size == 0) {
    throw ValidationError("embed: dimensions must be positive");
  }
  Eigen::MatrixXd x = one_hot_attributes(model, labels);
  Rng rng(config.seed);
  Autoencoder ae(static_cast<std::size_t>(x.cols()), config.hidden_dim, config.latent_dim, rng);
  MomentumSgd opt(config.learning_rate, config.momentum);
  std::vector<std::size_t> order = train_rows;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(std::min(order.size(), start + config.batch_size)));
      ae.train_step(gather_rows(x, rows), opt);
    }
  }
  // Encoder output is put on unit scale before the noise is mixed in, so the
  // noise weight means the same thing whatever scale the latent ends up at.
  Eigen::MatrixXd encoded = standardize(ae.forward(x, 2).back(), train_rows);
  Eigen::MatrixXd out(encoded.rows(), encoded.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = (1.0 - config.noise_weight) * encoded(i, j) + config.noise_weight * rng.normal();
  return standardize(out, train_rows);
}

AttributeBatch Dataset::batch(const std::vector<std::size_t>& rows) const {
  AttributeBatch out;
  out.x = gather_rows(embeddings, rows);
  auto attrs = model.attribute_indices();
  std::vector<std::size_t> cols;
  for (auto a : attrs) cols.push_back(labels.column_index(model.variable(a).name));
  out.labels.reserve(rows.size() * attrs.size());
  for (auto r : rows) {
    for (auto c : cols) out.labels.push_back(labels.at(r, c));
  }
  return out;
}

std::vector<std::size_t> Dataset::attribute_labels(std::size_t row) const {
  std::vector<std::size_t> out;
  for (auto a : model.attribute_indices()) out.push_back(labels.at(row, labels.column_index(model.variable(a).name)));
  return out;
}

std::size_t Dataset::class_label(std::size_t row) const {
  return labels.at(row, labels.column_index(model.variable(model.class_index()).name));
}

Dataset make_dataset(const CausalModel& model, const DatasetConfig& config) {
  require_valid(model);
  if (config.n < 10) throw ValidationError("dataset needs at least 10 instances");
  Dataset ds;
  ds.model = model;
  ds.seed = config.seed;
  ds.embed_config = config.embed;
  ds.embed_config.seed = config.seed;
  ds.labels = sample_labels(model, config.n, config.seed);
  ds.splits = split(config.n, config.seed + 1);
  Eigen::MatrixXd base = embed(model, ds.labels, ds.splits.train, ds.embed_config);

  if (config.spurious_channels > 0) {
    auto attrs = model.attribute_indices();
    Rng rng(config.seed + 2);
    ds.spurious.channels_per_attribute = config.spurious_channels;
    for (auto a : attrs) {
      Eigen::MatrixXd code(static_cast<Eigen::Index>(model.variable(a).cardinality()),
                           static_cast<Eigen::Index>(config.spurious_channels));
      for (Eigen::Index i = 0; i < code.rows(); ++i)
        for (Eigen::Index j = 0; j < code.cols(); ++j) code(i, j) = rng.normal();
      ds.spurious.codes.push_back(std::move(code));
    }
    const auto extra = static_cast<Eigen::Index>(attrs.size() * config.spurious_channels);
    Eigen::MatrixXd full(base.rows(), base.cols() + extra);
    full.leftCols(base.cols()) = base;
    for (std::size_t r = 0; r < config.n; ++r) {
      for (std::size_t k = 0; k < attrs.size(); ++k) {
        const std::size_t s = ds.labels.at(r, ds.labels.column_index(model.variable(attrs[k]).name));
        for (std::size_t c = 0; c < config.spurious_channels; ++c) {
          full(static_cast<Eigen::Index>(r), base.cols() + static_cast<Eigen::Index>(k * config.spurious_channels + c)) =
              ds.spurious.codes[k](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) +
              ds.spurious.noise_std * rng.normal();
        }
      }
    }
    base = std::move(full);
  }
  ds.embeddings = std::move(base);
  ds.base_digest = dataset_digest(ds);
  return ds;
}

CorruptionConfig CorruptionConfig::parse(std::string_view text) {
  std::vector<std::string> parts;
  std::string current;
  for (char ch : text) {
    if (ch == ':') {
      parts.push_back(current);
      current.clear();
    } else {
      current += ch;
    }
  }
  parts.push_back(current);
  auto number = [&text](const std::string& s) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("corruption '" + std::string(text) + "': bad number '" + s + "'");
    }
  };
  CorruptionConfig c;
  const std::string& mode = parts[0];
  if (mode == "none" && parts.size() == 1) {
    c.mode = Mode::none;
  } else if (mode == "gaussian" && parts.size() == 2) {
    c.mode = Mode::gaussian;
    c.sigma = number(parts[1]);
    if (c.sigma < 0.0) throw ValidationError("corruption gaussian: sigma must be nonnegative");
  } else if (mode == "permute" && parts.size() == 2) {
    c.mode = Mode::permute;
    double s = number(parts[1]);
    if (s < 0.0 || s != std::floor(s)) throw ValidationError("corruption permute: seed must be a nonnegative integer");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (mode == "pgd" && parts.size() == 4) {
    c.mode = Mode::pgd;
    c.epsilon = number(parts[1]);
    c.step = number(parts[2]);
    double iters = number(parts[3]);
    if (c.epsilon < 0.0 || c.step < 0.0 || iters < 0.0 || iters != std::floor(iters)) {
      throw ValidationError("corruption pgd: parameters must be nonnegative");
    }
    c.iters = static_cast<std::size_t>(iters);
  } else if (mode == "spurious_flip" && parts.size() == 1) {
    c.mode = Mode::spurious_flip;
  } else {
    throw ValidationError("unknown corruption '" + std::string(text) +
                          "' (expected none, gaussian:S, permute:SEED, pgd:EPS:STEP:ITERS or spurious_flip)");
  }
  return c;
}

std::string CorruptionConfig::tag() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  switch (mode) {
    case Mode::none:
      return "none";
    case Mode::gaussian:
      return "gaussian_" + num(sigma);
    case Mode::permute:
      return "permute_" + std::to_string(seed);
    case Mode::pgd:
      return "pgd_" + num(epsilon) + "_" + num(step) + "_" + std::to_string(iters);
    case Mode::spurious_flip:
      return "spurious_flip";
  }
  return "none";
}

Dataset corrupt(const Dataset& dataset, const CorruptionConfig& config, const PredictorParams* predictor) {
  Dataset out = dataset;
  out.corruption = config.tag();
  const auto& test = dataset.splits.test;
  switch (config.mode) {
    case CorruptionConfig::Mode::none:
      break;
    case CorruptionConfig::Mode::gaussian: {
      Rng rng(dataset.seed * 1000003ULL + 17);
      for (auto r : test) {
        for (Eigen::Index j = 0; j < out.embeddings.cols(); ++j) {
          out.embeddings(static_cast<Eigen::Index>(r), j) += config.sigma * rng.normal();
        }
      }
      break;
    }
    case CorruptionConfig::Mode::permute: {
      std::vector<std::size_t> perm(static_cast<std::size_t>(out.embeddings.cols()));
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(config.seed);
      rng.shuffle(perm);
      for (auto r : test) {
        const auto row = static_cast<Eigen::Index>(r);
        for (std::size_t j = 0; j < perm.size(); ++j) {
          out.embeddings(row, static_cast<Eigen::Index>(j)) = dataset.embeddings(row, static_cast<Eigen::Index>(perm[j]));
        }
      }
      break;
    }
    case CorruptionConfig::Mode::pgd: {
      if (!predictor) throw ValidationError("pgd corruption needs a trained predictor");
      for (auto r : test) {
        const auto row = static_cast<Eigen::Index>(r);
        out.embeddings.row(row) = pgd_embedding(*predictor, dataset.embeddings.row(row).transpose(),
                                                dataset.attribute_labels(r), config.epsilon, config.step,
                                                config.iters)
                                      .transpose();
      }
      break;
    }
    case CorruptionConfig::Mode::spurious_flip: {
      if (!dataset.spurious.enabled()) {
        throw ValidationError("spurious_flip needs a dataset generated with spurious channels");
      }
      const std::size_t c = dataset.spurious.channels_per_attribute;
      const auto base = out.embeddings.cols() - static_cast<Eigen::Index>(dataset.spurious.codes.size() * c);
      for (auto r : test) {
        auto states = dataset.attribute_labels(r);
        for (std::size_t k = 0; k < states.size(); ++k) {
          const auto& code = dataset.spurious.codes[k];
          const auto s = static_cast<Eigen::Index>(states[k]);
          const auto flipped = code.rows() - 1 - s;
          for (std::size_t j = 0; j < c; ++j) {
            const auto col = base + static_cast<Eigen::Index>(k * c + j);
            out.embeddings(static_cast<Eigen::Index>(r), col) +=
                code(flipped, static_cast<Eigen::Index>(j)) - code(s, static_cast<Eigen::Index>(j));
          }
        }
      }
      break;
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::string line;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

std::string labels_csv(const CausalModel& model, const LabelTable& labels) {
  std::string out;
  for (std::size_t c = 0; c < labels.columns.size(); ++c) {
    if (c) out += ',';
    out += labels.columns[c];
  }
  out += '\n';
  std::vector<const Variable*> vars;
  for (const auto& name : labels.columns) vars.push_back(&model.variable(model.index_of(name)));
  for (std::size_t r = 0; r < labels.rows; ++r) {
    for (std::size_t c = 0; c < labels.columns.size(); ++c) {
      if (c) out += ',';
      out += vars[c]->states[labels.at(r, c)];
    }
    out += '\n';
  }
  return out;
}

LabelTable parse_labels_csv(const CausalModel& model, std::string_view text) {
  auto lines = lines_of(text);
  if (lines.empty()) throw ValidationError("labels.csv: missing header");
  LabelTable out;
  out.columns = split_line(lines[0]);
  std::vector<const Variable*> vars;
  for (const auto& name : out.columns) {
    auto v = model.find(name);
    if (!v) throw ValidationError("labels.csv: unknown column " + name);
    vars.push_back(&model.variable(*v));
  }
  out.rows = lines.size() - 1;
  out.values.reserve(out.rows * out.columns.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto cells = split_line(lines[r]);
    if (cells.size() != out.columns.size()) {
      throw ValidationError("labels.csv row " + std::to_string(r - 1) + ": expected " +
                            std::to_string(out.columns.size()) + " values, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& states = vars[c]->states;
      auto it = std::find(states.begin(), states.end(), cells[c]);
      if (it == states.end()) {
        throw ValidationError("labels.csv row " + std::to_string(r - 1) + ", column " + out.columns[c] +
                              ": unknown state '" + cells[c] + "'");
      }
      out.values.push_back(static_cast<std::size_t>(it - states.begin()));
    }
  }
  return out;
}

std::string embeddings_csv(const Eigen::MatrixXd& embeddings) {
  std::string out;
  for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
    if (j) out += ',';
    out += "e" + std::to_string(j);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
      if (j) out += ',';
      out += format_double(embeddings(i, j));
    }
    out += '\n';
  }
  return out;
}

Eigen::MatrixXd parse_embeddings_csv(std::string_view text) {
  auto lines = lines_of(text);
  if (lines.empty()) throw ValidationError("embeddings.csv: missing header");
  const std::size_t cols = split_line(lines[0]).size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto cells = split_line(lines[r]);
    if (cells.size() != cols) {
      throw ValidationError("embeddings.csv row " + std::to_string(r - 1) + ": expected " + std::to_string(cols) +
                            " values, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      char* end = nullptr;
      double v = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || *end != '\0' || !std::isfinite(v)) {
        throw ValidationError("embeddings.csv row " + std::to_string(r - 1) + ", column e" + std::to_string(c) +
                              ": not a finite number '" + cells[c] + "'");
      }
      out(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return out;
}

std::string splits_json(const Splits& splits) {
  return canonical_dump(json{{"train", splits.train}, {"val", splits.val}, {"test", splits.test}});
}

Splits parse_splits_json(std::string_view text, std::size_t n) {
  json doc = parse_json(text, "splits");
  Splits s;
  try {
    s.train = doc.at("train").get<std::vector<std::size_t>>();
    s.val = doc.at("val").get<std::vector<std::size_t>>();
    s.test = doc.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("splits.json: malformed document: ") + e.what());
  }
  std::vector<bool> seen(n, false);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (auto i : *part) {
      if (i >= n || seen[i]) throw ValidationError("splits.json: index " + std::to_string(i) + " out of range or repeated");
      seen[i] = true;
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw ValidationError("splits.json: splits do not cover every row");
  return s;
}

std::string dataset_digest(const Dataset& dataset) {
  return sha256_hex(labels_csv(dataset.model, dataset.labels) + embeddings_csv(dataset.embeddings) +
                    splits_json(dataset.splits));
}

namespace {

json manifest_json(const Dataset& ds) {
  json codes = json::array();
  for (const auto& code : ds.spurious.codes) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < code.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < code.cols(); ++j) row.push_back(code(i, j));
      rows.push_back(std::move(row));
    }
    codes.push_back(std::move(rows));
  }
  const auto& e = ds.embed_config;
  return {{"seed", ds.seed},
          {"n", ds.size()},
          {"model_digest", structure_digest(ds.model)},
          {"dataset_digest", ds.base_digest},
          {"embed",
           {{"latent_dim", e.latent_dim},
            {"hidden_dim", e.hidden_dim},
            {"epochs", e.epochs},
            {"batch_size", e.batch_size},
            {"learning_rate", e.learning_rate},
            {"momentum", e.momentum},
            {"noise_weight", e.noise_weight},
            {"seed", e.seed}}},
          {"spurious",
           {{"channels_per_attribute", ds.spurious.channels_per_attribute},
            {"noise_std", ds.spurious.noise_std},
            {"codes", codes}}}};
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  const std::filesystem::path root(dir);
  if (dataset.corruption != "none") {
    write_text_file((root / ("embeddings_" + dataset.corruption + ".csv")).string(), embeddings_csv(dataset.embeddings));
    return;
  }
  write_model_file(dataset.model, (root / "model.json").string());
  write_text_file((root / "labels.csv").string(), labels_csv(dataset.model, dataset.labels));
  write_text_file((root / "splits.json").string(), splits_json(dataset.splits));
  write_text_file((root / "embeddings.csv").string(), embeddings_csv(dataset.embeddings));
  json manifest = manifest_json(dataset);
  if (dataset.base_digest.empty()) manifest["dataset_digest"] = dataset_digest(dataset);
  write_text_file((root / "manifest.json").string(), canonical_dump(manifest));
}

Dataset read_dataset(const std::string& dir, const std::optional<std::string>& corruption) {
  const std::filesystem::path root(dir);
  Dataset ds;
  ds.model = read_model_file((root / "model.json").string());
  ds.labels = parse_labels_csv(ds.model, read_text_file((root / "labels.csv").string()));
  for (const auto& v : ds.model.variables()) ds.labels.column_index(v.name);
  ds.embeddings = parse_embeddings_csv(read_text_file((root / "embeddings.csv").string()));
  if (static_cast<std::size_t>(ds.embeddings.rows()) != ds.labels.rows) {
    throw ValidationError("embeddings.csv has " + std::to_string(ds.embeddings.rows()) + " rows but labels.csv has " +
                          std::to_string(ds.labels.rows));
  }
  ds.splits = parse_splits_json(read_text_file((root / "splits.json").string()), ds.labels.rows);
  json manifest = parse_json(read_text_file((root / "manifest.json").string()), "manifest");
  try {
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    const json& e = manifest.at("embed");
    ds.embed_config.latent_dim = e.at("latent_dim").get<std::size_t>();
    ds.embed_config.hidden_dim = e.at("hidden_dim").get<std::size_t>();
    ds.embed_config.epochs = e.at("epochs").get<std::size_t>();
    ds.embed_config.batch_size = e.at("batch_size").get<std::size_t>();
    ds.embed_config.learning_rate = e.at("learning_rate").get<double>();
    ds.embed_config.momentum = e.at("momentum").get<double>();
    ds.embed_config.noise_weight = e.at("noise_weight").get<double>();
    ds.embed_config.seed = e.at("seed").get<std::uint64_t>();
    const json& sp = manifest.at("spurious");
    ds.spurious.channels_per_attribute = sp.at("channels_per_attribute").get<std::size_t>();
    ds.spurious.noise_std = sp.at("noise_std").get<double>();
    for (const auto& code : sp.at("codes")) {
      auto rows = code.get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows.empty() ? 0 : rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      ds.spurious.codes.push_back(std::move(m));
    }
    if (manifest.at("model_digest").get<std::string>() != structure_digest(ds.model)) {
      throw ValidationError("manifest.json: model digest does not match model.json");
    }
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("manifest.json: malformed document: ") + ex.what());
  }
  ds.base_digest = dataset_digest(ds);
  if (corruption && *corruption != "none") {
    ds.embeddings = parse_embeddings_csv(read_text_file((root / ("embeddings_" + *corruption + ".csv")).string()));
    if (static_cast<std::size_t>(ds.embeddings.rows()) != ds.labels.rows) {
      throw ValidationError("embeddings_" + *corruption + ".csv row count does not match labels.csv");
    }
    ds.corruption = *corruption;
  }
  return ds;
}

}  // namespace cnpc
