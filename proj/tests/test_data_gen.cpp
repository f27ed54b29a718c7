#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "cnpc/data_gen.hpp"
#include "cnpc/error.hpp"
#include "cnpc/exact_oracle.hpp"
#include "cnpc/io.hpp"
#include "support.hpp"

using namespace cnpc;
using namespace cnpc::testing;

namespace {

DatasetConfig small_config(std::uint64_t seed, std::size_t spurious = 0) {
  DatasetConfig c;
  c.n = 300;
  c.seed = seed;
  c.embed.epochs = 3;
  c.embed.latent_dim = 8;
  c.embed.hidden_dim = 16;
  c.spurious_channels = spurious;
  return c;
}

std::string read(const std::filesystem::path& p) { return read_text_file(p.string()); }

}  // namespace

TEST_CASE("the synthetic digit-sum model") {
  CausalModel m = mnistadd_syn();
  require_valid(m);
  CHECK(m.variable(m.class_index()).name == "Y");
  CHECK(m.variable(m.class_index()).cardinality() == 19);
  CHECK(oracle::conditional(m, {{"A2", 5}}, {{"A1", 4}}) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(oracle::conditional(m, {{"A2", 0}}, {{"A1", 9}}) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(oracle::conditional(m, {{"A2", 2}}, {{"A1", 4}}) == doctest::Approx(0.2 / 9.0).epsilon(1e-14));
  CHECK(oracle::conditional(m, {{"Y", 9}}, {{"A1", 4}, {"A2", 5}}) == 1.0);
  CHECK(oracle::marginal(m, {{"A1", 7}}) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("ancestral sampling matches the model") {
  CausalModel m = mnistadd_syn();
  LabelTable t = sample_labels(m, 100000, 5);
  CHECK(t.rows == 100000);
  std::size_t follow = 0;
  std::size_t sum_ok = 0;
  for (std::size_t r = 0; r < t.rows; ++r) {
    if (t.at(r, 1) == (t.at(r, 0) + 1) % 10) ++follow;
    if (t.at(r, 2) == t.at(r, 0) + t.at(r, 1)) ++sum_ok;
  }
  CHECK(std::abs(static_cast<double>(follow) / 1e5 - 0.8) < 0.01);
  CHECK(sum_ok == t.rows);
  CHECK(sample_labels(m, 50, 9).values == sample_labels(m, 50, 9).values);
  CHECK(sample_labels(m, 50, 9).values != sample_labels(m, 50, 10).values);

  // a zero-probability state is never drawn
  LabelTable z = sample_labels(fork_model(0.5, 0.0, 1.0, 0.5, 0.5), 2000, 3);
  for (std::size_t r = 0; r < z.rows; ++r) {
    if (z.at(r, 0) == 0) CHECK(z.at(r, 1) == 0);
    if (z.at(r, 0) == 1) CHECK(z.at(r, 1) == 1);
  }
}

TEST_CASE("split sizes and coverage") {
  Splits s = split(10, 1);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);
  Splits odd = split(1234, 1);
  CHECK(odd.train.size() == 987);
  CHECK(odd.val.size() == 123);
  CHECK(odd.test.size() == 124);
  std::set<std::size_t> all(odd.train.begin(), odd.train.end());
  all.insert(odd.val.begin(), odd.val.end());
  all.insert(odd.test.begin(), odd.test.end());
  CHECK(all.size() == 1234);
  CHECK(split(1234, 1) == odd);
  CHECK_FALSE(split(1234, 2) == odd);
}

TEST_CASE("one-hot attributes") {
  CausalModel m = mnistadd_syn();
  LabelTable t = sample_labels(m, 5, 1);
  Eigen::MatrixXd x = one_hot_attributes(m, t);
  CHECK(x.cols() == 20);
  for (Eigen::Index r = 0; r < 5; ++r) {
    CHECK(x.row(r).sum() == 2.0);
    CHECK(x(r, static_cast<Eigen::Index>(t.at(static_cast<std::size_t>(r), 0))) == 1.0);
    CHECK(x(r, 10 + static_cast<Eigen::Index>(t.at(static_cast<std::size_t>(r), 1))) == 1.0);
  }
}

TEST_CASE("dataset construction is deterministic and standardized") {
  Dataset a = make_dataset(mnistadd_syn(), small_config(7));
  Dataset b = make_dataset(mnistadd_syn(), small_config(7));
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.base_digest == b.base_digest);
  CHECK(a.base_digest == dataset_digest(a));
  CHECK(a.embeddings.cols() == 8);
  Eigen::MatrixXd train(static_cast<Eigen::Index>(a.splits.train.size()), a.embeddings.cols());
  for (std::size_t i = 0; i < a.splits.train.size(); ++i) {
    train.row(static_cast<Eigen::Index>(i)) = a.embeddings.row(static_cast<Eigen::Index>(a.splits.train[i]));
  }
  Eigen::RowVectorXd mean = train.colwise().mean();
  Eigen::RowVectorXd var = (train.rowwise() - mean).array().square().colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-9);

  Dataset other = make_dataset(mnistadd_syn(), small_config(8));
  CHECK(other.base_digest != a.base_digest);
  AttributeBatch batch = a.batch({0, 3});
  CHECK(batch.labels == std::vector<std::size_t>{a.labels.at(0, 0), a.labels.at(0, 1), a.labels.at(3, 0), a.labels.at(3, 1)});
  CHECK(a.class_label(3) == a.labels.at(3, 2));
  CHECK_THROWS_AS(make_dataset(mnistadd_syn(), [] {
                    DatasetConfig c;
                    c.n = 5;
                    return c;
                  }()),
                  ValidationError);
}

TEST_CASE("corruptions touch only the test rows") {
  Dataset d = make_dataset(mnistadd_syn(), small_config(3, 2));
  CHECK(d.embeddings.cols() == 8 + 2 * 2);
  std::set<std::size_t> test(d.splits.test.begin(), d.splits.test.end());
  auto untouched = [&](const Dataset& c) {
    for (std::size_t r = 0; r < d.size(); ++r) {
      if (!test.count(r) && c.embeddings.row(static_cast<Eigen::Index>(r)) != d.embeddings.row(static_cast<Eigen::Index>(r))) {
        return false;
      }
    }
    return true;
  };

  Dataset g0 = corrupt(d, CorruptionConfig::parse("gaussian:0"));
  CHECK(g0.embeddings == d.embeddings);
  CHECK(g0.corruption == "gaussian_0");
  Dataset g = corrupt(d, CorruptionConfig::parse("gaussian:2.5"));
  CHECK(untouched(g));
  CHECK(g.embeddings != d.embeddings);
  CHECK(g.base_digest == d.base_digest);

  Dataset p = corrupt(d, CorruptionConfig::parse("permute:4"));
  CHECK(untouched(p));
  const auto row = static_cast<Eigen::Index>(d.splits.test[0]);
  Eigen::VectorXd orig = d.embeddings.row(row);
  Eigen::VectorXd perm = p.embeddings.row(row);
  std::vector<double> so(orig.data(), orig.data() + orig.size());
  std::vector<double> sp(perm.data(), perm.data() + perm.size());
  std::sort(so.begin(), so.end());
  std::sort(sp.begin(), sp.end());
  CHECK(so == sp);

  Dataset f = corrupt(d, CorruptionConfig::parse("spurious_flip"));
  CHECK(untouched(f));
  CHECK(f.embeddings.leftCols(8) == d.embeddings.leftCols(8));
  const std::size_t r0 = d.splits.test[0];
  const std::size_t s0 = d.attribute_labels(r0)[0];
  const auto shift = f.embeddings(row, 8) - d.embeddings(row, 8);
  CHECK(shift == doctest::Approx(d.spurious.codes[0](static_cast<Eigen::Index>(9 - s0), 0) -
                                 d.spurious.codes[0](static_cast<Eigen::Index>(s0), 0)));

  Dataset plain = make_dataset(mnistadd_syn(), small_config(3));
  CHECK_THROWS_AS(corrupt(plain, CorruptionConfig::parse("spurious_flip")), ValidationError);
  CHECK_THROWS_AS(corrupt(plain, CorruptionConfig::parse("pgd:0.1:0.05:3")), ValidationError);
}

TEST_CASE("corruption specs") {
  CHECK(CorruptionConfig::parse("none").mode == CorruptionConfig::Mode::none);
  CHECK(CorruptionConfig::parse("gaussian:3").tag() == "gaussian_3");
  CHECK(CorruptionConfig::parse("gaussian:0.25").tag() == "gaussian_0.25");
  CHECK(CorruptionConfig::parse("pgd:0.5:0.1:10").tag() == "pgd_0.5_0.1_10");
  CHECK(CorruptionConfig::parse("permute:12").tag() == "permute_12");
  for (const char* bad : {"gaussian", "gaussian:-1", "gaussian:x", "permute:1.5", "pgd:1:2", "blur:3", ""}) {
    CHECK_THROWS_AS(CorruptionConfig::parse(bad), ValidationError);
  }
}

TEST_CASE("csv parsing errors name the row and column") {
  CausalModel m = mnistadd_syn();
  try {
    parse_labels_csv(m, "A1,A2,Y\n1,2,3\n1,12,3\n");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("row 1, column A2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_labels_csv(m, "A1,A2,Y\n1,2\n"), ValidationError);
  CHECK_THROWS_AS(parse_labels_csv(m, "A1,B\n1,2\n"), ValidationError);
  try {
    parse_embeddings_csv("e0,e1\n0.5,1\n0.1,abc\n");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("row 1, column e1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_embeddings_csv("e0,e1\n0.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_embeddings_csv("e0\nnan\n"), ValidationError);
  CHECK_THROWS_AS(parse_splits_json(R"({"train":[0,1],"val":[1],"test":[]})", 3), ValidationError);
  CHECK_THROWS_AS(parse_splits_json(R"({"train":[0],"val":[1],"test":[]})", 3), ValidationError);
}

TEST_CASE("dataset directory round trip") {
  Dataset d = make_dataset(mnistadd_syn(), small_config(11, 1));
  auto dir = scratch_dir("dataset_io");
  write_dataset(d, dir.string());
  Dataset back = read_dataset(dir.string());
  CHECK(back.labels.values == d.labels.values);
  CHECK(back.embeddings == d.embeddings);
  CHECK(back.splits == d.splits);
  CHECK(back.base_digest == d.base_digest);
  CHECK(back.spurious.codes.size() == 2);
  CHECK(back.spurious.codes[0] == d.spurious.codes[0]);
  CHECK(back.embed_config.latent_dim == 8);

  Dataset g = corrupt(d, CorruptionConfig::parse("gaussian:1"));
  const std::string labels_before = read(dir / "labels.csv");
  write_dataset(g, dir.string());
  CHECK(std::filesystem::exists(dir / "embeddings_gaussian_1.csv"));
  CHECK(read(dir / "labels.csv") == labels_before);
  Dataset gb = read_dataset(dir.string(), "gaussian_1");
  CHECK(gb.embeddings == g.embeddings);
  CHECK(gb.corruption == "gaussian_1");
  CHECK(gb.base_digest == d.base_digest);
  CHECK_THROWS_AS(read_dataset(dir.string(), "gaussian_7"), IoError);

  // two runs with the same seed write identical bytes
  auto dir2 = scratch_dir("dataset_io_again");
  write_dataset(make_dataset(mnistadd_syn(), small_config(11, 1)), dir2.string());
  for (const char* name : {"labels.csv", "embeddings.csv", "splits.json", "manifest.json", "model.json"}) {
    CHECK(read(dir / name) == read(dir2 / name));
  }

  write_text_file((dir2 / "embeddings.csv").string(), "e0\n1\n");
  CHECK_THROWS_AS(read_dataset(dir2.string()), ValidationError);
}
