#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "ochoice/dataset.hpp"

using namespace ochoice;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("ochoice_test_" + name);
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

TEST_CASE("load_csv parses a small labeled table", "[dataset]") {
  const auto p = temp_file("basic.csv");
  write_text(p,
             "density,female,wait_cat\n"
             "12.5,1,1\n"
             "20.0,0,2\n"
             "31.5,1,3\n");
  const auto loaded = load_csv(p.string(), "wait_cat", 3);
  const Dataset& ds = loaded.data;
  REQUIRE(ds.n_rows() == 3);
  REQUIRE(ds.n_categories == 3);
  REQUIRE(ds.feature_names == std::vector<std::string>{"density", "female"});
  CHECK(ds.features(0, 0) == 12.5);
  CHECK(ds.labels == std::vector<int>{1, 2, 3});
}

TEST_CASE("load_csv rejects out-of-range labels", "[dataset]") {
  const auto p = temp_file("badlabel.csv");
  write_text(p, "x,y\n1.0,1\n2.0,4\n");
  REQUIRE_THROWS_WITH(load_csv(p.string(), "y", 3),
                      Catch::Matchers::ContainsSubstring("label out of range"));
}

TEST_CASE("load_csv accepts one row per category", "[dataset]") {
  const auto p = temp_file("onepercat.csv");
  std::string text = "x,y\n";
  for (int k = 1; k <= 5; ++k)
    text += std::to_string(k) + ".5," + std::to_string(k) + "\n";
  write_text(p, text);
  const auto loaded = load_csv(p.string(), "y", 5);
  REQUIRE(loaded.data.n_rows() == 5);
  REQUIRE_NOTHROW(loaded.data.validate_for_fit());
}

TEST_CASE("missing values: strict rejects, lenient drops with count",
          "[dataset]") {
  const auto p = temp_file("missing.csv");
  write_text(p, "x,y\n1.0,1\n,2\n3.0,2\n");
  REQUIRE_THROWS_AS(load_csv(p.string(), "y", 2), ValidationError);
  CsvOptions opts;
  opts.lenient_missing = true;
  const auto loaded = load_csv(p.string(), "y", 2, opts);
  CHECK(loaded.dropped_rows == 1);
  CHECK(loaded.data.n_rows() == 2);
}

TEST_CASE("load_csv error paths", "[dataset]") {
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "y", 2), ValidationError);
  const auto p = temp_file("nonnumeric.csv");
  write_text(p, "x,y\nabc,1\n");
  CHECK_THROWS_WITH(load_csv(p.string(), "y", 2),
                    Catch::Matchers::ContainsSubstring("non-numeric"));
  const auto p2 = temp_file("headeronly.csv");
  write_text(p2, "x,y\n");
  CHECK_THROWS_AS(load_csv(p2.string(), "y", 2), ValidationError);
}

TEST_CASE("label dictionary maps names to indices", "[dataset]") {
  const auto p = temp_file("named.csv");
  write_text(p, "x,wait\n1.0,low\n2.0,medium\n3.0,high\n");
  CsvOptions opts;
  opts.label_map = {{"low", 1}, {"medium", 2}, {"high", 3}};
  const auto loaded = load_csv(p.string(), "wait", 3, opts);
  CHECK(loaded.data.labels == std::vector<int>{1, 2, 3});
  CHECK(loaded.data.category_names ==
        std::vector<std::string>{"low", "medium", "high"});
}

TEST_CASE("csv round-trip preserves values exactly", "[dataset]") {
  Rng rng(99);
  Dataset ds;
  ds.feature_names = {"a", "b"};
  ds.n_categories = 3;
  ds.label_name = "y";
  ds.features.resize(20, 2);
  for (long i = 0; i < 20; ++i) {
    ds.features(i, 0) = rng.normal() * 1e3;
    ds.features(i, 1) = rng.uniform(-1e-6, 1e-6);
    ds.labels.push_back(1 + static_cast<int>(rng.below(3)));
  }
  const auto p = temp_file("roundtrip.csv");
  save_csv(ds, p.string());
  const auto loaded = load_csv(p.string(), "y", 3);
  REQUIRE(loaded.data.n_rows() == ds.n_rows());
  for (long i = 0; i < 20; ++i) {
    CHECK(loaded.data.features(i, 0) == ds.features(i, 0));
    CHECK(loaded.data.features(i, 1) == ds.features(i, 1));
    CHECK(loaded.data.labels[static_cast<std::size_t>(i)] ==
          ds.labels[static_cast<std::size_t>(i)]);
  }
}

namespace {

Dataset tiny_dataset(long n, int k, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.feature_names = {"x1", "x2"};
  ds.n_categories = k;
  ds.features.resize(n, 2);
  for (long i = 0; i < n; ++i) {
    ds.features(i, 0) = rng.normal();
    ds.features(i, 1) = rng.normal();
    ds.labels.push_back(1 + static_cast<int>(rng.below(
                                static_cast<std::uint64_t>(k))));
  }
  return ds;
}

}  // namespace

TEST_CASE("split produces the documented sizes", "[dataset]") {
  const Dataset ds = tiny_dataset(100, 3, 5);
  const auto [train, val] = split(ds, 0.7, 1);
  CHECK(train.n_rows() == 70);
  CHECK(val.n_rows() == 30);
}

TEST_CASE("split is deterministic and partitions the rows", "[dataset]") {
  const Dataset ds = tiny_dataset(10, 2, 7);
  const auto [a1, b1] = split(ds, 0.5, 7);
  const auto [a2, b2] = split(ds, 0.5, 7);
  CHECK(a1.features == a2.features);
  CHECK(b1.features == b2.features);
  CHECK(a1.labels == a2.labels);

  // Union of the partitions equals the input (matched as multisets of rows).
  std::vector<double> original, recombined;
  for (long i = 0; i < ds.n_rows(); ++i)
    original.push_back(ds.features(i, 0));
  for (long i = 0; i < a1.n_rows(); ++i)
    recombined.push_back(a1.features(i, 0));
  for (long i = 0; i < b1.n_rows(); ++i)
    recombined.push_back(b1.features(i, 0));
  std::sort(original.begin(), original.end());
  std::sort(recombined.begin(), recombined.end());
  CHECK(original == recombined);
}

TEST_CASE("split rejects degenerate partitions", "[dataset]") {
  CHECK_THROWS_AS(split(tiny_dataset(2, 2, 1), 0.99, 3), ValidationError);
  CHECK_THROWS_AS(split(tiny_dataset(8, 2, 1), 0.5, 3), ValidationError);
  CHECK_THROWS_AS(split(tiny_dataset(20, 2, 1), 1.5, 3), ValidationError);
}

TEST_CASE("standardize uses the population convention", "[dataset]") {
  Dataset ds;
  ds.feature_names = {"v"};
  ds.n_categories = 2;
  ds.features.resize(3, 1);
  ds.features << 1.0, 2.0, 3.0;
  ds.labels = {1, 2, 1};
  DesignSpec spec;
  spec.feature_columns = {"v"};
  spec.standardize_columns = {"v"};
  const auto [scaled, params] = standardize(ds, spec);
  REQUIRE(params.columns.size() == 1);
  CHECK_THAT(params.columns[0].mean, Catch::Matchers::WithinAbs(2.0, 1e-15));
  CHECK_THAT(params.columns[0].stddev,
             Catch::Matchers::WithinAbs(0.816496580927726, 1e-12));
  CHECK_THAT(scaled.features(0, 0),
             Catch::Matchers::WithinAbs(-1.224744871391589, 1e-12));
  CHECK_THAT(scaled.features(1, 0), Catch::Matchers::WithinAbs(0.0, 1e-15));
  CHECK_THAT(scaled.features(2, 0),
             Catch::Matchers::WithinAbs(1.224744871391589, 1e-12));
}

TEST_CASE("standardize with no flags is the identity", "[dataset]") {
  const Dataset ds = tiny_dataset(12, 2, 3);
  DesignSpec spec;
  spec.feature_columns = {"x1", "x2"};
  const auto [scaled, params] = standardize(ds, spec);
  CHECK(params.empty());
  CHECK(scaled.features == ds.features);
}

TEST_CASE("standardize rejects constant columns", "[dataset]") {
  Dataset ds = tiny_dataset(5, 2, 3);
  ds.features.col(1).setConstant(4.0);
  DesignSpec spec;
  spec.feature_columns = {"x1", "x2"};
  spec.standardize_columns = {"x2"};
  CHECK_THROWS_AS(standardize(ds, spec), ValidationError);
}

TEST_CASE("standardize round-trips through invert", "[dataset]") {
  const Dataset ds = tiny_dataset(40, 3, 17);
  DesignSpec spec;
  spec.feature_columns = {"x1", "x2"};
  spec.standardize_columns = {"x1", "x2"};
  auto [scaled, params] = standardize(ds, spec);
  params.invert(scaled);
  for (long i = 0; i < ds.n_rows(); ++i)
    for (long j = 0; j < 2; ++j) {
      const double orig = ds.features(i, j);
      CHECK_THAT(scaled.features(i, j),
                 Catch::Matchers::WithinRel(orig, 1e-12));
    }
}

TEST_CASE("scaling params transform held-out data with training stats",
          "[dataset]") {
  ScalingParams params;
  params.columns = {{"x1", 10.0, 2.0}};
  Dataset ds = tiny_dataset(5, 2, 9);
  const double raw = ds.features(0, 0);
  params.apply(ds);
  CHECK_THAT(ds.features(0, 0),
             Catch::Matchers::WithinAbs((raw - 10.0) / 2.0, 1e-15));
  CHECK(params.transform("x1", 12.0) == 1.0);
  CHECK(params.untransform("x1", 1.0) == 12.0);
  CHECK(params.transform("x2", 5.0) == 5.0);  // unscaled column untouched
}

TEST_CASE("design spec validation", "[dataset]") {
  const Dataset ds = tiny_dataset(10, 3, 2);
  DesignSpec spec;
  CHECK_THROWS_AS(spec.validate(ds), ValidationError);  // empty features
  spec.feature_columns = {"x1", "x1"};
  CHECK_THROWS_AS(spec.validate(ds), ValidationError);  // duplicate
  spec.feature_columns = {"x1", "nope"};
  CHECK_THROWS_AS(spec.validate(ds), ValidationError);  // unknown column
  spec.feature_columns = {"x1", "x2"};
  spec.exclusions = {{"x1", 2}};
  CHECK_THROWS_AS(spec.validate(ds), ValidationError);  // generic + exclusion
  spec.coefficient_mode = CoefficientMode::kAlternativeSpecific;
  CHECK_NOTHROW(spec.validate(ds));
  spec.exclusions = {{"x1", 9}};
  CHECK_THROWS_AS(spec.validate(ds), ValidationError);  // bad category
}
