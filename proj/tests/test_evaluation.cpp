#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "ochoice/evaluation.hpp"
#include "ochoice/synth.hpp"

using namespace ochoice;
using test_helpers::design_for;
using test_helpers::newton_logistic;
using test_helpers::random_reslogit;

namespace {

ModelBundle uniform_reslogit_bundle(int k) {
  // w = 0 and biases at the logit of (k-j)/k give uniform choice
  // probabilities for every observation.
  Rng rng(1);
  ReslogitFitResult fit;
  fit.params = random_reslogit(k, 1, 0, CoefficientMode::kGeneric, rng);
  fit.params.coral_weights.setZero();
  fit.params.beta.setZero();
  for (int j = 1; j <= k - 1; ++j)
    fit.params.coral_biases[j - 1] =
        logit(static_cast<double>(k - j) / static_cast<double>(k));
  ModelBundle bundle;
  bundle.design.feature_columns = {"x1"};
  bundle.design.label_column = "y";
  bundle.n_categories = k;
  bundle.fit = std::move(fit);
  return bundle;
}

Dataset toy_dataset(long n, int k, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.feature_names = {"x1"};
  ds.label_name = "y";
  ds.n_categories = k;
  ds.features.resize(n, 1);
  for (long i = 0; i < n; ++i) {
    ds.features(i, 0) = rng.normal();
    ds.labels.push_back(1 + static_cast<int>(rng.below(
                                static_cast<std::uint64_t>(k))));
  }
  return ds;
}

}  // namespace

TEST_CASE("mpe counts mismatches", "[evaluation]") {
  CHECK(mpe({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK_THAT(mpe({1, 2, 3}, {1, 2, 2}),
             Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
  CHECK_THROWS_AS(mpe({}, {}), ValidationError);
  CHECK_THROWS_AS(mpe({1}, {1, 2}), ValidationError);
}

TEST_CASE("mpe is invariant under joint permutation", "[evaluation]") {
  Rng rng(5);
  std::vector<int> pred, actual;
  for (int i = 0; i < 200; ++i) {
    pred.push_back(1 + static_cast<int>(rng.below(4)));
    actual.push_back(1 + static_cast<int>(rng.below(4)));
  }
  const double base = mpe(pred, actual);
  std::vector<int> perm = rng.permutation(200);
  std::vector<int> pred2(200), actual2(200);
  for (int i = 0; i < 200; ++i) {
    pred2[static_cast<std::size_t>(i)] =
        pred[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    actual2[static_cast<std::size_t>(i)] =
        actual[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  CHECK(mpe(pred2, actual2) == base);
}

TEST_CASE("validation accuracy relates to mpe", "[evaluation]") {
  // 81.89% accuracy corresponds to MPE 0.1811 on 10,000 observations.
  std::vector<int> actual(10000, 1), pred(10000, 1);
  for (int i = 0; i < 1811; ++i) pred[static_cast<std::size_t>(i)] = 2;
  CHECK_THAT(mpe(pred, actual), Catch::Matchers::WithinAbs(0.1811, 1e-12));
  CHECK_THAT(1.0 - mpe(pred, actual),
             Catch::Matchers::WithinAbs(0.8189, 1e-12));
}

TEST_CASE("aic matches the published table values", "[evaluation]") {
  CHECK_THAT(aic(-1276.57, 165), Catch::Matchers::WithinAbs(2883.14, 1e-9));
  CHECK_THAT(aic(-1193.68, 16), Catch::Matchers::WithinAbs(2419.36, 1e-9));
  CHECK_THAT(aic(-14483.3, 422), Catch::Matchers::WithinAbs(29810.6, 1e-9));
  CHECK_THAT(aic(-31169.0, 17), Catch::Matchers::WithinAbs(62372.0, 1e-9));
  CHECK(aic(0.0, 0) == 0.0);
  CHECK_THROWS_AS(aic(-10.0, -1), ValidationError);
}

TEST_CASE("uniform model log-likelihood", "[evaluation]") {
  const ModelBundle bundle = uniform_reslogit_bundle(3);
  const Dataset data = toy_dataset(10, 3, 7);
  const double ll = model_log_likelihood(bundle, data);
  CHECK_THAT(ll, Catch::Matchers::WithinAbs(10.0 * std::log(1.0 / 3.0), 1e-9));
}

TEST_CASE("near-perfect prediction pushes LL toward zero", "[evaluation]") {
  Rng rng(9);
  ReslogitFitResult fit;
  fit.params = random_reslogit(2, 1, 0, CoefficientMode::kGeneric, rng);
  fit.params.beta(0, 0) = 50.0;
  fit.params.coral_weights.setConstant(1.0);
  fit.params.coral_biases.setZero();
  ModelBundle bundle;
  bundle.design.feature_columns = {"x1"};
  bundle.design.label_column = "y";
  bundle.n_categories = 2;
  bundle.fit = std::move(fit);

  Dataset data;
  data.feature_names = {"x1"};
  data.label_name = "y";
  data.n_categories = 2;
  data.features.resize(4, 1);
  data.features << -1.0, -2.0, 1.0, 2.0;
  data.labels = {1, 1, 2, 2};
  CHECK(std::abs(model_log_likelihood(bundle, data)) < 1e-9);
}

TEST_CASE("for K=2 the task loss equals the negative choice LL",
          "[evaluation][oracle]") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const ReslogitParams params =
        random_reslogit(2, 2, 1, CoefficientMode::kGeneric, rng);
    Dataset data;
    data.feature_names = {"x1", "x2"};
    data.label_name = "y";
    data.n_categories = 2;
    data.features.resize(30, 2);
    for (long i = 0; i < 30; ++i) {
      data.features(i, 0) = rng.normal();
      data.features(i, 1) = rng.normal();
      data.labels.push_back(1 + static_cast<int>(rng.below(2)));
    }

    ReslogitFitResult fit;
    fit.params = params;
    ModelBundle bundle;
    bundle.design.feature_columns = {"x1", "x2"};
    bundle.design.label_column = "y";
    bundle.n_categories = 2;
    bundle.fit = std::move(fit);

    const double ll = model_log_likelihood(bundle, data);
    const double task_loss = loss(data.features, data.labels, params);
    CHECK_THAT(ll, Catch::Matchers::WithinAbs(-task_loss, 1e-9));
  }
}

TEST_CASE("log-likelihood doubles under dataset duplication", "[evaluation]") {
  const ModelBundle bundle = uniform_reslogit_bundle(3);
  Dataset data = toy_dataset(25, 3, 21);
  const double base = model_log_likelihood(bundle, data);

  Dataset doubled = data;
  doubled.features.conservativeResize(50, 1);
  doubled.features.bottomRows(25) = data.features;
  for (long i = 0; i < 25; ++i)
    doubled.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
  const double twice = model_log_likelihood(bundle, doubled);
  CHECK_THAT(twice, Catch::Matchers::WithinRel(2.0 * base, 1e-12));
}

TEST_CASE("ordered logit t-stats match the logistic oracle within 2%",
          "[evaluation][oracle]") {
  GenSpec spec;
  spec.n_obs = 10000;
  spec.n_features = 1;
  spec.beta_true = Eigen::VectorXd::Constant(1, 1.0);
  spec.deltas_true = {0.2};
  spec.seed = 1234;
  const Dataset ds = gen_ordered_logit(spec);
  const DesignSpec design = design_for(ds);
  ModelBundle bundle;
  bundle.design = design;
  bundle.n_categories = 2;
  bundle.fit = fit_ordered_logit(ds, design);

  const auto rows = t_stats(bundle, ds);
  REQUIRE(rows.size() == 2);  // beta + one threshold
  REQUIRE(rows[0].has_t);

  std::vector<int> y01;
  for (int y : ds.labels) y01.push_back(y - 1);
  const auto oracle = newton_logistic(ds.features, y01);
  const double oracle_t_beta = oracle.coef[1] / std::sqrt(oracle.covariance(1, 1));
  CHECK_THAT(rows[0].t_stat,
             Catch::Matchers::WithinRel(oracle_t_beta, 0.02));
  // Threshold = -intercept, so |t| agrees as well.
  const double oracle_t_delta =
      -oracle.coef[0] / std::sqrt(oracle.covariance(0, 0));
  CHECK_THAT(rows[1].t_stat,
             Catch::Matchers::WithinRel(oracle_t_delta, 0.02));
}

TEST_CASE("duplicating the data scales t-stats by sqrt(2)",
          "[evaluation][oracle]") {
  GenSpec spec;
  spec.n_obs = 2000;
  spec.n_features = 2;
  spec.beta_true = Eigen::Vector2d(0.9, -0.5);
  spec.deltas_true = {-0.5, 0.8};
  spec.seed = 31;
  const Dataset ds = gen_ordered_logit(spec);
  const DesignSpec design = design_for(ds);
  ModelBundle bundle;
  bundle.design = design;
  bundle.n_categories = 3;
  bundle.fit = fit_ordered_logit(ds, design);

  Dataset doubled = ds;
  doubled.features.conservativeResize(4000, 2);
  doubled.features.bottomRows(2000) = ds.features;
  doubled.labels.insert(doubled.labels.end(), ds.labels.begin(),
                        ds.labels.end());

  const auto base_rows = t_stats(bundle, ds);
  const auto dup_rows = t_stats(bundle, doubled);
  REQUIRE(base_rows.size() == dup_rows.size());
  for (std::size_t r = 0; r < base_rows.size(); ++r) {
    REQUIRE(base_rows[r].has_t);
    CHECK_THAT(dup_rows[r].t_stat,
               Catch::Matchers::WithinRel(base_rows[r].t_stat * std::sqrt(2.0),
                                          0.01));
  }
}

TEST_CASE("excluded parameters produce no t-stat row", "[evaluation]") {
  Rng rng(17);
  ReslogitFitResult fit;
  fit.params =
      random_reslogit(3, 2, 1, CoefficientMode::kAlternativeSpecific, rng);
  fit.params.trainable_mask(1, 0) = 0.0;
  fit.params.beta(1, 0) = 0.0;
  ModelBundle bundle;
  bundle.design.feature_columns = {"x1", "x2"};
  bundle.design.label_column = "y";
  bundle.design.coefficient_mode = CoefficientMode::kAlternativeSpecific;
  bundle.design.exclusions = {{"x1", 2}};
  bundle.n_categories = 3;
  bundle.fit = std::move(fit);

  Dataset data = toy_dataset(60, 3, 3);
  data.feature_names = {"x1", "x2"};
  data.features.conservativeResize(60, 2);
  for (long i = 0; i < 60; ++i) data.features(i, 1) = rng.normal();

  const auto rows = t_stats(bundle, data);
  // 6 beta slots - 1 excluded + 2 bias rows.
  CHECK(rows.size() == 5 + 2);
  for (const auto& row : rows) CHECK(row.name != "x1[2]");
  // Bias rows are listed without t-statistics.
  CHECK_FALSE(rows[rows.size() - 1].has_t);
  CHECK_FALSE(rows[rows.size() - 2].has_t);
}

TEST_CASE("BHHH t-stats agree with the logistic oracle at the K=2 optimum",
          "[evaluation][oracle]") {
  // With M = 0 and K = 2 the model is sigmoid(s*beta.x + b) with s = sum(w).
  // The t-statistic of beta under beta-block BHHH is invariant to the s
  // split, and the information equality at a correctly specified MLE makes
  // it comparable to the Newton logistic oracle.
  GenSpec spec;
  spec.n_obs = 8000;
  spec.n_features = 1;
  spec.beta_true = Eigen::VectorXd::Constant(1, 0.9);
  spec.deltas_true = {0.3};
  spec.seed = 808;
  const Dataset all = gen_ordered_logit(spec);
  const auto [train, val] = split(all, 0.7, 1);
  const DesignSpec design = design_for(all);

  TrainConfig config;
  config.m_layers = 0;
  config.learning_rate = 5e-3;
  config.max_epochs = 250;
  config.early_stop_patience = 249;
  config.seed = 4;
  ModelBundle bundle;
  bundle.design = design;
  bundle.n_categories = 2;
  bundle.fit = fit_reslogit(train, val, design, config);

  const auto rows = t_stats(bundle, train);
  REQUIRE(rows[0].has_t);

  std::vector<int> y01;
  for (int y : train.labels) y01.push_back(y - 1);
  const auto oracle = newton_logistic(train.features, y01);
  const double oracle_t = oracle.coef[1] / std::sqrt(oracle.covariance(1, 1));
  CHECK_THAT(rows[0].t_stat, Catch::Matchers::WithinRel(oracle_t, 0.10));
}

TEST_CASE("singular information flags t-stats as undefined", "[evaluation]") {
  // A feature that is identically zero contributes a zero gradient
  // coordinate, so the BHHH outer-product sum is exactly singular.
  Rng rng(19);
  ReslogitFitResult fit;
  fit.params = random_reslogit(3, 2, 0, CoefficientMode::kGeneric, rng);
  ModelBundle bundle;
  bundle.design.feature_columns = {"x1", "x2"};
  bundle.design.label_column = "y";
  bundle.n_categories = 3;
  bundle.fit = std::move(fit);

  Dataset data = toy_dataset(40, 3, 4);
  data.feature_names = {"x1", "x2"};
  data.features.conservativeResize(40, 2);
  data.features.col(1).setZero();

  const auto rows = t_stats(bundle, data);
  for (const auto& row : rows) CHECK_FALSE(row.has_t);
}

TEST_CASE("fit report satisfies its identities", "[evaluation]") {
  GenSpec spec;
  spec.n_obs = 1200;
  spec.n_features = 2;
  spec.beta_true = Eigen::Vector2d(1.0, -0.7);
  spec.deltas_true = {-0.6, 0.9};
  spec.seed = 47;
  const Dataset all = gen_ordered_logit(spec);
  const auto [train, val] = split(all, 0.7, 2);
  const DesignSpec design = design_for(all);

  ModelBundle bundle;
  bundle.design = design;
  bundle.n_categories = 3;
  bundle.fit = fit_ordered_logit(train, design);

  const FitReport report = make_fit_report(bundle, train, val);
  CHECK(report.model_kind == "ordered_logit");
  CHECK(report.n_params == 4);
  CHECK(report.aic ==
        -2.0 * report.log_likelihood + 2.0 * static_cast<double>(report.n_params));
  CHECK(report.validation_accuracy ==
        1.0 - mpe(predict_all(bundle, val), val.labels));
  CHECK(report.n_observations == train.n_rows());
  CHECK(report.log_likelihood <= 0.0);
  CHECK(report.rows.size() == 4);
}
