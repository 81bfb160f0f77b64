#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "ochoice/reslogit.hpp"
#include "ochoice/synth.hpp"

using namespace ochoice;
using test_helpers::design_for;
using test_helpers::random_reslogit;

namespace {

ReslogitParams make_params(int k, int f, int m, CoefficientMode mode,
                           Rng& rng, double scale = 0.5) {
  return random_reslogit(k, f, m, mode, rng, scale);
}

Eigen::MatrixXd random_batch(long b, int f, Rng& rng, double range = 1.5) {
  Eigen::MatrixXd x(b, f);
  for (long i = 0; i < b; ++i)
    for (int j = 0; j < f; ++j) x(i, j) = rng.uniform(-range, range);
  return x;
}

std::vector<int> random_labels(long b, int k, Rng& rng) {
  std::vector<int> y(static_cast<std::size_t>(b));
  for (auto& v : y)
    v = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  return y;
}

}  // namespace

TEST_CASE("deterministic utilities in both modes", "[reslogit]") {
  Rng rng(1);
  ReslogitParams generic = make_params(3, 2, 0, CoefficientMode::kGeneric, rng);
  generic.beta << 1.0, 0.5;
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  const Eigen::VectorXd v = deterministic_utilities(generic, x);
  CHECK(v.isApprox(Eigen::Vector3d(1.5, 1.5, 1.5)));

  ReslogitParams alt =
      make_params(3, 1, 0, CoefficientMode::kAlternativeSpecific, rng);
  alt.beta << 0.2, -0.1, 0.4;
  Eigen::VectorXd x1(1);
  x1 << 1.0;
  CHECK(deterministic_utilities(alt, x1).isApprox(
      Eigen::Vector3d(0.2, -0.1, 0.4)));

  CHECK(deterministic_utilities(generic, Eigen::Vector2d::Zero())
            .isZero());
  CHECK(deterministic_utilities(alt, Eigen::VectorXd::Zero(1)).isZero());

  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(deterministic_utilities(generic, wrong), ValidationError);
}

TEST_CASE("residual forward pass closed forms", "[reslogit]") {
  const double ln2 = std::log(2.0);
  {
    const ForwardTrace t = forward_utilities(
        Eigen::Vector3d::Zero(), {Eigen::MatrixXd::Zero(3, 3)});
    REQUIRE(t.v_layers.size() == 2);
    CHECK(t.v_layers[1].isApprox(Eigen::Vector3d(-ln2, -ln2, -ln2), 1e-12));
  }
  {
    Eigen::VectorXd v0(2);
    v0 << 1.0, -1.0;
    const ForwardTrace t =
        forward_utilities(v0, {Eigen::MatrixXd::Identity(2, 2)});
    CHECK_THAT(t.v_layers[1][0],
               Catch::Matchers::WithinAbs(1.0 - softplus(1.0), 1e-12));
    CHECK_THAT(t.v_layers[1][1],
               Catch::Matchers::WithinAbs(-1.0 - softplus(-1.0), 1e-12));
    CHECK_THAT(t.v_layers[1][0],
               Catch::Matchers::WithinAbs(-0.31326168751822286, 1e-10));
    CHECK_THAT(t.v_layers[1][1],
               Catch::Matchers::WithinAbs(-1.3132616875182228, 1e-10));
  }
  {
    Eigen::VectorXd v0(3);
    v0 << 0.3, -0.8, 2.0;
    const ForwardTrace t = forward_utilities(v0, {});
    REQUIRE(t.v_layers.size() == 1);
    CHECK(t.v_layers[0] == v0);  // M = 0 is the identity
  }
}

TEST_CASE("coral exceedance closed forms", "[reslogit]") {
  Eigen::VectorXd vm = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd b(2);
  b << 1.0, 0.0;
  const Eigen::VectorXd p = coral_exceedance(vm, w, b);
  CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.7310585786300049, 1e-12));
  CHECK_THAT(p[1], Catch::Matchers::WithinAbs(0.5, 1e-15));

  Eigen::VectorXd vm3(3), w3(3), b3(2);
  vm3 << 1.0, 2.0, 3.0;
  w3 << 1.0, 1.0, 1.0;
  b3 << -5.0, -7.0;
  const Eigen::VectorXd q = coral_exceedance(vm3, w3, b3);
  CHECK_THAT(q[0], Catch::Matchers::WithinAbs(sigmoid(1.0), 1e-12));
  CHECK_THAT(q[1], Catch::Matchers::WithinAbs(sigmoid(-1.0), 1e-12));

  // Zero weights: output depends only on biases, identical for any input.
  Rng rng(3);
  Eigen::VectorXd vm_a(3), vm_b(3);
  for (int i = 0; i < 3; ++i) {
    vm_a[i] = rng.normal();
    vm_b[i] = rng.normal();
  }
  CHECK(coral_exceedance(vm_a, Eigen::VectorXd::Zero(3), b3)
            .isApprox(coral_exceedance(vm_b, Eigen::VectorXd::Zero(3), b3)));
}

TEST_CASE("choice probabilities from exceedance", "[reslogit]") {
  {
    Eigen::VectorXd p(2);
    p << 0.7310585786300049, 0.2689414213699951;
    const Eigen::VectorXd probs = choice_probs_from_exceedance(p);
    CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(0.2689414213699951, 1e-12));
    CHECK_THAT(probs[1], Catch::Matchers::WithinAbs(0.4621171572600098, 1e-12));
    CHECK_THAT(probs[2], Catch::Matchers::WithinAbs(0.2689414213699951, 1e-12));
  }
  {
    Eigen::VectorXd p(2);
    p << 0.5, 0.5;
    const Eigen::VectorXd probs = choice_probs_from_exceedance(p);
    CHECK(probs.isApprox(Eigen::Vector3d(0.5, 0.0, 0.5)));
  }
  {
    Eigen::VectorXd p(2);
    p << 0.3, 0.6;  // rank-inconsistent input
    ClampStats stats;
    const Eigen::VectorXd probs = choice_probs_from_exceedance(p, &stats);
    CHECK(stats.clamped == 1);
    CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(0.7 / 1.3, 1e-12));
    CHECK_THAT(probs[1], Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(probs[2], Catch::Matchers::WithinAbs(0.6 / 1.3, 1e-12));
    CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(0.53846, 1e-5));
    CHECK_THAT(probs[2], Catch::Matchers::WithinAbs(0.46154, 1e-5));
  }
}

TEST_CASE("rank prediction by threshold votes", "[reslogit]") {
  Eigen::VectorXd p(3);
  p << 0.9, 0.6, 0.2;
  CHECK(predict_rank(p, 0.5) == 3);
  Eigen::VectorXd q(2);
  q << 0.45, 0.35;
  CHECK(predict_rank(q, 0.4) == 2);  // sub-0.5 operating threshold
  Eigen::VectorXd low(3);
  low << 0.1, 0.05, 0.01;
  CHECK(predict_rank(low, 0.5) == 1);
  CHECK_THROWS_AS(predict_rank(p, 1.5), ValidationError);
}

TEST_CASE("loss closed forms", "[reslogit]") {
  // One observation, K = 3. Parameters engineered so z = 0 and the biases
  // produce the target exceedances.
  Rng rng(5);
  ReslogitParams p = make_params(3, 1, 0, CoefficientMode::kGeneric, rng);
  p.beta.setZero();
  p.coral_weights.setZero();

  Eigen::MatrixXd x(1, 1);
  x << 0.0;

  p.coral_biases << 0.0, 0.0;  // exceedance (0.5, 0.5)
  CHECK_THAT(loss(x, {3}, p),
             Catch::Matchers::WithinAbs(2.0 * std::log(2.0), 1e-12));

  p.coral_biases << 1.0, -1.0;  // exceedance (0.73106, 0.26894)
  CHECK_THAT(loss(x, {2}, p),
             Catch::Matchers::WithinAbs(0.6265233750364456, 1e-10));

  p.coral_biases << 40.0, -40.0;  // near-perfect prediction of rank 2
  CHECK(loss(x, {2}, p) < 1e-15);

  CHECK_THROWS_AS(loss(Eigen::MatrixXd(0, 1), {}, p), ValidationError);
}

TEST_CASE("bias gradient equals the sigmoid cross-entropy form",
          "[reslogit]") {
  Rng rng(11);
  ReslogitParams p = make_params(3, 2, 2, CoefficientMode::kGeneric, rng);
  const Eigen::MatrixXd x = random_batch(8, 2, rng);
  const std::vector<int> y = random_labels(8, 3, rng);
  const ReslogitGradient g = gradient(x, y, p);

  const BatchTrace trace = forward_batch(p, x);
  for (int t = 0; t < 2; ++t) {
    double expected = 0.0;
    for (long n = 0; n < 8; ++n)
      expected += sigmoid(trace.z[n] + p.coral_biases[t]) -
                  binary_label(y[static_cast<std::size_t>(n)], t + 1);
    CHECK_THAT(g.coral_biases[t],
               Catch::Matchers::WithinAbs(expected, 1e-10));
  }
}

TEST_CASE("gradient matches finite differences on a random config",
          "[reslogit][oracle]") {
  Rng rng(21);
  ReslogitParams p =
      make_params(4, 7, 3, CoefficientMode::kAlternativeSpecific, rng);
  const Eigen::MatrixXd x = random_batch(5, 7, rng);
  const std::vector<int> y = random_labels(5, 4, rng);

  const ReslogitGradient g = gradient(x, y, p);
  const Eigen::VectorXd analytic = pack_gradient(g, p);
  ReslogitParams probe = p;
  const Eigen::VectorXd fd = central_diff_gradient(
      [&](const Eigen::VectorXd& theta) {
        unpack_parameters(theta, probe);
        return loss(x, y, probe);
      },
      pack_parameters(p), 1e-6);

  REQUIRE(analytic.size() == fd.size());
  for (long j = 0; j < analytic.size(); ++j) {
    const double scale = std::max({1.0, std::abs(analytic[j]), std::abs(fd[j])});
    CHECK(std::abs(analytic[j] - fd[j]) / scale < 1e-6);
  }
}

TEST_CASE("excluded coefficients get zero gradient and stay zero",
          "[reslogit]") {
  Rng rng(23);
  ReslogitParams p =
      make_params(3, 2, 1, CoefficientMode::kAlternativeSpecific, rng);
  p.trainable_mask(1, 0) = 0.0;
  p.beta(1, 0) = 0.0;
  const Eigen::MatrixXd x = random_batch(6, 2, rng);
  const std::vector<int> y = random_labels(6, 3, rng);
  const ReslogitGradient g = gradient(x, y, p);
  CHECK(g.beta(1, 0) == 0.0);
  CHECK(p.n_trainable() == 5 + 9 + 3 + 2);
}

TEST_CASE("M=0 generic gradient reduces to a weighted logistic form",
          "[reslogit][oracle]") {
  // With no residual layers, z = (sum_k w_k) * beta.x, so d loss/d beta =
  // (sum_k w_k) * sum_n (sum_t dL/dlogit_nt) x_n.
  Rng rng(29);
  ReslogitParams p = make_params(3, 2, 0, CoefficientMode::kGeneric, rng);
  const Eigen::MatrixXd x = random_batch(12, 2, rng);
  const std::vector<int> y = random_labels(12, 3, rng);
  const ReslogitGradient g = gradient(x, y, p);

  const double wsum = p.coral_weights.sum();
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(2);
  for (long n = 0; n < 12; ++n) {
    const double z = wsum * p.beta.row(0).dot(x.row(n));
    double dz = 0.0;
    for (int t = 0; t < 2; ++t)
      dz += sigmoid(z + p.coral_biases[t]) -
            binary_label(y[static_cast<std::size_t>(n)], t + 1);
    expected += wsum * dz * x.row(n).transpose();
  }
  CHECK(g.beta.row(0).transpose().isApprox(expected, 1e-10));
}

TEST_CASE("loss is insensitive to batch order", "[reslogit][property]") {
  Rng rng(31);
  ReslogitParams p = make_params(3, 3, 2, CoefficientMode::kGeneric, rng);
  Eigen::MatrixXd x = random_batch(64, 3, rng);
  std::vector<int> y = random_labels(64, 3, rng);
  const double base = loss(x, y, p);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> perm = rng.permutation(64);
    Eigen::MatrixXd xp(64, 3);
    std::vector<int> yp(64);
    for (int i = 0; i < 64; ++i) {
      xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
      yp[static_cast<std::size_t>(i)] =
          y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    CHECK_THAT(loss(xp, yp, p), Catch::Matchers::WithinAbs(base, 1e-12));
  }
}

TEST_CASE("structural rank consistency: exceedance order equals bias order",
          "[reslogit][property]") {
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    const int m = static_cast<int>(rng.below(4));
    ReslogitParams p = make_params(
        k, 3, m,
        trial % 2 == 0 ? CoefficientMode::kGeneric
                       : CoefficientMode::kAlternativeSpecific,
        rng, 1.0);
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-2, 2);
    const ForwardTrace t = forward(p, x);
    for (int a = 0; a < k - 1; ++a)
      for (int b = 0; b < k - 1; ++b) {
        if (p.coral_biases[a] > p.coral_biases[b])
          CHECK(t.exceedance[a] >= t.exceedance[b]);
        if (p.coral_biases[a] == p.coral_biases[b])
          CHECK(t.exceedance[a] == t.exceedance[b]);
      }
  }
}

TEST_CASE("with decreasing biases the vote rule equals threshold crossing",
          "[reslogit][property]") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 3 + static_cast<int>(rng.below(3));
    Eigen::VectorXd p(k - 1);
    // Non-increasing exceedance chain.
    double v = rng.uniform(0.5, 0.99);
    for (int j = 0; j < k - 1; ++j) {
      p[j] = v;
      v *= rng.uniform(0.3, 1.0);
    }
    const double alpha = rng.uniform(0.05, 0.95);
    const int voted = predict_rank(p, alpha);
    // Largest index with p > alpha, plus one.
    int crossing = 1;
    for (int j = k - 2; j >= 0; --j)
      if (p[j] > alpha) {
        crossing = j + 2;
        break;
      }
    CHECK(voted == crossing);
    ClampStats stats;
    choice_probs_from_exceedance(p, &stats);
    CHECK(stats.clamped == 0);
  }
}

TEST_CASE("training is bitwise deterministic per seed", "[reslogit][fit]") {
  GenSpec spec;
  spec.n_obs = 600;
  spec.n_features = 2;
  spec.beta_true = Eigen::Vector2d(0.8, -0.6);
  spec.deltas_true = {-0.8, 0.9};
  spec.seed = 51;
  const Dataset all = gen_ordered_logit(spec);
  const auto [train, val] = split(all, 0.7, 3);

  TrainConfig config;
  config.m_layers = 2;
  config.max_epochs = 12;
  config.early_stop_patience = 11;
  config.seed = 77;

  const auto a = fit_reslogit(train, val, design_for(all), config);
  const auto b = fit_reslogit(train, val, design_for(all), config);
  CHECK(pack_parameters(a.params) == pack_parameters(b.params));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_mpe == b.history[e].val_mpe);
  }
  CHECK(a.best_epoch == b.best_epoch);

  // History bookkeeping: the recorded best is the running minimum.
  CHECK(a.epochs_run == static_cast<int>(a.history.size()));
  double running_min = 1.0;
  for (const auto& rec : a.history)
    running_min = std::min(running_min, rec.val_mpe);
  CHECK(a.best_val_mpe == running_min);
  CHECK(a.clamp_violations >= 0);
}

TEST_CASE("early stopping halts after patience epochs without improvement",
          "[reslogit][fit]") {
  GenSpec spec;
  spec.n_obs = 300;
  spec.n_features = 1;
  spec.beta_true = Eigen::VectorXd::Zero(1);  // pure noise: MPE plateaus
  spec.deltas_true = {0.0};
  spec.seed = 8;
  const Dataset all = gen_ordered_logit(spec);
  const auto [train, val] = split(all, 0.7, 5);

  TrainConfig config;
  config.m_layers = 0;
  config.max_epochs = 400;
  config.early_stop_patience = 5;
  config.seed = 2;
  const auto fit = fit_reslogit(train, val, design_for(all), config);
  CHECK(fit.stopped_early);
  CHECK(fit.epochs_run < 400);
  CHECK(fit.epochs_run >= fit.best_epoch);
}

TEST_CASE("monotone bias mode keeps the chain decreasing", "[reslogit][fit]") {
  GenSpec spec;
  spec.n_obs = 500;
  spec.n_features = 2;
  spec.beta_true = Eigen::Vector2d(1.0, -0.4);
  spec.deltas_true = {-1.0, 1.0};
  spec.seed = 99;
  const Dataset all = gen_ordered_logit(spec);
  const auto [train, val] = split(all, 0.7, 1);

  TrainConfig config;
  config.m_layers = 1;
  config.max_epochs = 15;
  config.early_stop_patience = 14;
  config.monotone_biases = true;
  config.seed = 5;
  const auto fit = fit_reslogit(train, val, design_for(all), config);
  for (long j = 1; j < fit.params.coral_biases.size(); ++j)
    CHECK(fit.params.coral_biases[j] < fit.params.coral_biases[j - 1]);
}

TEST_CASE("select_alpha picks the smallest minimizer", "[reslogit]") {
  Rng rng(61);
  ReslogitParams p = make_params(3, 2, 0, CoefficientMode::kGeneric, rng);
  const Eigen::MatrixXd x = random_batch(50, 2, rng);
  const std::vector<int> y = random_labels(50, 3, rng);

  CHECK(select_alpha(p, x, y, {0.5}) == 0.5);
  CHECK(p.alpha == 0.5);

  // Engineer exceedances inside (0.41, 0.49): every alpha in the gap gives
  // identical predictions, so the tie breaks to the smallest grid value.
  p.beta.setZero();
  p.coral_weights.setZero();
  p.coral_biases << logit(0.48), logit(0.43);
  const double chosen = select_alpha(p, x, y, {0.42, 0.415, 0.41});
  CHECK(chosen == 0.41);
}

TEST_CASE("trainable count matches the documented formula", "[reslogit]") {
  Rng rng(67);
  const ReslogitParams generic =
      make_params(3, 4, 16, CoefficientMode::kGeneric, rng);
  CHECK(generic.n_trainable() == 4 + 16 * 9 + 3 + 2);
  ReslogitParams alt =
      make_params(5, 3, 2, CoefficientMode::kAlternativeSpecific, rng);
  alt.trainable_mask(2, 1) = 0.0;
  CHECK(alt.n_trainable() == (15 - 1) + 2 * 25 + 5 + 4);
}

TEST_CASE("parameter validation catches bad shapes", "[reslogit]") {
  Rng rng(71);
  ReslogitParams p = make_params(3, 2, 1, CoefficientMode::kGeneric, rng);
  REQUIRE_NOTHROW(p.validate());
  p.alpha = 1.5;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.alpha = 0.5;
  p.task_weights[0] = -1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.task_weights[0] = 1.0;
  p.residual_weights[0] = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(p.validate(), ValidationError);
}
