#include <catch2/catch_amalgamated.hpp>

#include "sizeguard/test_statistics.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace sizeguard;
using Catch::Matchers::WithinAbs;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd randn(std::mt19937& gen, int rows, int cols) {
  std::normal_distribution<double> dist;
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = dist(gen);
  }
  return m;
}

// X = (1, 2, 3)', y = (1, 0, 0)', R = (1), r = 0: beta = 1/14,
// u = (13, -2, -3)/14, Bartlett bandwidth 1 gives Psi = 19/42 and
// T = 14/19.
DesignProblem hand_problem() {
  MatrixXd x(3, 1);
  x << 1, 2, 3;
  return DesignProblem(x, MatrixXd::Ones(1, 1), VectorXd::Zero(1));
}

DesignProblem random_problem(std::mt19937& gen, int n, int k, int q,
                             bool zero_rhs = false) {
  const MatrixXd x = randn(gen, n, k);
  const MatrixXd r = randn(gen, q, k);
  const VectorXd rhs =
      zero_rhs ? VectorXd::Zero(q) : VectorXd(0.5 * randn(gen, q, 1));
  return DesignProblem(x, r, rhs);
}

double rel_gap(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(a)); }

}  // namespace

TEST_CASE("ordinary least squares fit") {
  const DesignProblem prob = hand_problem();
  VectorXd y(3);
  y << 1, 0, 0;
  const auto [beta, u] = ols_fit(prob, y);
  CHECK_THAT(beta(0), WithinAbs(1.0 / 14.0, 1e-14));
  CHECK_THAT(u(0), WithinAbs(13.0 / 14.0, 1e-14));
  CHECK_THAT(u(1), WithinAbs(-2.0 / 14.0, 1e-14));
  CHECK_THAT(u(2), WithinAbs(-3.0 / 14.0, 1e-14));
  CHECK(std::abs((prob.X().transpose() * u)(0)) < 1e-8 * y.norm());

  std::mt19937 gen(7);
  for (int rep = 0; rep < 20; ++rep) {
    const DesignProblem p = random_problem(gen, 12, 3, 1);
    const VectorXd yy = randn(gen, 12, 1);
    const auto [b1, u1] = ols_fit(p, yy);
    const auto [b2, u2] = testoracle::ols_qr(p.X(), yy);
    CHECK((b1 - b2).norm() < 1e-10 * (1.0 + b2.norm()));
    CHECK((u1 - u2).norm() < 1e-10 * (1.0 + yy.norm()));
  }

  const VectorXd in_span = prob.X() * VectorXd::Constant(1, 2.5);
  CHECK(ols_fit(prob, in_span).second.norm() < 1e-12 * in_span.norm());

  VectorXd perp(3);
  perp << 2, -1, 0;  // orthogonal to (1, 2, 3)
  CHECK(std::abs(ols_fit(prob, perp).first(0)) < 1e-14);
}

TEST_CASE("design problem validation") {
  const MatrixXd x = MatrixXd::Identity(4, 2);
  CHECK_NOTHROW(DesignProblem(x, MatrixXd::Identity(2, 2), VectorXd::Zero(2)));
  CHECK_THROWS_AS(
      DesignProblem(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2),
                    VectorXd::Zero(2)),
      input_error);
  CHECK_THROWS_AS(DesignProblem(x, MatrixXd::Identity(3, 3), VectorXd::Zero(3)),
                  input_error);
  CHECK_THROWS_AS(DesignProblem(x, MatrixXd::Ones(1, 2), VectorXd::Zero(2)),
                  input_error);

  MatrixXd deficient(4, 2);
  deficient << 1, 2, 1, 2, 1, 2, 1, 2;
  CHECK_THROWS_AS(
      DesignProblem(deficient, MatrixXd::Ones(1, 2), VectorXd::Zero(1)),
      input_error);
  CHECK_THROWS_AS(DesignProblem(x, MatrixXd::Ones(2, 2), VectorXd::Zero(2)),
                  input_error);
}

TEST_CASE("Bartlett lag weights") {
  const VectorXd w1 = bartlett_weights(5, 1.0);
  CHECK(w1(0) == 1.0);
  CHECK(w1.tail(4).cwiseAbs().maxCoeff() == 0.0);

  const VectorXd w = bartlett_weights(5, 2.5);
  CHECK_THAT(w(1), WithinAbs(0.6, 1e-15));
  CHECK_THAT(w(2), WithinAbs(0.2, 1e-15));
  CHECK(w(3) == 0.0);

  const VectorXd wide = bartlett_weights(4, 10.0);
  CHECK_THAT(wide(3), WithinAbs(0.7, 1e-15));

  CHECK_THROWS_AS(bartlett_weights(0, 1.0), input_error);
  CHECK_THROWS_AS(bartlett_weights(5, 0.0), input_error);
  CHECK_THROWS_AS(bartlett_weights(5, -2.0), input_error);
}

TEST_CASE("positive definiteness of the implied Toeplitz weighting") {
  const int n = 20;
  for (double bw : {1.0, 2.5, 10.0, static_cast<double>(n)}) {
    CHECK(check_weights_pd(bartlett_weights(n, bw)));
  }

  VectorXd rect = VectorXd::Zero(6);
  rect.head(3).setOnes();
  CHECK_FALSE(check_weights_pd(rect));

  VectorXd identity_w = VectorXd::Zero(6);
  identity_w(0) = 1.0;
  CHECK(check_weights_pd(identity_w));
}

TEST_CASE("kernel long-run variance of the scores") {
  const DesignProblem prob = hand_problem();
  VectorXd y(3);
  y << 1, 0, 0;

  const MatrixXd psi = psi_hat_w(prob, y, bartlett_weights(3, 1.0));
  CHECK_THAT(psi(0, 0), WithinAbs(19.0 / 42.0, 1e-14));

  const VectorXd in_span = prob.X() * VectorXd::Constant(1, 1.0);
  CHECK(psi_hat_w(prob, in_span, bartlett_weights(3, 2.0)).norm() < 1e-20);

  std::mt19937 gen(11);
  for (int rep = 0; rep < 15; ++rep) {
    const int n = 8 + rep;
    const DesignProblem p = random_problem(gen, n, 2, 1);
    const VectorXd yy = randn(gen, n, 1);
    const VectorXd w = bartlett_weights(n, 3.0);
    const auto [beta, u] = ols_fit(p, yy);
    const MatrixXd got = psi_hat_w(p, yy, w);
    const MatrixXd want = testoracle::psi_kernel(p.X(), u, w);
    CHECK((got - want).norm() < 1e-10 * (1.0 + want.norm()));
  }

  CHECK_THROWS_AS(psi_hat_w(prob, y, bartlett_weights(4, 1.0)), input_error);
}

TEST_CASE("hand-checked Wald statistic") {
  const DesignProblem prob = hand_problem();
  VectorXd y(3);
  y << 1, 0, 0;
  StatisticSpec spec;
  spec.kind = StatKind::Kernel;
  spec.weights = WeightsSpec::kernel(bartlett_weights(3, 1.0));

  const StatResult res = statistic(prob, y, spec);
  CHECK_FALSE(res.singular);
  CHECK_THAT(res.value, WithinAbs(14.0 / 19.0, 1e-12));

  const double oracle = testoracle::statistic_value(
      prob.X(), prob.R(), prob.r(), y, testoracle::Family::Kernel,
      bartlett_weights(3, 1.0));
  CHECK_THAT(oracle, WithinAbs(14.0 / 19.0, 1e-12));

  CHECK_THAT(t_root(prob, y, spec), WithinAbs(std::sqrt(14.0 / 19.0), 1e-12));
  CHECK_THAT(t_root(prob, -y, spec),
             WithinAbs(-std::sqrt(14.0 / 19.0), 1e-12));
}

TEST_CASE("singular covariance estimate yields zero") {
  std::mt19937 gen(23);
  const int n = 9;
  const DesignProblem prob = random_problem(gen, n, 2, 1, true);
  const VectorXd in_span = prob.X() * randn(gen, 2, 1);

  StatisticSpec kernel;
  kernel.kind = StatKind::Kernel;
  kernel.weights = WeightsSpec::kernel(bartlett_weights(n, 3.0));
  StatisticSpec eicker;
  eicker.kind = StatKind::Eicker;
  eicker.weights = WeightsSpec::eicker_toeplitz(bartlett_weights(n, 3.0));
  StatisticSpec gq;
  gq.kind = StatKind::GQ;
  gq.weights = WeightsSpec::gq(MatrixXd::Identity(n, n));
  StatisticSpec ref;
  ref.kind = StatKind::Ref;
  ref.weights = WeightsSpec::kernel(bartlett_weights(n, 3.0));

  for (const auto& spec : {kernel, eicker, gq, ref}) {
    const StatResult res = statistic(prob, in_span, spec);
    CHECK(res.singular);
    CHECK(res.value == 0.0);
  }
}

TEST_CASE("identity-weighted statistics collapse to a scalar variance") {
  std::mt19937 gen(31);
  const int n = 10;
  const DesignProblem prob = random_problem(gen, n, 3, 2);
  const VectorXd y = randn(gen, n, 1);

  VectorXd e0 = VectorXd::Zero(n);
  e0(0) = 1.0;
  StatisticSpec eicker;
  eicker.kind = StatKind::Eicker;
  eicker.weights = WeightsSpec::eicker_toeplitz(e0);
  StatisticSpec ref;
  ref.kind = StatKind::Ref;
  ref.weights = WeightsSpec::kernel(e0);

  const auto [beta, u] = ols_fit(prob, y);
  const double k0 = u.squaredNorm() / n;
  const MatrixXd omega = k0 * prob.r_xtxinv_rt();
  const VectorXd contrast = prob.R() * beta - prob.r();
  const double direct = contrast.dot(omega.ldlt().solve(contrast));

  const StatResult via_eicker = statistic(prob, y, eicker);
  const StatResult via_ref = statistic(prob, y, ref);
  REQUIRE_FALSE(via_eicker.singular);
  CHECK(rel_gap(via_eicker.value, direct) < 1e-10);
  CHECK(rel_gap(via_ref.value, direct) < 1e-10);
  CHECK(rel_gap(via_eicker.value, via_ref.value) < 1e-12);
}

TEST_CASE("all four families agree with brute-force evaluation") {
  std::mt19937 gen(43);
  for (int n : {8, 13, 20}) {
    for (int k = 1; k <= 3; ++k) {
      for (int q = 1; q <= k; ++q) {
        const DesignProblem prob = random_problem(gen, n, k, q);
        const VectorXd y = randn(gen, n, 1);
        const VectorXd lag_w = bartlett_weights(n, n / 3.0);
        const MatrixXd s = randn(gen, n, n);
        const MatrixXd wstar = 0.5 * (s + s.transpose());

        StatisticSpec spec;
        spec.kind = StatKind::Kernel;
        spec.weights = WeightsSpec::kernel(lag_w);
        StatResult res = statistic(prob, y, spec);
        REQUIRE_FALSE(res.singular);
        CHECK(rel_gap(res.value, testoracle::statistic_value(
                                     prob.X(), prob.R(), prob.r(), y,
                                     testoracle::Family::Kernel, lag_w)) <
              1e-8);

        spec.kind = StatKind::Eicker;
        spec.weights = WeightsSpec::eicker_toeplitz(lag_w);
        res = statistic(prob, y, spec);
        REQUIRE_FALSE(res.singular);
        CHECK(rel_gap(res.value, testoracle::statistic_value(
                                     prob.X(), prob.R(), prob.r(), y,
                                     testoracle::Family::Eicker, lag_w)) <
              1e-8);

        spec.kind = StatKind::GQ;
        spec.weights = WeightsSpec::gq(wstar);
        res = statistic(prob, y, spec);
        REQUIRE_FALSE(res.singular);
        CHECK(rel_gap(res.value, testoracle::statistic_value(
                                     prob.X(), prob.R(), prob.r(), y,
                                     testoracle::Family::GQ, lag_w, wstar)) <
              1e-8);

        spec.kind = StatKind::Ref;
        spec.weights = WeightsSpec::kernel(lag_w);
        res = statistic(prob, y, spec);
        REQUIRE_FALSE(res.singular);
        CHECK(rel_gap(res.value, testoracle::statistic_value(
                                     prob.X(), prob.R(), prob.r(), y,
                                     testoracle::Family::Ref, lag_w)) < 1e-8);
      }
    }
  }
}

TEST_CASE("signed root of the scalar statistic") {
  std::mt19937 gen(59);
  const int n = 11;
  const DesignProblem prob = random_problem(gen, n, 2, 1, true);
  StatisticSpec spec;
  spec.kind = StatKind::Kernel;
  spec.weights = WeightsSpec::kernel(bartlett_weights(n, 3.0));

  for (int rep = 0; rep < 10; ++rep) {
    const VectorXd y = randn(gen, n, 1);
    const double t = t_root(prob, y, spec);
    const StatResult res = statistic(prob, y, spec);
    CHECK_THAT(t * t, WithinAbs(res.value, 1e-12 * (1.0 + res.value)));
    CHECK_THAT(t_root(prob, -y, spec), WithinAbs(-t, 1e-12 * (1.0 + std::abs(t))));
  }

  const DesignProblem wide = random_problem(gen, n, 3, 2);
  CHECK_THROWS_AS(t_root(wide, randn(gen, n, 1), spec), input_error);
}

TEST_CASE("score matrix rank detector") {
  std::mt19937 gen(61);
  const int n = 9;
  const DesignProblem prob = random_problem(gen, n, 3, 2, true);

  const VectorXd y = randn(gen, n, 1);
  CHECK(b_matrix(prob, y).rows() == 2);
  CHECK(b_matrix(prob, y).cols() == n);
  CHECK_FALSE(is_in_B(prob, y));

  const VectorXd in_span = prob.X() * randn(gen, 3, 1);
  CHECK(is_in_B(prob, in_span));

  for (double c : {1e-3, 1.0, 1e3}) {
    CHECK(is_in_B(prob, c * y) == is_in_B(prob, y));
    CHECK(is_in_B(prob, c * in_span));
  }
}

TEST_CASE("restricted coefficient rank condition") {
  MatrixXd e1 = MatrixXd::Zero(3, 1);
  e1(0, 0) = 1.0;
  CHECK_FALSE(check_assumption2(
      DesignProblem(e1, MatrixXd::Ones(1, 1), VectorXd::Zero(1))));

  CHECK(check_assumption2(
      DesignProblem(MatrixXd::Ones(3, 1), MatrixXd::Ones(1, 1),
                    VectorXd::Zero(1))));

  const MatrixXd two_basis = MatrixXd::Identity(3, 2);
  CHECK_FALSE(check_assumption2(
      DesignProblem(two_basis, MatrixXd::Identity(2, 2), VectorXd::Zero(2))));
}

TEST_CASE("invariance under the null-preserving group") {
  std::mt19937 gen(73);
  const int n = 12;
  for (int rep = 0; rep < 6; ++rep) {
    const int k = 3;
    const int q = 1 + rep % 2;
    const DesignProblem prob = random_problem(gen, n, k, q);
    const VectorXd y = randn(gen, n, 1);
    const VectorXd mu0 = prob.null_mean();
    const VectorXd kernel_dir =
        prob.X() * Eigen::FullPivLU<MatrixXd>(prob.R()).kernel().col(0);
    const VectorXd mu1 = mu0 + kernel_dir;

    CHECK((prob.R() * prob.beta_map() * mu0 - prob.r()).norm() < 1e-10);
    CHECK((prob.R() * prob.beta_map() * mu1 - prob.r()).norm() < 1e-10);

    const VectorXd lag_w = bartlett_weights(n, 4.0);
    const MatrixXd s = randn(gen, n, n);
    const MatrixXd wstar = 0.5 * (s + s.transpose());
    StatisticSpec specs[4];
    specs[0].kind = StatKind::Kernel;
    specs[0].weights = WeightsSpec::kernel(lag_w);
    specs[1].kind = StatKind::Eicker;
    specs[1].weights = WeightsSpec::eicker_toeplitz(lag_w);
    specs[2].kind = StatKind::GQ;
    specs[2].weights = WeightsSpec::gq(wstar);
    specs[3].kind = StatKind::Ref;
    specs[3].weights = WeightsSpec::kernel(lag_w);

    for (const auto& spec : specs) {
      const double base = statistic(prob, y, spec).value;
      for (double delta : {-2.0, 0.5, 3.0}) {
        const VectorXd moved = delta * (y - mu0) + mu1;
        const double got = statistic(prob, moved, spec).value;
        CHECK(std::abs(got - base) < 1e-8 * (1.0 + std::abs(base)));
      }
    }
  }
}

TEST_CASE("restriction value enters only through a shift") {
  std::mt19937 gen(83);
  const int n = 10;
  const DesignProblem prob = random_problem(gen, n, 3, 2);
  const DesignProblem zero = prob.with_rhs(VectorXd::Zero(2));
  const VectorXd mu0 = prob.null_mean();
  StatisticSpec spec;
  spec.kind = StatKind::Kernel;
  spec.weights = WeightsSpec::kernel(bartlett_weights(n, 3.0));

  for (int rep = 0; rep < 8; ++rep) {
    const VectorXd y = randn(gen, n, 1);
    const double with_r = statistic(prob, y, spec).value;
    const double shifted = statistic(zero, y - mu0, spec).value;
    CHECK(std::abs(with_r - shifted) < 1e-12 * (1.0 + std::abs(with_r)));
  }
}

TEST_CASE("scale invariance at a zero restriction value") {
  std::mt19937 gen(89);
  const int n = 10;
  const DesignProblem prob = random_problem(gen, n, 2, 1, true);
  StatisticSpec spec;
  spec.kind = StatKind::Kernel;
  spec.weights = WeightsSpec::kernel(bartlett_weights(n, 3.0));
  const VectorXd y = randn(gen, n, 1);
  const double base = statistic(prob, y, spec).value;
  for (double c : {1e-4, 0.5, 7.0, 1e5, -3.0}) {
    CHECK(rel_gap(statistic(prob, c * y, spec).value, base) < 1e-12);
  }
}

TEST_CASE("nonnegativity under positive definite weightings") {
  std::mt19937 gen(97);
  const int n = 14;
  const DesignProblem prob = random_problem(gen, n, 3, 2);
  const VectorXd lag_w = bartlett_weights(n, 4.0);
  REQUIRE(check_weights_pd(lag_w));

  const MatrixXd m = randn(gen, n, n);
  const MatrixXd psd = m * m.transpose();
  StatisticSpec specs[4];
  specs[0].kind = StatKind::Kernel;
  specs[0].weights = WeightsSpec::kernel(lag_w);
  specs[1].kind = StatKind::Eicker;
  specs[1].weights = WeightsSpec::eicker_toeplitz(lag_w);
  specs[2].kind = StatKind::GQ;
  specs[2].weights = WeightsSpec::gq(psd);
  specs[3].kind = StatKind::Ref;
  specs[3].weights = WeightsSpec::kernel(lag_w);

  for (int rep = 0; rep < 25; ++rep) {
    const VectorXd y = randn(gen, n, 1);
    for (const auto& spec : specs) {
      CHECK(statistic(prob, y, spec).value >= 0.0);
    }
    const MatrixXd psi = psi_hat_w(prob, y, lag_w);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(psi, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues()(0) >=
          -1e-10 * std::max(es.eigenvalues()(2), 1.0));
  }
}

TEST_CASE("weighting bridges between the families") {
  std::mt19937 gen(101);

  // At an intercept-only design the Toeplitz-weighted estimator with
  // all-ones weights equals the kernel estimator with triangular weights of
  // bandwidth n: both average the residual autocovariances with weight
  // 1 - |lag|/n.
  const int n = 7;
  const DesignProblem icept(MatrixXd::Ones(n, 1), MatrixXd::Ones(1, 1),
                            VectorXd::Zero(1));
  StatisticSpec eicker;
  eicker.kind = StatKind::Eicker;
  eicker.weights = WeightsSpec::eicker_toeplitz(VectorXd::Ones(n));
  StatisticSpec kernel;
  kernel.kind = StatKind::Kernel;
  kernel.weights =
      WeightsSpec::kernel(bartlett_weights(n, static_cast<double>(n)));
  for (int rep = 0; rep < 10; ++rep) {
    const VectorXd y = randn(gen, n, 1);
    const StatResult a = statistic(icept, y, eicker);
    const StatResult b = statistic(icept, y, kernel);
    REQUIRE_FALSE(a.singular);
    CHECK(rel_gap(a.value, b.value) < 1e-10);
  }

  // For any design, the quadratic weighting with matrix w(|t-s|)/n
  // reproduces the kernel estimator with lag weights w.
  const int m = 9;
  const DesignProblem prob = random_problem(gen, m, 2, 1);
  const VectorXd lag_w = bartlett_weights(m, 3.0);
  StatisticSpec gq;
  gq.kind = StatKind::GQ;
  gq.weights = WeightsSpec::gq(testoracle::toeplitz_from(lag_w) / m);
  StatisticSpec kernel2;
  kernel2.kind = StatKind::Kernel;
  kernel2.weights = WeightsSpec::kernel(lag_w);
  for (int rep = 0; rep < 10; ++rep) {
    const VectorXd y = randn(gen, m, 1);
    const StatResult a = statistic(prob, y, gq);
    const StatResult b = statistic(prob, y, kernel2);
    REQUIRE_FALSE(a.singular);
    CHECK(rel_gap(a.value, b.value) < 1e-10);
  }
}

TEST_CASE("weighting validation") {
  CHECK_THROWS_AS(WeightsSpec::kernel(VectorXd::Zero(3)), input_error);
  CHECK_THROWS_AS(WeightsSpec::eicker_toeplitz(2.0 * VectorXd::Ones(3)),
                  input_error);
  CHECK_THROWS_AS(WeightsSpec::gq(MatrixXd::Ones(2, 3)), input_error);
  MatrixXd asym(2, 2);
  asym << 1, 0.5, -0.5, 1;
  CHECK_THROWS_AS(WeightsSpec::gq(asym), input_error);

  std::mt19937 gen(103);
  const DesignProblem prob = random_problem(gen, 6, 2, 1);
  StatisticSpec bad;
  bad.kind = StatKind::Kernel;
  bad.weights = WeightsSpec::eicker_toeplitz(bartlett_weights(6, 2.0));
  CHECK_THROWS_AS(StatEvaluator(prob, bad), input_error);
  bad.kind = StatKind::Eicker;
  bad.weights = WeightsSpec::kernel(bartlett_weights(6, 2.0));
  CHECK_THROWS_AS(StatEvaluator(prob, bad), input_error);
  bad.kind = StatKind::Kernel;
  bad.weights = WeightsSpec::kernel(bartlett_weights(5, 2.0));
  CHECK_THROWS_AS(StatEvaluator(prob, bad), input_error);
  bad.kind = StatKind::GQ;
  bad.weights = WeightsSpec::gq(MatrixXd::Identity(5, 5));
  CHECK_THROWS_AS(StatEvaluator(prob, bad), input_error);
}
