#ifndef SIZEGUARD_COVARIANCE_MODELS_HPP
#define SIZEGUARD_COVARIANCE_MODELS_HPP

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sizeguard/errors.hpp"
#include "sizeguard/rng.hpp"

// Stationary AR(p) correlation models parameterized by partial
// autocorrelations, their triangular factors via the Levinson recursion, a
// sampler that is uniform on the stationarity region in coefficient space,
// and two fixed auxiliary covariance models (random walk, AR(1) started at
// zero).

namespace sizeguard {

inline constexpr double kPacfBoundaryTol = 1e-12;

// Partial autocorrelations (rho_1, ..., rho_p), each strictly inside
// (-1, 1).  p = 0 encodes i.i.d. errors.  Values within 1e-12 of the
// boundary are rejected rather than clamped: the correlation model
// degenerates there and optimizers are kept interior by construction.
struct PacfVector {
  std::vector<double> rho;

  PacfVector() = default;

  explicit PacfVector(std::vector<double> rho_in) : rho(std::move(rho_in)) {
    for (double r : rho) {
      if (!(std::abs(r) < 1.0 - kPacfBoundaryTol)) {
        throw input_error(
            "PacfVector: partial autocorrelation too close to the unit "
            "boundary");
      }
    }
  }

  int order() const { return static_cast<int>(rho.size()); }
};

// Restriction of the partial autocorrelation space to (-1+eps, 1-eps)^p.
struct PacfBox {
  double epsilon = 0.0;

  PacfBox() = default;

  explicit PacfBox(double eps) : epsilon(eps) {
    if (!(eps >= 0.0 && eps < 1.0)) {
      throw input_error("PacfBox: epsilon must lie in [0, 1)");
    }
  }
};

namespace levinson_detail {

// Levinson coefficient table: phi[k] holds the order-k predictor
// coefficients (phi_{k,1}, ..., phi_{k,k}); sigma[k] is the innovation
// standard deviation of the order-k predictor (sigma[0] = 1).
struct Table {
  std::vector<std::vector<double>> phi;
  std::vector<double> sigma;
};

inline Table build_table(const PacfVector& rho) {
  const int p = rho.order();
  Table t;
  t.phi.resize(p + 1);
  t.sigma.resize(p + 1);
  t.sigma[0] = 1.0;
  double var = 1.0;
  for (int k = 1; k <= p; ++k) {
    const double rk = rho.rho[k - 1];
    t.phi[k].resize(k);
    for (int j = 0; j < k - 1; ++j) {
      t.phi[k][j] = t.phi[k - 1][j] - rk * t.phi[k - 1][k - 2 - j];
    }
    t.phi[k][k - 1] = rk;
    var *= 1.0 - rk * rk;
    t.sigma[k] = std::sqrt(var);
  }
  return t;
}

}  // namespace levinson_detail

// AR coefficients (phi_1, ..., phi_p) of the stationary AR(p) process with
// the given partial autocorrelations (step-up Levinson recursion).
inline std::vector<double> pacf_to_ar_coeffs(const PacfVector& rho) {
  const auto table = levinson_detail::build_table(rho);
  return table.phi.empty() ? std::vector<double>{} : table.phi.back();
}

// Autocorrelations r_0 = 1, r_1, ..., r_{nlags} of the AR(p) process.
inline std::vector<double> ar_autocorrelations(const PacfVector& rho,
                                               int nlags) {
  const int p = rho.order();
  const auto table = levinson_detail::build_table(rho);
  std::vector<double> r(static_cast<std::size_t>(nlags) + 1, 0.0);
  r[0] = 1.0;
  double var = 1.0;
  for (int k = 1; k <= nlags; ++k) {
    if (k <= p) {
      double acc = rho.rho[k - 1] * var;
      for (int j = 1; j < k; ++j) acc += table.phi[k - 1][j - 1] * r[k - j];
      r[k] = acc;
      var *= 1.0 - rho.rho[k - 1] * rho.rho[k - 1];
    } else {
      double acc = 0.0;
      for (int j = 1; j <= p; ++j) acc += table.phi[p][j - 1] * r[k - j];
      r[k] = acc;
    }
  }
  return r;
}

// Symmetric positive-definite Toeplitz correlation matrix of the AR(p)
// process (unit diagonal).
inline Eigen::MatrixXd ar_corr_matrix(const PacfVector& rho, int n) {
  if (n < 1) throw input_error("ar_corr_matrix: n must be positive");
  const auto r = ar_autocorrelations(rho, n - 1);
  Eigen::MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) sigma(i, j) = r[std::abs(i - j)];
  }
  return sigma;
}

// Lower-triangular L with L L' = ar_corr_matrix(rho, n) and positive
// diagonal, built row by row from the Levinson predictor coefficients in
// O(p n^2) without factoring the dense matrix: row t realizes
// u_t = sum_j phi_{k,j} u_{t-j} + sigma_k eps_t with k = min(t-1, p).
inline Eigen::MatrixXd cholesky_from_pacf(const PacfVector& rho, int n) {
  if (n < 1) throw input_error("cholesky_from_pacf: n must be positive");
  const int p = rho.order();
  const auto table = levinson_detail::build_table(rho);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  l(0, 0) = 1.0;
  for (int t = 2; t <= n; ++t) {
    const int k = std::min(t - 1, p);
    auto row = l.row(t - 1);
    for (int j = 1; j <= k; ++j) {
      row.head(t - 1) += table.phi[k][j - 1] * l.row(t - 1 - j).head(t - 1);
    }
    l(t - 1, t - 1) = table.sigma[k];
  }
  return l;
}

// One draw of partial autocorrelations whose induced AR(p) coefficient
// vector is uniform on the stationarity region (for epsilon = 0).  The k-th
// coordinate has density proportional to (1-x)^a (1+x)^b on (-1, 1) with
// a = ceil((k-1)/2), b = floor((k-1)/2) -- the Jacobian of the step-up
// recursion -- realized as a shifted Beta(b+1, a+1) variate.  For
// epsilon > 0 every coordinate of the epsilon = 0 draw is scaled by
// 1 - epsilon.
inline PacfVector jones_sample(int p, const PacfBox& box, RandomStream& rng) {
  if (p < 1) throw input_error("jones_sample: p must be positive");
  std::vector<double> rho(static_cast<std::size_t>(p));
  for (int k = 1; k <= p; ++k) {
    const int a = k / 2;        // ceil((k-1)/2)
    const int b = (k - 1) / 2;  // floor((k-1)/2)
    const double x = rng.beta_integer(b + 1, a + 1);
    rho[k - 1] = (1.0 - box.epsilon) * (2.0 * x - 1.0);
  }
  return PacfVector(std::move(rho));
}

// Covariance of a standard Gaussian random walk observed at times 1..n:
// entry (i, j) = min(i, j).
inline Eigen::MatrixXd random_walk_cov(int n) {
  if (n < 1) throw input_error("random_walk_cov: n must be positive");
  Eigen::MatrixXd sigma(n, n);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      sigma(i - 1, j - 1) = static_cast<double>(std::min(i, j));
    }
  }
  return sigma;
}

// Covariance of an AR(1) recursion started at zero: entry (i, j) =
// rho^|i-j| (1 - rho^{2 min(i,j)}) / (1 - rho^2).
inline Eigen::MatrixXd ar1_startvalue_cov(double rho_coef, int n) {
  if (!(std::abs(rho_coef) < 1.0)) {
    throw input_error("ar1_startvalue_cov: coefficient must be in (-1, 1)");
  }
  if (n < 1) throw input_error("ar1_startvalue_cov: n must be positive");
  Eigen::MatrixXd sigma(n, n);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      const int m = std::min(i, j);
      const double num =
          1.0 - std::pow(rho_coef, 2.0 * static_cast<double>(m));
      const double denom = 1.0 - rho_coef * rho_coef;
      sigma(i - 1, j - 1) =
          std::pow(rho_coef, static_cast<double>(std::abs(i - j))) * num /
          denom;
    }
  }
  return sigma;
}

// Error covariance model selector for the samplers and the CLI.
struct CovKind {
  enum class Tag { Identity, ARpacf, RandomWalk, AR1StartValue };

  Tag tag = Tag::Identity;
  PacfVector pacf;       // ARpacf
  double ar1_coef = 0.0;  // AR1StartValue

  static CovKind identity() { return CovKind{}; }

  static CovKind ar_pacf(PacfVector rho) {
    CovKind k;
    k.tag = Tag::ARpacf;
    k.pacf = std::move(rho);
    return k;
  }

  static CovKind random_walk() {
    CovKind k;
    k.tag = Tag::RandomWalk;
    return k;
  }

  static CovKind ar1_startvalue(double coef) {
    if (!(std::abs(coef) < 1.0)) {
      throw input_error("CovKind: AR(1) coefficient must be in (-1, 1)");
    }
    CovKind k;
    k.tag = Tag::AR1StartValue;
    k.ar1_coef = coef;
    return k;
  }
};

// Lower-triangular factor L with L L' equal to the model covariance.  The
// random-walk factor is the all-ones lower triangle (exact); the AR(1)
// start-value model goes through a dense symmetric positive-definite
// factorization whose failure surfaces as a typed error.
inline Eigen::MatrixXd cov_factor(const CovKind& kind, int n) {
  if (n < 1) throw input_error("cov_factor: n must be positive");
  switch (kind.tag) {
    case CovKind::Tag::Identity:
      return Eigen::MatrixXd::Identity(n, n);
    case CovKind::Tag::ARpacf:
      return cholesky_from_pacf(kind.pacf, n);
    case CovKind::Tag::RandomWalk: {
      Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
      l.triangularView<Eigen::Lower>().setOnes();
      return l;
    }
    case CovKind::Tag::AR1StartValue: {
      Eigen::LLT<Eigen::MatrixXd> llt(ar1_startvalue_cov(kind.ar1_coef, n));
      if (llt.info() != Eigen::Success) {
        throw numerical_error(
            "cov_factor: dense factorization failed (matrix not numerically "
            "positive definite)");
      }
      return llt.matrixL();
    }
  }
  throw input_error("cov_factor: unknown covariance kind");
}

}  // namespace sizeguard

#endif
