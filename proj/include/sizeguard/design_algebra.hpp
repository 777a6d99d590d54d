#ifndef SIZEGUARD_DESIGN_ALGEBRA_HPP
#define SIZEGUARD_DESIGN_ALGEBRA_HPP

#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "sizeguard/errors.hpp"

// Trigonometric/polynomial design blocks E and V, banded difference
// operators D, the degree count kappa, and the escape order rho(omega, L).
// These are the algebraic ingredients of the size-control conditions: a
// frequency omega is dangerous for a testing problem exactly when the
// columns of E at the appropriate order fail to escape the relevant set.

namespace sizeguard {

inline constexpr double kSpanTol = 1e-8;

// Relative singular-value rank: count of singular values above
// tol * largest.  Zero matrix has rank 0.
inline Eigen::Index numerical_rank(const Eigen::MatrixXd& m,
                                   double tol = kSpanTol) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol * sv(0)) ++rank;
  }
  return rank;
}

inline bool is_endpoint_frequency(double omega) {
  return omega == 0.0 || omega == std::numbers::pi;
}

// A finite tuple of distinct angular frequencies in [0, pi] with positive
// multiplicities.  The empty tuple is allowed.
struct FreqTuple {
  std::vector<double> omegas;
  std::vector<int> degrees;

  FreqTuple() = default;

  FreqTuple(std::vector<double> omegas_in, std::vector<int> degrees_in)
      : omegas(std::move(omegas_in)), degrees(std::move(degrees_in)) {
    if (omegas.size() != degrees.size()) {
      throw input_error("FreqTuple: omegas and degrees differ in length");
    }
    for (std::size_t i = 0; i < omegas.size(); ++i) {
      if (!(omegas[i] >= 0.0 && omegas[i] <= std::numbers::pi)) {
        throw input_error("FreqTuple: frequency outside [0, pi]");
      }
      if (i > 0 && !(omegas[i] > omegas[i - 1])) {
        throw input_error("FreqTuple: frequencies must be strictly increasing");
      }
      if (degrees[i] < 1) {
        throw input_error("FreqTuple: degrees must be positive");
      }
    }
  }

  int size() const { return static_cast<int>(omegas.size()); }
};

// Real polynomial c_0 + c_1 z + ... + c_a z^a with c_0 = 1.
struct Polynomial {
  std::vector<double> coeffs;

  Polynomial() : coeffs{1.0} {}

  explicit Polynomial(std::vector<double> coeffs_in)
      : coeffs(std::move(coeffs_in)) {
    if (coeffs.empty() || coeffs.front() != 1.0) {
      throw input_error("Polynomial: constant coefficient must be 1");
    }
  }

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }

  Polynomial operator*(const Polynomial& other) const {
    std::vector<double> prod(coeffs.size() + other.coeffs.size() - 1, 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      for (std::size_t j = 0; j < other.coeffs.size(); ++j) {
        prod[i + j] += coeffs[i] * other.coeffs[j];
      }
    }
    return Polynomial(std::move(prod));
  }
};

// n x 2 matrix with j-th row ((j+l)^s cos((j+l) omega), (j+l)^s sin((j+l)
// omega)), j = 1..n.  At the endpoint frequencies 0 and pi the trigonometric
// values are emitted exactly (sin column identically zero), which the
// containment logic downstream relies on.
inline Eigen::MatrixXd build_E(int n, int s, double omega, int l = 0) {
  if (n < 1) throw input_error("build_E: n must be positive");
  if (s < 0) throw input_error("build_E: order s must be nonnegative");
  if (!(omega >= 0.0 && omega <= std::numbers::pi)) {
    throw input_error("build_E: frequency outside [0, pi]");
  }
  Eigen::MatrixXd e(n, 2);
  for (int j = 1; j <= n; ++j) {
    const double t = static_cast<double>(j + l);
    const double scale = std::pow(t, static_cast<double>(s));
    double c, sn;
    if (omega == 0.0) {
      c = 1.0;
      sn = 0.0;
    } else if (omega == std::numbers::pi) {
      c = ((j + l) % 2 == 0) ? 1.0 : -1.0;
      sn = 0.0;
    } else {
      c = std::cos(t * omega);
      sn = std::sin(t * omega);
    }
    e(j - 1, 0) = scale * c;
    e(j - 1, 1) = scale * sn;
  }
  return e;
}

// Degree count: d per endpoint frequency, 2d per interior frequency.
inline int kappa(const FreqTuple& ft) {
  int total = 0;
  for (int i = 0; i < ft.size(); ++i) {
    total += is_endpoint_frequency(ft.omegas[i]) ? ft.degrees[i]
                                                 : 2 * ft.degrees[i];
  }
  return total;
}

// Product over the tuple of the elementary factors (1 - cos(omega) z) at
// endpoints and (1 - 2 cos(omega) z + z^2) in the interior, each raised to
// its multiplicity.  Degree equals kappa(ft).
inline Polynomial delta_poly(const FreqTuple& ft) {
  Polynomial result;
  for (int i = 0; i < ft.size(); ++i) {
    Polynomial factor;
    if (ft.omegas[i] == 0.0) {
      factor = Polynomial({1.0, -1.0});
    } else if (ft.omegas[i] == std::numbers::pi) {
      factor = Polynomial({1.0, 1.0});
    } else {
      factor = Polynomial({1.0, -2.0 * std::cos(ft.omegas[i]), 1.0});
    }
    for (int d = 0; d < ft.degrees[i]; ++d) result = result * factor;
  }
  return result;
}

// (m-a) x m banded matrix applying the filter theta (degree a): row i holds
// (theta_a, ..., theta_1, 1) starting at column i.  Identity when a = 0.
inline Eigen::MatrixXd build_D(int m, const Polynomial& theta) {
  const int a = theta.degree();
  if (m <= a) throw input_error("build_D: m must exceed the degree");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m - a, m);
  for (int i = 0; i < m - a; ++i) {
    for (int j = 0; j <= a; ++j) d(i, i + j) = theta.coeffs[a - j];
  }
  return d;
}

// Horizontal concatenation of E^{(l)}_{n,s}(omega_i) over s = 0..d_i-1 in
// tuple order; n x (2 sum d_i).
inline Eigen::MatrixXd build_V(int n, int l, const FreqTuple& ft) {
  if (ft.size() < 1) throw input_error("build_V: empty tuple");
  int width = 0;
  for (int d : ft.degrees) width += 2 * d;
  Eigen::MatrixXd v(n, width);
  int col = 0;
  for (int i = 0; i < ft.size(); ++i) {
    for (int s = 0; s < ft.degrees[i]; ++s) {
      v.middleCols(col, 2) = build_E(n, s, ft.omegas[i], l);
      col += 2;
    }
  }
  return v;
}

// Linear subspace of R^n held as a full-column-rank basis together with a
// cached orthonormal basis (computed once, reused by every containment
// test).  An empty basis encodes the zero subspace.
class Subspace {
 public:
  explicit Subspace(int ambient_dim)
      : basis_(Eigen::MatrixXd(ambient_dim, 0)),
        ortho_(Eigen::MatrixXd(ambient_dim, 0)) {
    if (ambient_dim < 1) throw input_error("Subspace: empty ambient space");
  }

  explicit Subspace(const Eigen::MatrixXd& basis) : basis_(basis) {
    if (basis_.rows() < 1) throw input_error("Subspace: empty ambient space");
    if (basis_.cols() >= basis_.rows()) {
      throw input_error("Subspace: dimension must be below the ambient one");
    }
    if (basis_.cols() == 0) {
      ortho_ = Eigen::MatrixXd(basis_.rows(), 0);
      return;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis_);
    qr.setThreshold(kSpanTol);
    if (qr.rank() != basis_.cols()) {
      throw input_error("Subspace: basis is numerically rank deficient");
    }
    ortho_ = qr.householderQ() *
             Eigen::MatrixXd::Identity(basis_.rows(), basis_.cols());
  }

  int ambient_dim() const { return static_cast<int>(basis_.rows()); }
  int dim() const { return static_cast<int>(basis_.cols()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const Eigen::MatrixXd& orthonormal_basis() const { return ortho_; }

  // True iff every column of m lies in the subspace up to relative residual
  // tol; zero columns are contained by convention.
  bool contains(const Eigen::MatrixXd& m, double tol = kSpanTol) const {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double norm = m.col(c).norm();
      if (norm == 0.0) continue;
      if (dim() == 0) return false;
      const Eigen::VectorXd residual =
          m.col(c) - ortho_ * (ortho_.transpose() * m.col(c));
      if (residual.norm() > tol * norm) return false;
    }
    return true;
  }

 private:
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd ortho_;
};

inline bool span_contains(const Subspace& a, const Eigen::MatrixXd& m,
                          double tol = kSpanTol) {
  return a.contains(m, tol);
}

inline bool span_contains(const Eigen::MatrixXd& a, const Eigen::MatrixXd& m,
                          double tol = kSpanTol) {
  return Subspace(a).contains(m, tol);
}

// Smallest order s with span(E_{n,s}(omega)) not contained in L.  Positive
// values occur at finitely many frequencies only.  The search is capped at
// s = n; hitting the cap means the inputs are numerically degenerate (for a
// genuine subspace the order is at most dim(L) + 1).
inline int rho_of(double omega, const Subspace& l) {
  const int n = l.ambient_dim();
  for (int s = 0; s <= n; ++s) {
    if (!l.contains(build_E(n, s, omega))) return s;
  }
  throw numerical_error("rho_of: escape order search exceeded its cap");
}

// Projector onto the orthogonal complement of span(a); identity for an
// empty basis.
inline Eigen::MatrixXd ortho_projector_complement(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(kSpanTol);
  if (qr.rank() != a.cols()) {
    throw input_error("ortho_projector_complement: rank-deficient basis");
  }
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(n, a.cols());
  return Eigen::MatrixXd::Identity(n, n) - q * q.transpose();
}

}  // namespace sizeguard

#endif
