#ifndef SIZEGUARD_CONDITIONS_HPP
#define SIZEGUARD_CONDITIONS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "sizeguard/design_algebra.hpp"
#include "sizeguard/errors.hpp"
#include "sizeguard/test_statistics.hpp"

// Checkable sufficient conditions for size control.  For every frequency
// gamma in [0, pi] the trigonometric pair E at the escape order
// rho(gamma, M0lin) must avoid the degeneracy set of the statistic: the
// singularity set of the covariance estimator (Kernel/GQ families) or
// span(X) (Eicker family).  A grid scan is numerical evidence, not a proof;
// the report carries the worst margin so callers can judge it.

namespace sizeguard {

// Which degeneracy set the scanned condition refers to.
enum class ConditionFamily { KernelGQ, Eicker };

struct FrequencyGrid {
  int main_points = 100001;      // equally spaced on [0, pi]
  int refine_points = 100001;    // equally spaced on [0, refine_upper]
  double refine_upper = 1e-6;

  // The profile grid; the escape-order profile is meaningful here because
  // neighboring points are far enough apart for span comparisons.
  std::vector<double> main_frequencies() const {
    if (main_points < 2) throw input_error("FrequencyGrid: too few points");
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(main_points));
    for (int i = 0; i < main_points; ++i) {
      g.push_back(static_cast<double>(i) * std::numbers::pi /
                  (main_points - 1));
    }
    g[static_cast<std::size_t>(main_points) - 1] = std::numbers::pi;
    return g;
  }

  // Main grid plus the optional refinement near zero; margins are scanned
  // over this union.
  std::vector<double> frequencies() const {
    std::vector<double> g = main_frequencies();
    if (refine_points > 1 && refine_upper > 0.0) {
      g.reserve(g.size() + static_cast<std::size_t>(refine_points));
      for (int i = 0; i < refine_points; ++i) {
        g.push_back(static_cast<double>(i) * refine_upper /
                    (refine_points - 1));
      }
    }
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  }
};

struct ExceptionalFrequency {
  double frequency = 0.0;
  int order = 0;
};

struct ConditionReport {
  bool assumption2_ok = false;
  // Frequencies with escape order > 0; everywhere else the order is 0.
  std::vector<ExceptionalFrequency> exceptional;
  std::size_t grid_points = 0;
  double min_criterion = 0.0;
  double argmin_frequency = 0.0;
  bool passed = false;
  ConditionFamily family = ConditionFamily::KernelGQ;
};

// Basis of the linear space parallel to the null mean set: X applied to the
// kernel of R.  Dimension k - q; the zero subspace when q = k.
inline Subspace m0lin_basis(const DesignProblem& prob) {
  if (prob.q() == prob.k()) return Subspace(prob.n());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(prob.R());
  lu.setThreshold(kSpanTol);
  const Eigen::MatrixXd ker = lu.kernel();
  return Subspace(prob.X() * ker);
}

// Escape order rho(gamma, M0lin) at every grid frequency.
inline std::vector<ExceptionalFrequency> rho_profile(
    const DesignProblem& prob, const std::vector<double>& grid) {
  const Subspace l = m0lin_basis(prob);
  std::vector<ExceptionalFrequency> profile;
  profile.reserve(grid.size());
  for (double g : grid) {
    profile.push_back({g, rho_of(g, l)});
  }
  return profile;
}

namespace scan_detail {

// Criterion threshold for "the image escaped the degeneracy set".  The
// margins below are normalized by the input column norm, so structural
// containment leaves pure rounding noise (1e-16 .. 1e-14) while a genuine
// escape is bounded below by the span tolerance that gated the order
// profile (1e-8) times the problem's conditioning.  The threshold sits in
// the gap between those magnitudes.
inline constexpr double kScanTol = 1e-12;

// Normalized margin by which span(E) escapes span(X): largest relative
// projection residual over the nonzero columns.
inline double eicker_margin(const Subspace& x_span, const Eigen::MatrixXd& e) {
  const Eigen::MatrixXd& q = x_span.orthonormal_basis();
  double best = 0.0;
  for (Eigen::Index c = 0; c < e.cols(); ++c) {
    const double norm = e.col(c).norm();
    if (norm == 0.0) continue;
    const Eigen::VectorXd resid = e.col(c) - q * (q.transpose() * e.col(c));
    best = std::max(best, resid.norm() / norm);
  }
  return best;
}

// Normalized margin by which span(E) escapes the singularity set B.  B is a
// cone and y -> B(y) is linear, so the span escapes iff some element of
// span(E) maps to a full-rank B-image.  For q = 1 that is the sup-norm of
// the single row of B per column; for q > 1 the smallest singular value of
// B(v) over the columns and two fixed in-span combinations.
inline double kernel_margin(const DesignProblem& prob,
                            const Eigen::MatrixXd& e) {
  const int q = prob.q();
  const double a_norm = prob.a_map_opnorm();
  std::vector<Eigen::VectorXd> candidates;
  for (Eigen::Index c = 0; c < e.cols(); ++c) {
    if (e.col(c).norm() > 0.0) candidates.push_back(e.col(c));
  }
  if (candidates.size() == 2 && q > 1) {
    const Eigen::VectorXd a = candidates[0] / candidates[0].norm();
    const Eigen::VectorXd b = candidates[1] / candidates[1].norm();
    candidates.push_back(a + 0.6180339887498949 * b);
    candidates.push_back(a - 0.3819660112501051 * b);
  }
  double best = 0.0;
  for (const auto& v : candidates) {
    const Eigen::VectorXd u = v - prob.X() * (prob.beta_map() * v);
    const double scale = a_norm * v.norm();
    if (scale == 0.0) continue;
    if (q == 1) {
      const double sup =
          (prob.a_map().transpose().cwiseProduct(u)).cwiseAbs().maxCoeff();
      best = std::max(best, sup / scale);
    } else {
      const Eigen::MatrixXd b_img = prob.a_map() * u.asDiagonal();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(b_img);
      best = std::max(best, svd.singularValues()(q - 1) / scale);
    }
  }
  return best;
}

}  // namespace scan_detail

// Scan of the non-inclusion condition over a frequency grid covering
// [0, pi].  The exceptional set is profiled on the main grid, where
// neighboring spans are distinguishable; spacings far below the span
// tolerance would report spurious positive orders.  Margins are then
// evaluated pointwise (at the per-point escape order) over the union of the
// main grid, the refinement grid and the exceptional frequencies.  The
// report depends only on X and R, never on r.
inline ConditionReport scan_noninclusion(const DesignProblem& prob,
                                         const StatisticSpec& spec,
                                         const FrequencyGrid& grid = {}) {
  std::vector<double> freqs = grid.frequencies();
  if (freqs.empty() || freqs.front() != 0.0 ||
      freqs.back() != std::numbers::pi) {
    throw input_error("scan_noninclusion: grid must cover [0, pi]");
  }
  ConditionReport report;
  report.family = spec.kind == StatKind::Eicker ? ConditionFamily::Eicker
                                                : ConditionFamily::KernelGQ;
  report.assumption2_ok = check_assumption2(prob);

  const Subspace l = m0lin_basis(prob);
  const Subspace x_span(prob.X());
  const int n = prob.n();

  for (const ExceptionalFrequency& e :
       rho_profile(prob, grid.main_frequencies())) {
    if (e.order > 0) {
      report.exceptional.push_back(e);
      freqs.push_back(e.frequency);
    }
  }
  std::sort(freqs.begin(), freqs.end());
  freqs.erase(std::unique(freqs.begin(), freqs.end()), freqs.end());
  report.grid_points = freqs.size();

  bool first = true;
  for (double g : freqs) {
    const int order = rho_of(g, l);
    const Eigen::MatrixXd e = build_E(n, order, g);
    const double margin = report.family == ConditionFamily::Eicker
                              ? scan_detail::eicker_margin(x_span, e)
                              : scan_detail::kernel_margin(prob, e);
    if (first || margin < report.min_criterion) {
      report.min_criterion = margin;
      report.argmin_frequency = g;
      first = false;
    }
  }
  report.passed = report.min_criterion > scan_detail::kScanTol;
  if (report.family == ConditionFamily::KernelGQ && !report.assumption2_ok) {
    report.passed = false;
  }
  return report;
}

}  // namespace sizeguard

#endif
