#ifndef SIZEGUARD_ALGORITHMS_HPP
#define SIZEGUARD_ALGORITHMS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sizeguard/covariance_models.hpp"
#include "sizeguard/errors.hpp"
#include "sizeguard/rng.hpp"
#include "sizeguard/test_statistics.hpp"

namespace sizeguard {

// Tuning for the three-stage search.  Zero-valued tolerances and iteration
// caps resolve to the defaults 1/sqrt(N1), 1/sqrt(N2), 20n and 30n at run
// time; an empty padding_orders list resolves to
// {2, 5, 10, 25, 50, 99} below p, plus p itself.
struct AlgoConfig {
  int M0 = 5000;  // stage-0 candidates per padding order
  int M1 = 10;    // stage-1 local searches
  int M2 = 2;     // stage-2 refinements
  long long N0 = 1000;
  long long N1 = 10000;
  long long N2 = 50000;
  double alpha = 0.05;
  int p = 0;
  PacfBox box;
  int max_iter_stage1 = 0;
  int max_iter_stage2 = 0;
  double tol_stage1 = 0.0;
  double tol_stage2 = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> padding_orders;
  int threads = 1;  // 0 resolves to the hardware concurrency
};

struct RunResult {
  double value = 0.0;
  PacfVector argmax_pacf;
  std::vector<double> stage_trace;
  std::vector<long long> replications_used;
  std::uint64_t seed = 0;
};

inline void validate_config(const AlgoConfig& cfg) {
  if (cfg.M2 < 1 || cfg.M1 < cfg.M2 || cfg.M0 < cfg.M1) {
    throw input_error("AlgoConfig: need M0 >= M1 >= M2 >= 1");
  }
  if (cfg.N0 < 1 || cfg.N1 < cfg.N0 || cfg.N2 < cfg.N1) {
    throw input_error("AlgoConfig: need 1 <= N0 <= N1 <= N2");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw input_error("AlgoConfig: alpha must lie in (0,1)");
  }
  if (cfg.p < 0) throw input_error("AlgoConfig: p must be nonnegative");
  if (cfg.max_iter_stage1 < 0 || cfg.max_iter_stage2 < 0) {
    throw input_error("AlgoConfig: iteration caps must be nonnegative");
  }
  if (cfg.tol_stage1 < 0.0 || cfg.tol_stage2 < 0.0) {
    throw input_error("AlgoConfig: tolerances must be nonnegative");
  }
  if (cfg.threads < 0) throw input_error("AlgoConfig: threads must be >= 0");
  for (int po : cfg.padding_orders) {
    if (po < 1 || po > cfg.p) {
      throw input_error("AlgoConfig: padding orders must lie in [1, p]");
    }
  }
}

inline std::vector<int> resolved_padding_orders(const AlgoConfig& cfg) {
  std::vector<int> orders = cfg.padding_orders;
  if (orders.empty()) {
    for (int po : {2, 5, 10, 25, 50, 99}) {
      if (po < cfg.p) orders.push_back(po);
    }
    orders.push_back(cfg.p);
  }
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  return orders;
}

inline int resolved_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(worker, begin, end) over a deterministic contiguous partition of
// [0, count).  Callers must write results into per-index slots so the
// partition (and hence the thread count) cannot affect the output.
template <typename Fn>
inline void parallel_for(long long count, int threads, Fn&& fn) {
  const int t = std::max(1, resolved_threads(threads));
  if (t == 1 || count < 2 * static_cast<long long>(t)) {
    if (count > 0) fn(0, 0, count);
    return;
  }
  const long long chunk = (count + t - 1) / t;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int w = 0; w < t; ++w) {
    const long long b = static_cast<long long>(w) * chunk;
    const long long e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, w, b, e] { fn(w, b, e); });
  }
  for (auto& th : pool) th.join();
}

// Smallest order statistic z with empirical CDF mass >= level: the
// ceil(level * N)-th value of the sorted sample.
inline double empirical_quantile(std::vector<double> samples, double level) {
  if (samples.empty()) {
    throw input_error("empirical_quantile: empty sample");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw input_error("empirical_quantile: level must lie in (0,1)");
  }
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<long long>(samples.size());
  auto idx = static_cast<long long>(
      std::ceil(level * static_cast<double>(n)));
  idx = std::clamp(idx, static_cast<long long>(1), n);
  return samples[static_cast<std::size_t>(idx - 1)];
}

// Coordinate-wise bijection between R^p and the open coefficient box of
// half-width 1 - epsilon.
inline std::vector<double> from_unbounded(const std::vector<double>& x,
                                          const PacfBox& box) {
  const double scale = (1.0 - box.epsilon) * (2.0 / std::numbers::pi);
  std::vector<double> rho(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) rho[i] = scale * std::atan(x[i]);
  return rho;
}

inline std::vector<double> to_unbounded(const std::vector<double>& rho,
                                        const PacfBox& box) {
  const double scale = 1.0 - box.epsilon;
  std::vector<double> x(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    x[i] = std::tan(std::numbers::pi / 2.0 * (rho[i] / scale));
  }
  return x;
}

namespace algo_detail {

// from_unbounded followed by a clamp that keeps the coordinates strictly
// inside the admissible box even when atan saturates in floating point.
inline PacfVector pacf_from_unbounded(const std::vector<double>& x,
                                      const PacfBox& box) {
  const double bound = std::min(1.0 - box.epsilon, 1.0 - 1e-9);
  std::vector<double> rho = from_unbounded(x, box);
  for (double& v : rho) v = std::clamp(v, -bound, bound);
  return PacfVector(std::move(rho));
}

}  // namespace algo_detail

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Simplex maximizer with reflection 1, expansion 2, contraction 0.5 and
// shrink 0.5.  Stops when the simplex function values satisfy
// |f_best - f_worst| <= tol * (|f_best| + tol) or at the iteration cap,
// returning the best vertex either way.
template <typename F>
inline NelderMeadResult nelder_mead_max(F&& f, std::vector<double> x0,
                                        double tol, int max_iter) {
  const std::size_t d = x0.size();
  NelderMeadResult out;
  if (d == 0) {
    out.x = std::move(x0);
    out.value = f(out.x);
    out.converged = true;
    return out;
  }

  struct Vertex {
    std::vector<double> x;
    double value;
  };
  std::vector<Vertex> simplex;
  simplex.reserve(d + 1);
  simplex.push_back({x0, f(x0)});
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> xi = x0;
    xi[i] += std::max(0.1, 0.1 * std::abs(x0[i]));
    simplex.push_back({xi, f(xi)});
  }
  // Stable ordering keeps the earlier vertex first on ties, so a flat
  // objective returns the start point.
  auto reorder = [&simplex] {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const Vertex& a, const Vertex& b) {
                       return a.value > b.value;
                     });
  };
  reorder();

  std::vector<double> centroid(d), xr(d), xe(d), xc(d);
  while (true) {
    const double fb = simplex.front().value;
    const double fw = simplex.back().value;
    if (std::abs(fb - fw) <= tol * (std::abs(fb) + tol)) {
      out.converged = true;
      break;
    }
    if (out.iterations >= max_iter) break;
    ++out.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v < d; ++v) {
      for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[v].x[i];
    }
    for (std::size_t i = 0; i < d; ++i) centroid[i] /= static_cast<double>(d);
    const std::vector<double>& worst = simplex.back().x;
    for (std::size_t i = 0; i < d; ++i) xr[i] = 2.0 * centroid[i] - worst[i];
    const double fr = f(xr);

    if (fr > simplex.front().value) {
      for (std::size_t i = 0; i < d; ++i) {
        xe[i] = centroid[i] + 2.0 * (centroid[i] - worst[i]);
      }
      const double fe = f(xe);
      if (fe > fr) {
        simplex.back() = {xe, fe};
      } else {
        simplex.back() = {xr, fr};
      }
    } else if (fr > simplex[d - 1].value) {
      simplex.back() = {xr, fr};
    } else {
      bool shrink = false;
      if (fr > simplex.back().value) {
        for (std::size_t i = 0; i < d; ++i) {
          xc[i] = centroid[i] + 0.5 * (xr[i] - centroid[i]);
        }
        const double fc = f(xc);
        if (fc >= fr) {
          simplex.back() = {xc, fc};
        } else {
          shrink = true;
        }
      } else {
        for (std::size_t i = 0; i < d; ++i) {
          xc[i] = centroid[i] + 0.5 * (worst[i] - centroid[i]);
        }
        const double fc = f(xc);
        if (fc > simplex.back().value) {
          simplex.back() = {xc, fc};
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (std::size_t v = 1; v <= d; ++v) {
          for (std::size_t i = 0; i < d; ++i) {
            simplex[v].x[i] =
                simplex[0].x[i] + 0.5 * (simplex[v].x[i] - simplex[0].x[i]);
          }
          simplex[v].value = f(simplex[v].x);
        }
      }
    }
    reorder();
  }

  out.x = simplex.front().x;
  out.value = simplex.front().value;
  return out;
}

// Monte-Carlo objective over a fixed noise panel: rows y_i = mu0 + L z_i
// with L the model's covariance factor.  Reusing one panel across all
// coefficient values keeps the objective deterministic for the optimizer.
class PanelObjective {
 public:
  PanelObjective(const StatEvaluator& eval, const Eigen::MatrixXd& panel,
                 int threads)
      : eval_(eval),
        panel_(panel),
        threads_(resolved_threads(threads)),
        mu0_(eval.problem().null_mean()) {}

  const std::vector<double>& values_for_factor(const Eigen::MatrixXd& l) {
    const int n = eval_.problem().n();
    y_.noalias() = panel_ * l.transpose();
    y_.rowwise() += mu0_.transpose();
    const long long rows = panel_.rows();
    values_.resize(static_cast<std::size_t>(rows));
    const bool root = eval_.spec().root;
    parallel_for(rows, threads_, [&](int, long long b, long long e) {
      StatWorkspace ws;
      Eigen::VectorXd yi(n);
      for (long long i = b; i < e; ++i) {
        yi = y_.row(i).transpose();
        const StatResult res = eval_.evaluate(yi, ws);
        values_[static_cast<std::size_t>(i)] =
            root ? std::sqrt(std::abs(res.value)) : res.value;
      }
    });
    return values_;
  }

  const std::vector<double>& values(const PacfVector& rho) {
    return values_for_factor(cholesky_from_pacf(rho, eval_.problem().n()));
  }

  double quantile(const PacfVector& rho, double level) {
    return empirical_quantile(values(rho), level);
  }

  double rejection(const PacfVector& rho, double c) {
    const std::vector<double>& v = values(rho);
    long long count = 0;
    for (double t : v) count += (t >= c) ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(v.size());
  }

 private:
  const StatEvaluator& eval_;
  const Eigen::MatrixXd& panel_;
  int threads_;
  Eigen::VectorXd mu0_;
  Eigen::MatrixXd y_;
  std::vector<double> values_;
};

inline double quantile_objective(const PacfVector& rho,
                                 const DesignProblem& prob,
                                 const StatisticSpec& spec, double level,
                                 const Eigen::MatrixXd& z_panel,
                                 int threads = 1) {
  StatEvaluator eval(prob, spec);
  PanelObjective obj(eval, z_panel, threads);
  return obj.quantile(rho, level);
}

inline double rejection_objective(const PacfVector& rho,
                                  const DesignProblem& prob,
                                  const StatisticSpec& spec, double c,
                                  const Eigen::MatrixXd& z_panel,
                                  int threads = 1) {
  StatEvaluator eval(prob, spec);
  PanelObjective obj(eval, z_panel, threads);
  return obj.rejection(rho, c);
}

namespace algo_detail {

// Shared driver for the critical-value and worst-case-size searches; the
// two differ only in the per-panel functional.
struct StageObjective {
  bool quantile_mode = true;
  double level = 0.95;
  double threshold = 0.0;
};

inline double eval_objective(PanelObjective& obj, const StageObjective& so,
                             const PacfVector& rho) {
  return so.quantile_mode ? obj.quantile(rho, so.level)
                          : obj.rejection(rho, so.threshold);
}

inline Eigen::MatrixXd make_panel(std::uint64_t seed, int stage, int search,
                                  long long rows, int n) {
  Eigen::MatrixXd panel(rows, n);
  fill_normal_panel(stream_key(seed, static_cast<std::uint64_t>(stage),
                               static_cast<std::uint64_t>(search)),
                    panel);
  return panel;
}

inline RunResult run_staged(const DesignProblem& prob,
                            const StatisticSpec& spec, const AlgoConfig& cfg,
                            const StageObjective& so) {
  validate_config(cfg);
  const int n = prob.n();
  const StatEvaluator eval(prob, spec);
  RunResult out;
  out.seed = cfg.seed;

  if (cfg.p == 0) {
    const Eigen::MatrixXd panel = make_panel(cfg.seed, 2, 0, cfg.N2, n);
    PanelObjective obj(eval, panel, cfg.threads);
    out.value = eval_objective(obj, so, PacfVector());
    out.stage_trace = {out.value};
    out.replications_used = {cfg.N2};
    return out;
  }

  const std::vector<int> orders = resolved_padding_orders(cfg);
  const auto p = static_cast<std::size_t>(cfg.p);

  // Stage 0: rank zero-padded low-order draws on one shared cheap panel.
  std::vector<std::vector<double>> candidates;
  candidates.reserve(orders.size() * static_cast<std::size_t>(cfg.M0));
  for (std::size_t oi = 0; oi < orders.size(); ++oi) {
    RandomStream stream(
        stream_key(cfg.seed, 0, static_cast<std::uint64_t>(oi) + 1));
    for (int i = 0; i < cfg.M0; ++i) {
      const PacfVector draw = jones_sample(orders[oi], cfg.box, stream);
      std::vector<double> rho(p, 0.0);
      std::copy(draw.rho.begin(), draw.rho.end(), rho.begin());
      candidates.push_back(std::move(rho));
    }
  }
  std::vector<double> f0(candidates.size());
  {
    const Eigen::MatrixXd panel0 = make_panel(cfg.seed, 0, 0, cfg.N0, n);
    PanelObjective obj0(eval, panel0, cfg.threads);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      f0[i] = eval_objective(obj0, so, PacfVector(candidates[i]));
    }
  }
  std::vector<std::size_t> rank0(candidates.size());
  std::iota(rank0.begin(), rank0.end(), std::size_t{0});
  std::stable_sort(rank0.begin(), rank0.end(),
                   [&f0](std::size_t a, std::size_t b) {
                     return f0[a] > f0[b];
                   });
  out.stage_trace.push_back(f0[rank0.front()]);

  // Stage 1: local searches from the best candidates, one fresh panel each.
  const double tol1 =
      cfg.tol_stage1 > 0.0
          ? cfg.tol_stage1
          : 1.0 / std::sqrt(static_cast<double>(cfg.N1));
  const double tol2 =
      cfg.tol_stage2 > 0.0
          ? cfg.tol_stage2
          : 1.0 / std::sqrt(static_cast<double>(cfg.N2));
  const int maxit1 = cfg.max_iter_stage1 > 0 ? cfg.max_iter_stage1 : 20 * n;
  const int maxit2 = cfg.max_iter_stage2 > 0 ? cfg.max_iter_stage2 : 30 * n;

  struct SearchOutcome {
    std::vector<double> x;
    double value;
  };
  std::vector<SearchOutcome> stage1(static_cast<std::size_t>(cfg.M1));
  for (int j = 0; j < cfg.M1; ++j) {
    const Eigen::MatrixXd panel = make_panel(cfg.seed, 1, j, cfg.N1, n);
    PanelObjective obj(eval, panel, cfg.threads);
    auto f = [&obj, &so, &cfg](const std::vector<double>& x) {
      return eval_objective(obj, so, pacf_from_unbounded(x, cfg.box));
    };
    const std::vector<double>& start =
        candidates[rank0[static_cast<std::size_t>(j)]];
    const NelderMeadResult res =
        nelder_mead_max(f, to_unbounded(start, cfg.box), tol1, maxit1);
    stage1[static_cast<std::size_t>(j)] = {res.x, res.value};
  }
  std::vector<std::size_t> rank1(stage1.size());
  std::iota(rank1.begin(), rank1.end(), std::size_t{0});
  std::stable_sort(rank1.begin(), rank1.end(),
                   [&stage1](std::size_t a, std::size_t b) {
                     return stage1[a].value > stage1[b].value;
                   });
  out.stage_trace.push_back(stage1[rank1.front()].value);

  // Stage 2: refine the best stage-1 points at the final precision.
  double best = 0.0;
  std::vector<double> best_x;
  for (int j = 0; j < cfg.M2; ++j) {
    const Eigen::MatrixXd panel = make_panel(cfg.seed, 2, j, cfg.N2, n);
    PanelObjective obj(eval, panel, cfg.threads);
    auto f = [&obj, &so, &cfg](const std::vector<double>& x) {
      return eval_objective(obj, so, pacf_from_unbounded(x, cfg.box));
    };
    const NelderMeadResult res = nelder_mead_max(
        f, stage1[rank1[static_cast<std::size_t>(j)]].x, tol2, maxit2);
    if (j == 0 || res.value > best) {
      best = res.value;
      best_x = res.x;
    }
  }
  out.value = best;
  out.argmax_pacf = pacf_from_unbounded(best_x, cfg.box);
  out.stage_trace.push_back(best);
  out.replications_used = {cfg.N0, cfg.N1, cfg.N2};
  return out;
}

}  // namespace algo_detail

// Size-controlling critical value over the stationary AR(p) family: the
// maximized (1 - alpha)-quantile of the statistic's null distribution.
inline RunResult critical_value(const DesignProblem& prob,
                                const StatisticSpec& spec,
                                const AlgoConfig& cfg) {
  algo_detail::StageObjective so;
  so.quantile_mode = true;
  so.level = 1.0 - cfg.alpha;
  return algo_detail::run_staged(prob, spec, cfg, so);
}

// Worst-case null rejection probability of {statistic >= C} over the same
// family.
inline RunResult size(const DesignProblem& prob, const StatisticSpec& spec,
                      double C, const AlgoConfig& cfg) {
  algo_detail::StageObjective so;
  so.quantile_mode = false;
  so.threshold = C;
  return algo_detail::run_staged(prob, spec, cfg, so);
}

// Monte-Carlo quantile of the statistic under a fixed error covariance.
// Shares the panel key of the degenerate p = 0 search so the identity
// covariance reproduces critical_value with p = 0 exactly.
inline double fixed_cov_quantile(const DesignProblem& prob,
                                 const StatisticSpec& spec,
                                 const CovKind& kind, double level,
                                 long long N, std::uint64_t seed,
                                 int threads = 1) {
  if (N < 1) throw input_error("fixed_cov_quantile: N must be positive");
  const StatEvaluator eval(prob, spec);
  const Eigen::MatrixXd panel = algo_detail::make_panel(seed, 2, 0, N,
                                                        prob.n());
  PanelObjective obj(eval, panel, threads);
  return empirical_quantile(obj.values_for_factor(cov_factor(kind, prob.n())),
                            level);
}

}  // namespace sizeguard

#endif  // SIZEGUARD_ALGORITHMS_HPP
