#ifndef SIZEGUARD_CLI_HPP
#define SIZEGUARD_CLI_HPP

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "sizeguard/algorithms.hpp"
#include "sizeguard/conditions.hpp"
#include "sizeguard/covariance_models.hpp"
#include "sizeguard/errors.hpp"
#include "sizeguard/test_statistics.hpp"

namespace sizeguard {

// Everything a single invocation needs; filled from flags, consumed by
// run_job so commands stay testable without a process boundary.
struct JobSpec {
  std::string command;  // check | critical-value | size | quantile
  std::string design_path;
  std::string restriction_inline;  // rows "a,b,c;d,e,f"
  std::string restriction_path;
  std::vector<double> rhs;  // empty resolves to zeros
  std::string statistic = "tw";
  bool root = false;
  std::string kernel = "bartlett";
  double bandwidth = 0.0;  // 0 resolves to n/10
  std::string weights_path;
  std::string cov;
  double alpha = 0.05;
  double threshold = 0.0;     // size command cutoff C
  long long n_draws = 10000;  // quantile command sample size
  AlgoConfig tuning;          // p and box are derived from cov/box_epsilon
  double box_epsilon = 0.0;
  bool require_conditions = false;
  long long grid_size = 100001;
  std::string output_path;
  std::string output_format = "json";
};

struct RunArtifacts {
  int exit_code = 0;
  nlohmann::json doc;
};

namespace cli_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream stream(s);
  while (std::getline(stream, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline bool parse_double(const std::string& cell, double& value) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  errno = 0;
  char* end = nullptr;
  value = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE;
}

inline double parse_cell(const std::string& cell, const std::string& what,
                         long long row, long long col) {
  double value = 0.0;
  if (!parse_double(cell, value)) {
    throw input_error(what + ": non-numeric cell \"" + trim(cell) +
                      "\" (row " + std::to_string(row) + ", col " +
                      std::to_string(col) + ")");
  }
  return value;
}

// Rows of comma-separated numbers; rows separated by newlines (sep '\n')
// or semicolons (inline restrictions).  Line numbers in errors refer to the
// original text, including any header.
inline Eigen::MatrixXd parse_rows(const std::vector<std::string>& lines,
                                  const std::string& what,
                                  bool allow_header) {
  std::vector<std::vector<double>> rows;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string line = trim(lines[li]);
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (rows.empty() && allow_header && li == 0) {
      bool numeric = true;
      double ignored = 0.0;
      for (const std::string& c : cells) {
        if (!parse_double(c, ignored)) {
          numeric = false;
          break;
        }
      }
      if (!numeric) continue;  // header row
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      row.push_back(parse_cell(cells[ci], what,
                               static_cast<long long>(li) + 1,
                               static_cast<long long>(ci) + 1));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw input_error(what + ": ragged row " + std::to_string(li + 1) +
                        " has " + std::to_string(row.size()) +
                        " cells, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw input_error(what + ": no numeric rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.front().size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  return m;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace cli_detail

// Numeric matrix from a comma-separated file; a non-numeric first row is
// treated as a header.
inline Eigen::MatrixXd parse_design_csv(const std::string& path) {
  return cli_detail::parse_rows(cli_detail::read_lines(path),
                                "design CSV " + path, true);
}

namespace cli_detail {

inline Eigen::MatrixXd restriction_matrix(const JobSpec& job) {
  if (!job.restriction_inline.empty() && !job.restriction_path.empty()) {
    throw input_error("give the restriction inline or as a file, not both");
  }
  if (!job.restriction_inline.empty()) {
    return parse_rows(split(job.restriction_inline, ';'), "restriction",
                      false);
  }
  if (!job.restriction_path.empty()) {
    return parse_rows(read_lines(job.restriction_path),
                      "restriction CSV " + job.restriction_path, true);
  }
  throw input_error("missing restriction: use --R or --R-file");
}

inline Eigen::VectorXd rhs_vector(const JobSpec& job, int q) {
  if (job.rhs.empty()) return Eigen::VectorXd::Zero(q);
  if (job.rhs.size() == 1 && q > 1) {
    return Eigen::VectorXd::Constant(q, job.rhs.front());
  }
  if (static_cast<int>(job.rhs.size()) != q) {
    throw input_error("--r needs " + std::to_string(q) + " values");
  }
  Eigen::VectorXd r(q);
  for (int i = 0; i < q; ++i) r(i) = job.rhs[static_cast<std::size_t>(i)];
  return r;
}

inline StatisticSpec statistic_spec(const JobSpec& job, int n) {
  StatisticSpec spec;
  spec.root = job.root;
  if (job.statistic == "gq") {
    spec.kind = StatKind::GQ;
    if (job.weights_path.empty()) {
      throw input_error("--statistic gq needs --weights-file (n x n matrix)");
    }
    Eigen::MatrixXd w = parse_rows(read_lines(job.weights_path),
                                   "weights CSV " + job.weights_path, true);
    spec.weights = WeightsSpec::gq(std::move(w));
    return spec;
  }
  if (job.statistic == "tw") {
    spec.kind = StatKind::Kernel;
  } else if (job.statistic == "tref") {
    spec.kind = StatKind::Ref;
  } else if (job.statistic == "eicker") {
    spec.kind = StatKind::Eicker;
  } else {
    throw input_error("unknown statistic: " + job.statistic);
  }
  Eigen::VectorXd w;
  if (!job.weights_path.empty()) {
    Eigen::MatrixXd m = parse_rows(read_lines(job.weights_path),
                                   "weights CSV " + job.weights_path, true);
    if (m.rows() != 1 && m.cols() != 1) {
      throw input_error("lag-weight file must be a single row or column");
    }
    w = m.rows() == 1 ? Eigen::VectorXd(m.row(0).transpose())
                      : Eigen::VectorXd(m.col(0));
    if (w.size() != n) {
      throw input_error("lag-weight file must hold exactly n values");
    }
  } else {
    if (job.kernel != "bartlett") {
      throw input_error("unknown kernel: " + job.kernel);
    }
    const double bw = job.bandwidth > 0.0 ? job.bandwidth : n / 10.0;
    w = bartlett_weights(n, bw);
  }
  spec.weights = spec.kind == StatKind::Eicker
                     ? WeightsSpec::eicker_toeplitz(std::move(w))
                     : WeightsSpec::kernel(std::move(w));
  return spec;
}

// "ar:<order>" or "iid" for the staged commands.
inline int ar_order(const std::string& cov) {
  if (cov == "iid") return 0;
  if (cov.rfind("ar:", 0) == 0) {
    const std::string body = cov.substr(3);
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(body.c_str(), &end, 10);
    if (body.empty() || end != body.c_str() + body.size() || errno == ERANGE ||
        v < 0) {
      throw input_error("bad AR order in --cov " + cov);
    }
    return static_cast<int>(v);
  }
  throw input_error("--cov must be iid or ar:<order> for this command");
}

// "iid", "rw", "ar1sv:<coef>" or "ar:<pacf,...>" for the quantile command.
inline CovKind fixed_cov(const std::string& cov) {
  if (cov == "iid") return CovKind::identity();
  if (cov == "rw") return CovKind::random_walk();
  if (cov.rfind("ar1sv:", 0) == 0) {
    double coef = 0.0;
    if (!parse_double(cov.substr(6), coef)) {
      throw input_error("bad coefficient in --cov " + cov);
    }
    return CovKind::ar1_startvalue(coef);
  }
  if (cov.rfind("ar:", 0) == 0) {
    std::vector<double> rho;
    for (const std::string& c : split(cov.substr(3), ',')) {
      double v = 0.0;
      if (!parse_double(c, v)) {
        throw input_error("bad coefficient list in --cov " + cov);
      }
      rho.push_back(v);
    }
    return CovKind::ar_pacf(PacfVector(std::move(rho)));
  }
  throw input_error("--cov must be iid, rw, ar1sv:<coef> or ar:<pacf,...>");
}

inline nlohmann::json report_json(const ConditionReport& report) {
  nlohmann::json ex = nlohmann::json::array();
  for (const ExceptionalFrequency& e : report.exceptional) {
    ex.push_back({{"frequency", e.frequency}, {"order", e.order}});
  }
  return {
      {"family", report.family == ConditionFamily::Eicker ? "eicker"
                                                          : "kernel-gq"},
      {"assumption2_ok", report.assumption2_ok},
      {"grid_points", report.grid_points},
      {"min_criterion", report.min_criterion},
      {"argmin_frequency", report.argmin_frequency},
      {"exceptional", ex},
      {"passed", report.passed},
  };
}

inline nlohmann::json result_json(const RunResult& res) {
  return {
      {"value", res.value},
      {"argmax_pacf", res.argmax_pacf.rho},
      {"stage_trace", res.stage_trace},
      {"replications_used", res.replications_used},
      {"seed", res.seed},
  };
}

inline nlohmann::json config_json(const JobSpec& job, int n,
                                  const AlgoConfig& tuning) {
  nlohmann::json cfg = {
      {"design", job.design_path},
      {"R", job.restriction_inline},
      {"R_file", job.restriction_path},
      {"r", job.rhs},
      {"statistic", job.statistic},
      {"root", job.root},
      {"kernel", job.kernel},
      {"bandwidth", job.bandwidth > 0.0 ? job.bandwidth : n / 10.0},
      {"weights_file", job.weights_path},
      {"cov", job.cov},
      {"alpha", job.alpha},
      {"seed", tuning.seed},
      {"threads", tuning.threads},
      {"grid_size", job.grid_size},
      {"require_conditions", job.require_conditions},
      {"format", job.output_format},
  };
  if (job.command == "size") cfg["C"] = job.threshold;
  if (job.command == "quantile") cfg["N"] = job.n_draws;
  if (job.command == "critical-value" || job.command == "size") {
    cfg["M0"] = tuning.M0;
    cfg["M1"] = tuning.M1;
    cfg["M2"] = tuning.M2;
    cfg["N0"] = tuning.N0;
    cfg["N1"] = tuning.N1;
    cfg["N2"] = tuning.N2;
    cfg["p"] = tuning.p;
    cfg["box_epsilon"] = tuning.box.epsilon;
    cfg["padding_orders"] = resolved_padding_orders(tuning);
    cfg["tol1"] = tuning.tol_stage1 > 0.0
                      ? tuning.tol_stage1
                      : 1.0 / std::sqrt(static_cast<double>(tuning.N1));
    cfg["tol2"] = tuning.tol_stage2 > 0.0
                      ? tuning.tol_stage2
                      : 1.0 / std::sqrt(static_cast<double>(tuning.N2));
    cfg["max_iter1"] =
        tuning.max_iter_stage1 > 0 ? tuning.max_iter_stage1 : 20 * n;
    cfg["max_iter2"] =
        tuning.max_iter_stage2 > 0 ? tuning.max_iter_stage2 : 30 * n;
  }
  return cfg;
}

inline void flatten_csv(const nlohmann::json& j, const std::string& prefix,
                        std::string& out) {
  auto emit = [&out](const std::string& key, const std::string& value) {
    const bool quote = value.find(',') != std::string::npos;
    out += key;
    out += ',';
    if (quote) out += '"';
    out += value;
    if (quote) out += '"';
    out += '\n';
  };
  switch (j.type()) {
    case nlohmann::json::value_t::object:
      for (const auto& [k, v] : j.items()) {
        flatten_csv(v, prefix.empty() ? k : prefix + "_" + k, out);
      }
      break;
    case nlohmann::json::value_t::array: {
      std::size_t i = 0;
      for (const auto& v : j) {
        flatten_csv(v, prefix + "_" + std::to_string(++i), out);
      }
      if (j.empty()) emit(prefix, "");
      break;
    }
    case nlohmann::json::value_t::number_float:
      emit(prefix, format17(j.get<double>()));
      break;
    case nlohmann::json::value_t::boolean:
      emit(prefix, j.get<bool>() ? "true" : "false");
      break;
    case nlohmann::json::value_t::string:
      emit(prefix, j.get<std::string>());
      break;
    default:
      emit(prefix, j.dump());
      break;
  }
}

}  // namespace cli_detail

// Renders the document as pretty JSON or as flat key,value CSV rows with
// floats at 17 significant digits.
inline std::string render_output(const nlohmann::json& doc,
                                 const std::string& format) {
  if (format == "json") return doc.dump(2) + "\n";
  if (format == "csv") {
    std::string out = "key,value\n";
    cli_detail::flatten_csv(doc, "", out);
    return out;
  }
  throw input_error("unknown output format: " + format);
}

inline void emit_result(const nlohmann::json& doc, const std::string& format,
                        const std::string& path, std::ostream& console) {
  const std::string text = render_output(doc, format);
  if (!path.empty()) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write output file: " + path);
    out << text;
    if (!out) throw input_error("cannot write output file: " + path);
  }
  console << text;
}

// Executes one parsed job and returns the exit code plus the document that
// emit_result will render.  Throws input_error / numerical_error for exit
// codes 2 / 4; a failed condition gate returns exit code 3 directly.
inline RunArtifacts run_job(const JobSpec& job) {
  const Eigen::MatrixXd x = parse_design_csv(job.design_path);
  const Eigen::MatrixXd r_mat = cli_detail::restriction_matrix(job);
  if (r_mat.cols() != x.cols()) {
    throw input_error("restriction has " + std::to_string(r_mat.cols()) +
                      " columns, design has " + std::to_string(x.cols()));
  }
  const Eigen::VectorXd rhs =
      cli_detail::rhs_vector(job, static_cast<int>(r_mat.rows()));
  const DesignProblem prob(x, r_mat, rhs);
  const int n = prob.n();
  const StatisticSpec spec = cli_detail::statistic_spec(job, n);
  if (!(job.alpha > 0.0 && job.alpha < 1.0)) {
    throw input_error("--alpha must lie in (0,1)");
  }

  AlgoConfig tuning = job.tuning;
  tuning.alpha = job.alpha;
  tuning.box = PacfBox(job.box_epsilon);

  RunArtifacts art;
  art.doc["command"] = job.command;

  const bool needs_gate = job.require_conditions || job.command == "check";
  ConditionReport report;
  if (needs_gate) {
    FrequencyGrid grid;
    if (job.grid_size < 2) throw input_error("--grid-size must be >= 2");
    grid.main_points = static_cast<int>(job.grid_size);
    report = scan_noninclusion(prob, spec, grid);
    art.doc["report"] = cli_detail::report_json(report);
  }

  if (job.command == "check") {
    art.doc["config"] = cli_detail::config_json(job, n, tuning);
    art.exit_code = job.require_conditions && !report.passed ? 3 : 0;
    return art;
  }
  if (job.require_conditions && !report.passed) {
    art.doc["config"] = cli_detail::config_json(job, n, tuning);
    art.exit_code = 3;
    return art;
  }

  if (job.command == "critical-value" || job.command == "size") {
    tuning.p = cli_detail::ar_order(job.cov);
    art.doc["config"] = cli_detail::config_json(job, n, tuning);
    const RunResult res =
        job.command == "size" ? size(prob, spec, job.threshold, tuning)
                              : critical_value(prob, spec, tuning);
    art.doc["result"] = cli_detail::result_json(res);
    return art;
  }
  if (job.command == "quantile") {
    art.doc["config"] = cli_detail::config_json(job, n, tuning);
    const CovKind kind = cli_detail::fixed_cov(job.cov);
    const double value =
        fixed_cov_quantile(prob, spec, kind, 1.0 - job.alpha, job.n_draws,
                           tuning.seed, tuning.threads);
    art.doc["result"] = {{"value", value},
                         {"level", 1.0 - job.alpha},
                         {"draws", job.n_draws},
                         {"seed", tuning.seed}};
    return art;
  }
  throw input_error("unknown command: " + job.command);
}

namespace cli_detail {

inline std::uint64_t seed_from_env() {
  const char* env = std::getenv("SIZEGUARD_SEED");
  if (env == nullptr || *env == '\0') return 0;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end != env + std::string(env).size() || errno == ERANGE) {
    throw input_error("SIZEGUARD_SEED is not a valid unsigned integer");
  }
  return static_cast<std::uint64_t>(v);
}

inline void add_common_options(CLI::App* cmd, JobSpec& job, bool& seed_set) {
  cmd->add_option("--design", job.design_path, "design matrix CSV (n x k)")
      ->required();
  cmd->add_option("--R", job.restriction_inline,
                  "restriction rows, e.g. \"0,0,1\" or \"1,0;0,1\"");
  cmd->add_option("--R-file", job.restriction_path, "restriction CSV file");
  cmd->add_option("--r", job.rhs, "restriction right-hand side (default 0)")
      ->delimiter(',');
  cmd->add_option("--statistic", job.statistic,
                  "test statistic: tw | eicker | gq | tref")
      ->check(CLI::IsMember({"tw", "eicker", "gq", "tref"}));
  cmd->add_flag("--root", job.root, "work on the |t| scale (q = 1)");
  cmd->add_option("--kernel", job.kernel, "lag-weight kernel")
      ->check(CLI::IsMember({"bartlett"}));
  cmd->add_option("--bandwidth", job.bandwidth,
                  "kernel bandwidth (default n/10)");
  cmd->add_option("--weights-file", job.weights_path,
                  "lag weights (vector) or gq weight matrix CSV");
  cmd->add_option("--seed", job.tuning.seed, "RNG seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  cmd->add_option("--threads", job.tuning.threads,
                  "worker threads (0 = all cores)");
  cmd->add_option("--output", job.output_path, "write the result here too");
  cmd->add_option("--format", job.output_format, "output format")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_flag("--require-conditions", job.require_conditions,
                "fail (exit 3) unless the size-control conditions pass");
  cmd->add_option("--grid-size", job.grid_size,
                  "frequency-scan grid points on [0, pi]");
}

inline void add_tuning_options(CLI::App* cmd, JobSpec& job) {
  cmd->add_option("--cov", job.cov, "error model: iid | ar:<order>")
      ->required();
  cmd->add_option("--alpha", job.alpha, "test level (default 0.05)");
  cmd->add_option("--M0", job.tuning.M0, "stage-0 candidates per order");
  cmd->add_option("--M1", job.tuning.M1, "stage-1 searches");
  cmd->add_option("--M2", job.tuning.M2, "stage-2 refinements");
  cmd->add_option("--N0", job.tuning.N0, "stage-0 replications");
  cmd->add_option("--N1", job.tuning.N1, "stage-1 replications");
  cmd->add_option("--N2", job.tuning.N2, "stage-2 replications");
  cmd->add_option("--tol1", job.tuning.tol_stage1,
                  "stage-1 tolerance (default 1/sqrt(N1))");
  cmd->add_option("--tol2", job.tuning.tol_stage2,
                  "stage-2 tolerance (default 1/sqrt(N2))");
  cmd->add_option("--max-iter1", job.tuning.max_iter_stage1,
                  "stage-1 iteration cap (default 20n)");
  cmd->add_option("--max-iter2", job.tuning.max_iter_stage2,
                  "stage-2 iteration cap (default 30n)");
  cmd->add_option("--box-eps", job.box_epsilon,
                  "shrink the coefficient box to half-width 1-eps");
  cmd->add_option("--padding-orders", job.tuning.padding_orders,
                  "stage-0 zero-padding orders")
      ->delimiter(',');
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
  JobSpec job;
  bool seed_set = false;

  CLI::App app{"size-control diagnostics and worst-case critical values for "
               "autocorrelation robust tests"};
  app.require_subcommand(1);

  CLI::App* check = app.add_subcommand(
      "check", "verify the checkable size-control conditions");
  cli_detail::add_common_options(check, job, seed_set);

  CLI::App* cv = app.add_subcommand(
      "critical-value", "size-controlling critical value over AR(p)");
  cli_detail::add_common_options(cv, job, seed_set);
  cli_detail::add_tuning_options(cv, job);

  CLI::App* sz = app.add_subcommand(
      "size", "worst-case null rejection probability at a critical value");
  cli_detail::add_common_options(sz, job, seed_set);
  cli_detail::add_tuning_options(sz, job);
  sz->add_option("--C", job.threshold, "critical value to evaluate")
      ->required();

  CLI::App* qt = app.add_subcommand(
      "quantile", "statistic quantile under a fixed error covariance");
  cli_detail::add_common_options(qt, job, seed_set);
  qt->add_option("--cov", job.cov,
                 "error model: iid | rw | ar1sv:<coef> | ar:<pacf,...>")
      ->required();
  qt->add_option("--alpha", job.alpha,
                 "quantile level is 1 - alpha (default 0.05)");
  qt->add_option("--N", job.n_draws, "Monte-Carlo sample size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!seed_set) job.tuning.seed = cli_detail::seed_from_env();
    for (CLI::App* cmd : {check, cv, sz, qt}) {
      if (cmd->parsed()) job.command = cmd->get_name();
    }
    const RunArtifacts art = run_job(job);
    emit_result(art.doc, job.output_format, job.output_path, std::cout);
    return art.exit_code;
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace sizeguard

#endif  // SIZEGUARD_CLI_HPP
