#ifndef F2SA_EXPERIMENT_HPP_
#define F2SA_EXPERIMENT_HPP_

// Experiment plumbing shared by the command-line tool and the tests: problem
// construction by name, trace serialization, epsilon/p sweeps and the audit
// of the hard instance.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "f2sa/findiff.hpp"
#include "f2sa/problems/hard_instance.hpp"
#include "f2sa/problems/learn2reg.hpp"
#include "f2sa/problems/synthetic.hpp"
#include "f2sa/solvers.hpp"

namespace f2sa
{

using Json = nlohmann::json;

inline constexpr const char * kVersion = "0.1.0";

/// Shortest round-trip decimal form; locale independent.
inline std::string format_double(double v)
{
  if (std::isnan(v)) {return "nan";}
  if (std::isinf(v)) {return v > 0 ? "inf" : "-inf";}
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// --------------------------------------------------------------------------
// problems by name

struct ProblemSpec
{
  std::string name{"tanh"};
  std::uint64_t seed{0};
  double sigma{1.0};
  double mu{1.0};
  int dim_x{5};
  int dim_y{4};
  // hard instance
  int t_chain{10};
  double epsilon{0.1};
  // learn2reg
  int n_samples{200};
  int n_features{10};
  int n_val{100};
};

inline const std::vector<std::string> & problem_names()
{
  static const std::vector<std::string> names = {"linear", "tanh", "hard", "learn2reg"};
  return names;
}

inline ProblemPtr make_problem(const ProblemSpec & s)
{
  if (s.name == "linear") {return make_linear_coupling(s.dim_x, s.dim_y, s.mu, s.sigma, s.seed);}
  if (s.name == "tanh") {return make_tanh_coupling(s.dim_x, s.dim_y, s.mu, s.sigma, s.seed);}
  if (s.name == "hard") {
    HardInstanceParams hp;
    hp.t_chain = s.t_chain;
    hp.epsilon = s.epsilon;
    hp.sigma = s.sigma;
    hp.mu = s.mu;
    hp.seed = s.seed;
    return make_hard_instance(hp);
  }
  if (s.name == "learn2reg") {
    return make_learn2reg(s.n_samples, s.n_features, s.n_val, s.sigma, s.seed);
  }
  throw Error(ErrorCode::UnknownProblem, "unknown problem '" + s.name + "'");
}

inline void from_json(const Json & j, ProblemSpec & s)
{
  s.name = j.value("name", s.name);
  s.seed = j.value("seed", s.seed);
  s.sigma = j.value("sigma", s.sigma);
  s.mu = j.value("mu", s.mu);
  s.dim_x = j.value("dim_x", s.dim_x);
  s.dim_y = j.value("dim_y", s.dim_y);
  s.t_chain = j.value("t_chain", s.t_chain);
  s.epsilon = j.value("epsilon", s.epsilon);
  s.n_samples = j.value("n_samples", s.n_samples);
  s.n_features = j.value("n_features", s.n_features);
  s.n_val = j.value("n_val", s.n_val);
}

inline void to_json(Json & j, const ProblemSpec & s)
{
  j = Json{{"name", s.name}, {"seed", s.seed}, {"sigma", s.sigma}, {"mu", s.mu}};
  if (s.name == "linear" || s.name == "tanh") {
    j["dim_x"] = s.dim_x;
    j["dim_y"] = s.dim_y;
  } else if (s.name == "hard") {
    j["t_chain"] = s.t_chain;
    j["epsilon"] = s.epsilon;
  } else if (s.name == "learn2reg") {
    j["n_samples"] = s.n_samples;
    j["n_features"] = s.n_features;
    j["n_val"] = s.n_val;
  }
}

/// Dimensions and constants of a problem, for `problem describe`.
inline Json describe_problem(const BilevelProblem & problem)
{
  const auto & c = problem.constants();
  const int top = static_cast<int>(c.smoothness.size()) - 1;
  Json kappa = Json::object();
  for (int p : {1, 2, 4}) {kappa[std::to_string(p)] = c.kappa(p);}
  const Vector x0 = problem.initial_x();
  Json out{
    {"name", problem.name()},
    {"dim_x", problem.dim_x()},
    {"dim_y", problem.dim_y()},
    {"mu", c.mu},
    {"sigma", c.sigma},
    {"L", c.smoothness},
    {"L_bar", c.l_bar(std::max(top, 0))},
    {"kappa", kappa},
    {"delta", c.delta},
    {"second_order", problem.has_second_order()},
    {"y_star_closed_form", problem.y_star_closed_form()},
  };
  if (auto g = problem.grad_phi(x0)) {out["grad_phi_norm_at_x0"] = g->norm();}
  if (auto h = dynamic_cast<const HardInstanceProblem *>(&problem)) {
    out["gamma"] = h->gamma();
    out["beta"] = h->params().beta();
    out["r_chain"] = h->params().r_chain();
  }
  return out;
}

// --------------------------------------------------------------------------
// traces

inline const char * kTraceHeader = "t,sfo_total,sfo_upper,sfo_lower,phi_norm,grad_phi_norm,wall_ms";

inline void write_trace_csv(std::ostream & os, const RunTrace & trace)
{
  os << kTraceHeader << '\n';
  for (const auto & r : trace.records) {
    os << r.t << ',' << r.sfo_total() << ',' << r.sfo_upper << ',' << r.sfo_lower << ','
       << format_double(r.phi_norm) << ','
       << (r.grad_phi_norm ? format_double(*r.grad_phi_norm) : "") << ','
       << (r.wall_ms ? format_double(*r.wall_ms) : "") << '\n';
  }
}

inline std::string trace_csv(const RunTrace & trace)
{
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

inline Json config_json(const SolverConfig & c)
{
  Json j{
    {"p", c.p}, {"nu", c.nu}, {"eta_x", c.eta_x}, {"eta_y", c.eta_y},
    {"S", c.batch}, {"K", c.inner_steps}, {"T", c.outer_iters}, {"run_seed", c.run_seed},
    {"overrides", c.overrides},
  };
  if (c.target) {j["target"] = *c.target;}
  if (c.sfo_budget) {j["sfo_budget"] = *c.sfo_budget;}
  return j;
}

/// Trace header: configuration, overrides and outcome.
inline Json trace_header(const RunTrace & trace)
{
  Json j{
    {"problem", trace.problem},
    {"method", trace.method},
    {"config", config_json(trace.config)},
    {"status", to_string(trace.status)},
    {"iterations", trace.records.size()},
    {"sfo_total", trace.sfo.total()},
    {"version", kVersion},
  };
  j["sfo_at_target"] = trace.sfo_at_target ? Json(*trace.sfo_at_target) : Json(nullptr);
  if (auto m = trace.mean_grad_phi()) {j["mean_grad_phi_norm"] = *m;}
  if (auto m = trace.best_grad_phi()) {j["min_grad_phi_norm"] = *m;}
  return j;
}

// --------------------------------------------------------------------------
// sweeps

struct SolverSpec
{
  int p{1};
  std::map<std::string, double> overrides;
};

struct ExperimentSpec
{
  ProblemSpec problem;
  std::vector<SolverSpec> solvers;
  std::vector<double> epsilons;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir{"f2sa_out"};
  std::string format{"csv"};
  std::optional<std::uint64_t> budget;
  bool write_traces{true};

  void validate() const
  {
    if (solvers.empty()) {throw Error(ErrorCode::InvalidSpec, "solver list is empty");}
    if (seeds.empty()) {throw Error(ErrorCode::InvalidSpec, "seed list is empty");}
    if (epsilons.empty()) {throw Error(ErrorCode::InvalidSpec, "epsilon list is empty");}
    for (double e : epsilons) {
      if (!(e > 0.0)) {throw Error(ErrorCode::InvalidSpec, "epsilon targets must be positive");}
    }
    for (const auto & s : solvers) {
      if (s.p < 1) {throw Error(ErrorCode::InvalidSpec, "solver order must be >= 1");}
    }
    if (format != "csv" && format != "json") {
      throw Error(ErrorCode::InvalidSpec, "format must be csv or json");
    }
  }
};

inline ExperimentSpec parse_experiment_spec(const Json & j)
{
  ExperimentSpec s;
  try {
    if (j.contains("problem")) {s.problem = j.at("problem").get<ProblemSpec>();}
    for (const auto & sj : j.value("solvers", Json::array())) {
      SolverSpec solver;
      solver.p = sj.at("p").get<int>();
      solver.overrides = sj.value("overrides", std::map<std::string, double>{});
      s.solvers.push_back(std::move(solver));
    }
    s.epsilons = j.value("epsilons", std::vector<double>{});
    s.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    s.out_dir = j.value("out_dir", s.out_dir.string());
    s.format = j.value("format", s.format);
    if (j.contains("budget") && !j.at("budget").is_null()) {
      s.budget = static_cast<std::uint64_t>(j.at("budget").get<double>());
    }
    s.write_traces = j.value("write_traces", s.write_traces);
  } catch (const Json::exception & e) {
    throw Error(ErrorCode::InvalidSpec, std::string("malformed experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {throw Error(ErrorCode::InvalidSpec, "cannot open " + path.string());}
  Json j;
  try {
    in >> j;
  } catch (const Json::exception & e) {
    throw Error(ErrorCode::InvalidSpec, std::string("invalid JSON: ") + e.what());
  }
  return parse_experiment_spec(j);
}

struct SweepRow
{
  int p{0};
  double epsilon{0.0};
  std::uint64_t seed{0};
  std::optional<std::uint64_t> sfo_at_target;
  RunStatus status{RunStatus::Completed};

  bool hit() const {return sfo_at_target.has_value();}
};

struct SweepSummary
{
  std::vector<SweepRow> rows;

  /// Median SFO-to-target over seeds; misses count as +infinity.
  double median(int p, double epsilon) const
  {
    std::vector<double> v;
    for (const auto & r : rows) {
      if (r.p == p && r.epsilon == epsilon) {
        v.push_back(r.sfo_at_target ? static_cast<double>(*r.sfo_at_target) :
          std::numeric_limits<double>::infinity());
      }
    }
    if (v.empty()) {throw Error(ErrorCode::InvalidArgument, "no rows for the requested cell");}
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) {return v[n / 2];}
    const double lo = v[n / 2 - 1], hi = v[n / 2];
    return std::isinf(hi) ? hi : 0.5 * (lo + hi);
  }
};

inline std::string run_file_stem(const std::string & problem, int p, double eps, std::uint64_t seed)
{
  return problem + "_p" + std::to_string(p) + "_eps" + format_double(eps) + "_seed" +
         std::to_string(seed);
}

/// One sweep cell: defaults for (p, epsilon) with overrides, run to first hit or budget.
inline RunTrace run_cell(
  const BilevelProblem & problem, const SolverSpec & solver, double epsilon, std::uint64_t seed,
  std::optional<std::uint64_t> budget)
{
  SolverConfig config = default_hyperparams(
    hyperparam_inputs(problem, solver.p), epsilon, solver.p, solver.overrides);
  config.run_seed = seed;
  config.target = epsilon;
  config.sfo_budget = budget;
  return f2sa_p_run(problem, config);
}

/**
 * Runs every (p, epsilon, seed) cell. Per-run traces and headers, summary.csv
 * and manifest.json go to spec.out_dir unless it is empty.
 */
inline SweepSummary run_sweep(const ExperimentSpec & spec, std::ostream * log = nullptr)
{
  spec.validate();
  const ProblemPtr problem = make_problem(spec.problem);
  const bool to_disk = !spec.out_dir.empty();
  if (to_disk) {std::filesystem::create_directories(spec.out_dir);}

  SweepSummary summary;
  Json runs = Json::array();
  for (const auto & solver : spec.solvers) {
    for (double eps : spec.epsilons) {
      for (std::uint64_t seed : spec.seeds) {
        const RunTrace trace = run_cell(*problem, solver, eps, seed, spec.budget);
        summary.rows.push_back({solver.p, eps, seed, trace.sfo_at_target, trace.status});
        Json header = trace_header(trace);
        if (to_disk && spec.write_traces) {
          const std::string stem = run_file_stem(problem->name(), solver.p, eps, seed);
          std::ofstream(spec.out_dir / (stem + ".csv")) << trace_csv(trace);
          header["trace_file"] = stem + ".csv";
        }
        runs.push_back(std::move(header));
        if (log) {
          *log << "p=" << solver.p << " eps=" << format_double(eps) << " seed=" << seed << " "
               << to_string(trace.status) << " sfo=" << trace.sfo.total() << '\n';
        }
      }
    }
  }

  if (to_disk) {
    std::ofstream csv(spec.out_dir / "summary.csv");
    csv << "p,epsilon,seed,sfo_at_target,hit\n";
    for (const auto & r : summary.rows) {
      csv << r.p << ',' << format_double(r.epsilon) << ',' << r.seed << ','
          << (r.sfo_at_target ? std::to_string(*r.sfo_at_target) : "") << ','
          << (r.hit() ? "true" : "false") << '\n';
    }
    Json solvers = Json::array();
    for (const auto & s : spec.solvers) {solvers.push_back({{"p", s.p}, {"overrides", s.overrides}});}
    Json manifest{
      {"problem", spec.problem},
      {"constants", describe_problem(*problem)},
      {"solvers", solvers},
      {"epsilons", spec.epsilons},
      {"seeds", spec.seeds},
      {"budget", spec.budget ? Json(*spec.budget) : Json(nullptr)},
      {"version", kVersion},
      {"runs", runs},
    };
    std::ofstream(spec.out_dir / "manifest.json") << manifest.dump(2) << '\n';
  }
  return summary;
}

// --------------------------------------------------------------------------
// hard-instance audit

struct AuditPoint
{
  std::string label;
  double max_z_score{0.0};      // max_i |mean_i - grad_i| / (std_i / sqrt(n))
  double max_abs_deviation{0.0};
  bool unbiased{true};
};

struct ProgressStats
{
  double gamma{1.0};
  double step{0.0};
  std::uint64_t calls{0};
  int increments{0};
  double mean_calls_per_increment{0.0};
};

struct AuditReport
{
  HardInstanceParams params;
  std::uint64_t n_samples{0};
  std::uint64_t zero_chain_points{0};
  std::uint64_t zero_chain_violations{0};
  std::vector<AuditPoint> points;
  double empirical_variance{0.0};
  double gamma_one_max_deviation{0.0};
  ProgressStats progress;

  bool unbiased() const
  {
    return std::all_of(points.begin(), points.end(), [](const auto & p) {return p.unbiased;});
  }
};

/**
 * SGD on the chain function with the Bernoulli-masked oracle from z = 0,
 * counting oracle calls per prog_{1/4} increment.
 */
inline ProgressStats chain_progress(
  int dim, double gamma, double step, std::uint64_t max_calls, std::uint64_t seed)
{
  SplitMix64 rng(SplitMix64::mix(seed ^ 0x5eedULL));
  std::bernoulli_distribution bern(gamma);
  ProgressStats s;
  s.gamma = gamma;
  s.step = step;
  Vector z = Vector::Zero(dim);
  int last = 0;
  while (s.calls < max_calls && last < dim) {
    z -= step * masked_chain_gradient(z, bern(rng), gamma);
    ++s.calls;
    const int now = prog(z, 0.25);
    if (now > last) {
      s.increments += now - last;
      last = now;
    }
  }
  s.mean_calls_per_increment = s.increments > 0 ?
    static_cast<double>(s.calls) / s.increments : std::numeric_limits<double>::infinity();
  return s;
}

/// Default SGD step for chain_progress: large enough that a revealed coordinate clears 1/4.
inline double default_progress_step(double gamma) {return 0.5 * gamma;}

/**
 * Checks the defining properties of the hard instance:
 *  - zero chain: F_T(z) vanishes past coordinate prog_{1/4}(z) + 1 at random points;
 *  - unbiasedness of F_U at x = 0 and at a point with prog 3, per coordinate,
 *    within 4 sample standard errors;
 *  - the empirical variance E|F_U - grad f_U|^2 next to sigma^2;
 *  - with gamma = 1 the oracle equals the deterministic gradient;
 *  - prog statistics of a chain SGD run.
 */
inline AuditReport audit_hard_instance(const HardInstanceParams & params, std::uint64_t n_samples)
{
  if (n_samples < 10'000) {throw Error(ErrorCode::InvalidArgument, "audit needs n_samples >= 1e4");}
  const HardInstanceProblem h(params);
  const int dim = params.t_chain;
  const double gamma = h.gamma();

  AuditReport rep;
  rep.params = params;
  rep.n_samples = n_samples;

  // zero chain
  std::mt19937_64 gen(params.seed ^ 0xa0d17ULL);
  std::uniform_int_distribution<int> pick_m(0, dim);
  std::bernoulli_distribution coin(0.5);
  for (std::uint64_t n = 0; n < n_samples; ++n) {
    const int m = pick_m(gen);
    const Vector z = random_chain_point(dim, m, gen);
    const Vector g = masked_chain_gradient(z, coin(gen), gamma);
    ++rep.zero_chain_points;
    for (int i = m + 1; i < dim; ++i) {  // 0-based i >= m+1 is 1-based index >= m+2
      if (g[i] != 0.0) {++rep.zero_chain_violations; break;}
    }
  }

  // unbiasedness and variance
  Vector z3 = Vector::Zero(dim);
  for (int i = 0; i < std::min(3, dim); ++i) {z3[i] = 1.0;}
  const std::vector<std::pair<std::string, Vector>> probes = {
    {"origin", Vector::Zero(dim)},
    {"prog3", hard_point_from_chain(h, z3)},
  };
  const Vector y = Vector::Zero(1);
  double var_acc = 0.0;
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const auto & [label, x] = probes[pi];
    const Vector truth = h.grad_f_u(x);
    Vector mean = Vector::Zero(dim), m2 = Vector::Zero(dim);
    double sq = 0.0;
    for (std::uint64_t n = 0; n < n_samples; ++n) {
      const SeedPath path{params.seed, static_cast<std::int64_t>(pi), 0,
        static_cast<std::int64_t>(n), Role::UpperX, 0};
      const Vector g = h.stochastic_gradient(Role::UpperX, x, y, path);
      // Welford
      const Vector d = g - mean;
      mean += d / static_cast<double>(n + 1);
      m2 += d.cwiseProduct(g - mean);
      sq += (g - truth).squaredNorm();
    }
    const double nn = static_cast<double>(n_samples);
    const Vector se = (m2 / (nn - 1.0)).cwiseSqrt() / std::sqrt(nn);
    AuditPoint pt;
    pt.label = label;
    for (int i = 0; i < dim; ++i) {
      const double dev = std::abs(mean[i] - truth[i]);
      pt.max_abs_deviation = std::max(pt.max_abs_deviation, dev);
      if (se[i] > 0.0) {
        pt.max_z_score = std::max(pt.max_z_score, dev / se[i]);
        if (dev > 4.0 * se[i]) {pt.unbiased = false;}
      } else if (dev > 1e-12 * (1.0 + std::abs(truth[i]))) {
        pt.unbiased = false;  // a constant coordinate must be exact up to rounding
      }
    }
    rep.points.push_back(pt);
    var_acc = std::max(var_acc, sq / nn);
  }
  rep.empirical_variance = var_acc;

  // gamma = 1 recovers the deterministic gradient
  {
    HardInstanceParams p1 = params;
    p1.sigma = 0.0;
    const HardInstanceProblem h1(p1);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      const Vector z = random_chain_point(dim, pick_m(gen), gen);
      const Vector x = hard_point_from_chain(h1, z);
      const SeedPath path{p1.seed, -2, 0, n, Role::UpperX, 0};
      const Vector diff = h1.stochastic_gradient(Role::UpperX, x, y, path) - h1.grad_f_u(x);
      worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
    rep.gamma_one_max_deviation = worst;
  }

  rep.progress = chain_progress(dim, gamma, default_progress_step(gamma),
    static_cast<std::uint64_t>(std::ceil(40.0 * dim / gamma)), params.seed);
  return rep;
}

inline Json to_json(const AuditReport & r)
{
  Json points = Json::array();
  for (const auto & p : r.points) {
    points.push_back({{"label", p.label}, {"max_z_score", p.max_z_score},
      {"max_abs_deviation", p.max_abs_deviation}, {"unbiased", p.unbiased}});
  }
  const double s2 = r.params.sigma * r.params.sigma;
  return Json{
    {"params", {{"t_chain", r.params.t_chain}, {"epsilon", r.params.epsilon},
      {"sigma", r.params.sigma}, {"l1", r.params.l1}, {"seed", r.params.seed},
      {"gamma", r.params.gamma()}, {"beta", r.params.beta()}, {"r_chain", r.params.r_chain()}}},
    {"n_samples", r.n_samples},
    {"zero_chain", {{"points", r.zero_chain_points}, {"violations", r.zero_chain_violations}}},
    {"unbiasedness", {{"bound_in_std_errors", 4.0}, {"points", points}, {"passed", r.unbiased()}}},
    {"variance", {{"empirical", r.empirical_variance}, {"sigma_squared", s2},
      {"ratio", s2 > 0.0 ? Json(r.empirical_variance / s2) : Json(nullptr)}}},
    {"gamma_one", {{"max_abs_deviation", r.gamma_one_max_deviation},
      {"passed", r.gamma_one_max_deviation <= 1e-12}}},
    {"progress", {{"gamma", r.progress.gamma}, {"step", r.progress.step},
      {"calls", r.progress.calls}, {"increments", r.progress.increments},
      {"mean_calls_per_increment", r.progress.mean_calls_per_increment},
      {"expected", 1.0 / r.progress.gamma}}},
  };
}

}  // namespace f2sa

#endif  // F2SA_EXPERIMENT_HPP_
