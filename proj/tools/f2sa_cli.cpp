// f2sa: command-line front end for coefficient tables, order checks, single
// solver runs, sweeps and the hard-instance audit.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "f2sa/experiment.hpp"

namespace fs = std::filesystem;
using f2sa::Json;

namespace
{

struct Globals
{
  std::uint64_t seed{0};
  std::string out_dir;
  std::string format{"csv"};
  std::optional<std::uint64_t> budget;
};

struct ProblemFlags
{
  f2sa::ProblemSpec spec;

  void attach(CLI::App * cmd, bool with_name = true)
  {
    if (with_name) {
      cmd->add_option("--problem", spec.name, "linear | tanh | hard | learn2reg")
        ->check(CLI::IsMember(f2sa::problem_names()));
    }
    cmd->add_option("--problem-seed", spec.seed, "seed used to draw the problem data");
    cmd->add_option("--sigma", spec.sigma, "oracle noise level");
    cmd->add_option("--mu", spec.mu, "lower-level strong convexity");
    cmd->add_option("--dim-x", spec.dim_x, "upper dimension (linear, tanh)");
    cmd->add_option("--dim-y", spec.dim_y, "lower dimension (linear, tanh)");
    cmd->add_option("--t-chain", spec.t_chain, "chain length (hard)");
    cmd->add_option("--hard-epsilon", spec.epsilon, "target accuracy built into the hard instance");
    cmd->add_option("--n-samples", spec.n_samples, "training samples (learn2reg)");
    cmd->add_option("--n-features", spec.n_features, "features (learn2reg)");
    cmd->add_option("--n-val", spec.n_val, "validation samples (learn2reg)");
  }
};

std::map<std::string, double> parse_overrides(const std::vector<std::string> & items)
{
  std::map<std::string, double> out;
  for (const auto & item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw f2sa::Error(f2sa::ErrorCode::InvalidArgument, "override must look like key=value: " + item);
    }
    std::size_t used = 0;
    const std::string value = item.substr(eq + 1);
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != value.size() || value.empty()) {
      throw f2sa::Error(f2sa::ErrorCode::InvalidArgument, "override value is not a number: " + item);
    }
    out[item.substr(0, eq)] = v;
  }
  return out;
}

// Writes to out_dir/name when an output directory was given, stdout otherwise.
void emit(const Globals & g, const std::string & name, const std::string & text)
{
  if (g.out_dir.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out_dir);
  std::ofstream(fs::path(g.out_dir) / name) << text;
}

std::string coeffs_text(int order, const std::string & format)
{
  const auto s = f2sa::stencil_for_order(order);
  std::ostringstream os;
  if (format == "json") {
    Json weights = Json::array(), decimals = Json::array();
    for (std::size_t i = 0; i < s.size(); ++i) {
      weights.push_back(f2sa::to_fraction_string(s.weights[i]));
      decimals.push_back(s.weights_real[i]);
    }
    Json j{
      {"order", order},
      {"kind", s.kind == f2sa::StencilKind::Central ? "central" : "forward"},
      {"nodes", s.nodes},
      {"weights", weights},
      {"decimal", decimals},
    };
    os << j.dump(2) << '\n';
  } else {
    os << "node,weight,decimal\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
      os << s.nodes[i] << ',' << f2sa::to_fraction_string(s.weights[i]) << ','
         << f2sa::format_double(s.weights_real[i]) << '\n';
    }
  }
  return os.str();
}

std::vector<double> parse_grid(const std::vector<std::string> & items)
{
  std::vector<double> out;
  for (const auto & item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) {out.push_back(std::stod(tok));}
    }
  }
  return out;
}

// Evaluation point for order checks: a seeded Gaussian draw scaled to norm 1.
f2sa::Vector probe_point(int dim, std::uint64_t seed)
{
  std::mt19937_64 gen(seed);
  f2sa::Vector x = f2sa::detail::gaussian_vector(dim, gen);
  return x / x.norm();
}

std::string trace_json_text(const f2sa::RunTrace & trace)
{
  Json j = f2sa::trace_header(trace);
  Json rows = Json::array();
  for (const auto & r : trace.records) {
    Json row{{"t", r.t}, {"sfo_total", r.sfo_total()}, {"sfo_upper", r.sfo_upper},
      {"sfo_lower", r.sfo_lower}, {"phi_norm", r.phi_norm}};
    row["grad_phi_norm"] = r.grad_phi_norm ? Json(*r.grad_phi_norm) : Json(nullptr);
    row["wall_ms"] = r.wall_ms ? Json(*r.wall_ms) : Json(nullptr);
    rows.push_back(std::move(row));
  }
  j["records"] = std::move(rows);
  return j.dump(2) + "\n";
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Fully first-order stochastic bilevel solvers"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "run seed");
  app.add_option("--out-dir", g.out_dir, "directory for output files (default: stdout)");
  app.add_option("--format", g.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--budget", g.budget, "stop a run before it exceeds this many oracle calls");

  // coeffs
  auto * coeffs = app.add_subcommand("coeffs", "finite-difference weights as exact fractions");
  int order = 2;
  coeffs->add_option("--order", order, "stencil order p")->required();

  // check-order
  auto * check = app.add_subcommand("check-order", "estimator error against spacing nu");
  ProblemFlags check_problem;
  check_problem.spec.sigma = 0.0;
  check_problem.attach(check);
  int check_p = 2;
  std::vector<std::string> nu_grid;
  check->add_option("--p", check_p, "stencil order")->required();
  check->add_option("--nu-grid", nu_grid, "spacings, comma or space separated")->expected(1, -1);

  // problem describe
  auto * problem_cmd = app.add_subcommand("problem", "problem utilities");
  problem_cmd->require_subcommand(1);
  auto * describe = problem_cmd->add_subcommand("describe", "dimensions and constants as JSON");
  ProblemFlags describe_problem;
  describe->add_option("--name", describe_problem.spec.name, "problem name")
    ->required()->check(CLI::IsMember(f2sa::problem_names()));
  describe_problem.attach(describe, false);

  // solve
  auto * solve = app.add_subcommand("solve", "one solver run, trace to CSV");
  ProblemFlags solve_problem;
  solve_problem.attach(solve);
  int solve_p = 2;
  double epsilon = 0.1;
  std::vector<std::string> overrides;
  std::string out_file;
  std::string method = "f2sa";
  bool wall_clock = false;
  bool stop_at_target = false;
  solve->add_option("--p", solve_p, "stencil order")->required();
  solve->add_option("--epsilon", epsilon, "target accuracy for the step-size schedule")->required();
  solve->add_option("--override", overrides, "key=value (c_nu, nu, c_eta_x, eta_x, ..., T)");
  solve->add_option("--out", out_file, "trace file (default: stdout)");
  solve->add_option("--method", method, "f2sa | f2sa2")->check(CLI::IsMember({"f2sa", "f2sa2"}));
  solve->add_flag("--wall-clock", wall_clock, "fill the wall_ms column (breaks byte-identical replays)");
  solve->add_flag("--stop-at-target", stop_at_target, "stop at the first |grad phi| <= epsilon");

  // sweep
  auto * sweep = app.add_subcommand("sweep", "runs every (p, epsilon, seed) cell");
  std::string config_file;
  ProblemFlags sweep_problem;
  sweep_problem.attach(sweep);
  std::vector<int> sweep_p;
  std::vector<double> sweep_eps;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<std::string> sweep_overrides;
  sweep->add_option("--config", config_file, "JSON experiment spec")->check(CLI::ExistingFile);
  sweep->add_option("--p", sweep_p, "stencil orders")->delimiter(',');
  sweep->add_option("--epsilon", sweep_eps, "targets")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "run seeds")->delimiter(',');
  sweep->add_option("--override", sweep_overrides, "key=value applied to every solver");

  // audit-hard
  auto * audit = app.add_subcommand("audit-hard", "checks of the hard instance construction");
  f2sa::HardInstanceParams hp;
  std::uint64_t audit_samples = 100'000;
  audit->add_option("--t-chain", hp.t_chain, "chain length T");
  audit->add_option("--epsilon", hp.epsilon, "target accuracy");
  audit->add_option("--sigma", hp.sigma, "oracle noise level");
  audit->add_option("--l1", hp.l1, "smoothness scale");
  audit->add_option("--samples", audit_samples, "Monte-Carlo samples (>= 1e4)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*coeffs) {
      emit(g, "coeffs." + g.format, coeffs_text(order, g.format));
      return 0;
    }

    if (*check) {
      const auto problem = f2sa::make_problem(check_problem.spec);
      const f2sa::Vector x = probe_point(problem->dim_x(), g.seed);
      std::vector<double> grid = parse_grid(nu_grid);
      if (grid.empty()) {
        const double nu_max = 1.0 / (2.0 * problem->constants().kappa(check_p));
        for (int k = 0; k < 6; ++k) {grid.push_back(nu_max / double(1 << k));}
      }
      const auto curve = f2sa::estimator_error_curve(*problem, x, check_p, grid);
      std::ostringstream os;
      if (g.format == "json") {
        Json pts = Json::array();
        for (const auto & [nu, err] : curve.points) {pts.push_back({{"nu", nu}, {"error", err}});}
        Json j{{"p", check_p}, {"points", pts}, {"noise_floor", curve.noise_floor}};
        j["slope"] = curve.slope ? Json(*curve.slope) : Json(nullptr);
        os << j.dump(2) << '\n';
      } else {
        os << "nu,error\n";
        for (const auto & [nu, err] : curve.points) {
          os << f2sa::format_double(nu) << ',' << f2sa::format_double(err) << '\n';
        }
      }
      emit(g, "check_order_p" + std::to_string(check_p) + "." + g.format, os.str());
      if (curve.slope) {
        std::cerr << "slope " << *curve.slope << " (p = " << check_p << ")\n";
      } else {
        std::cerr << "error below noise floor at all spacings; no slope\n";
      }
      return 0;
    }

    if (*describe) {
      const auto problem = f2sa::make_problem(describe_problem.spec);
      Json j = f2sa::describe_problem(*problem);
      j["construction"] = describe_problem.spec;
      emit(g, "problem_" + problem->name() + ".json", j.dump(2) + "\n");
      return 0;
    }

    if (*solve) {
      const auto problem = f2sa::make_problem(solve_problem.spec);
      f2sa::SolverConfig config = f2sa::default_hyperparams(
        f2sa::hyperparam_inputs(*problem, solve_p), epsilon, solve_p, parse_overrides(overrides));
      config.run_seed = g.seed;
      config.sfo_budget = g.budget;
      config.wall_clock = wall_clock;
      if (stop_at_target) {config.target = epsilon;}
      const f2sa::RunTrace trace =
        method == "f2sa2" ? f2sa::f2sa2_run(*problem, config) : f2sa::f2sa_p_run(*problem, config);

      const std::string text =
        g.format == "json" ? trace_json_text(trace) : f2sa::trace_csv(trace);
      Json header = f2sa::trace_header(trace);
      header["construction"] = solve_problem.spec;
      if (out_file.empty()) {
        emit(g, "trace." + g.format, text);
        if (!g.out_dir.empty()) {emit(g, "trace.header.json", header.dump(2) + "\n");}
      } else {
        fs::path path(out_file);
        if (!g.out_dir.empty() && path.is_relative()) {path = fs::path(g.out_dir) / path;}
        if (path.has_parent_path()) {fs::create_directories(path.parent_path());}
        std::ofstream(path) << text;
        fs::path side = path;
        side.replace_extension(".header.json");
        std::ofstream(side) << header.dump(2) << '\n';
      }
      std::cerr << trace.method << ": " << f2sa::to_string(trace.status) << ", "
                << trace.records.size() << " iterations, " << trace.sfo.total() << " oracle calls\n";
      return 0;
    }

    if (*sweep) {
      f2sa::ExperimentSpec spec;
      if (!config_file.empty()) {
        spec = f2sa::load_experiment_spec(config_file);
      } else {
        spec.problem = sweep_problem.spec;
        spec.epsilons = sweep_eps;
        spec.seeds = sweep_seeds;
      }
      const auto extra = parse_overrides(sweep_overrides);
      if (!sweep_p.empty()) {
        spec.solvers.clear();
        for (int p : sweep_p) {spec.solvers.push_back({p, {}});}
      }
      for (auto & s : spec.solvers) {
        for (const auto & [k, v] : extra) {s.overrides[k] = v;}
      }
      if (!sweep_eps.empty()) {spec.epsilons = sweep_eps;}
      if (!sweep_seeds.empty()) {spec.seeds = sweep_seeds;}
      if (!g.out_dir.empty()) {spec.out_dir = g.out_dir;}
      if (g.budget) {spec.budget = g.budget;}
      spec.format = g.format;

      const auto summary = f2sa::run_sweep(spec, &std::cerr);
      std::cout << "p,epsilon,median_sfo_at_target,hits\n";
      for (const auto & s : spec.solvers) {
        for (double eps : spec.epsilons) {
          int hits = 0;
          for (const auto & r : summary.rows) {hits += (r.p == s.p && r.epsilon == eps && r.hit());}
          std::cout << s.p << ',' << f2sa::format_double(eps) << ','
                    << f2sa::format_double(summary.median(s.p, eps)) << ',' << hits << '/'
                    << spec.seeds.size() << '\n';
        }
      }
      return 0;
    }

    if (*audit) {
      hp.seed = g.seed;
      const auto report = f2sa::audit_hard_instance(hp, audit_samples);
      emit(g, "audit_hard.json", f2sa::to_json(report).dump(2) + "\n");
      const bool ok = report.zero_chain_violations == 0 && report.unbiased() &&
        report.gamma_one_max_deviation <= 1e-12;
      return ok ? 0 : 1;
    }
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
