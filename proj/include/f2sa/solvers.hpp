#ifndef F2SA_SOLVERS_HPP_
#define F2SA_SOLVERS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "f2sa/findiff.hpp"
#include "f2sa/hypergrad.hpp"
#include "f2sa/oracles.hpp"
#include "f2sa/problem.hpp"

namespace f2sa
{

struct SolverConfig
{
  int p{1};
  double nu{0.1};
  double eta_x{0.01};
  double eta_y{0.1};
  int batch{1};          // S
  int inner_steps{1};    // K
  int outer_iters{1};    // T
  std::uint64_t run_seed{0};
  std::map<std::string, double> overrides;

  // run control, not hyper-parameters
  std::optional<double> target;                // stop once |grad phi(x_t)| <= target
  std::optional<std::uint64_t> sfo_budget;     // stop before exceeding this many calls
  bool wall_clock{false};
};

struct RunRecord
{
  int t{0};
  Vector x;
  double phi_norm{0.0};
  std::optional<double> grad_phi_norm;
  std::optional<double> objective;
  std::uint64_t sfo_upper{0};
  std::uint64_t sfo_lower{0};
  std::optional<double> wall_ms;

  std::uint64_t sfo_total() const {return sfo_upper + sfo_lower;}
};

enum class RunStatus { Completed, TargetReached, BudgetExhausted };

inline const char * to_string(RunStatus s)
{
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::TargetReached: return "target_reached";
    case RunStatus::BudgetExhausted: return "budget_exhausted";
  }
  return "unknown";
}

struct RunTrace
{
  std::string problem;
  std::string method;
  SolverConfig config;
  std::vector<RunRecord> records;
  Vector final_x;
  RunStatus status{RunStatus::Completed};
  std::optional<std::uint64_t> sfo_at_target;
  OracleCounter sfo;

  /// Mean and minimum of |grad phi(x_t)| over recorded iterates.
  std::optional<double> mean_grad_phi() const
  {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto & r : records) {
      if (r.grad_phi_norm) {acc += *r.grad_phi_norm; ++n;}
    }
    return n ? std::optional<double>(acc / n) : std::nullopt;
  }

  std::optional<double> best_grad_phi() const
  {
    std::optional<double> best;
    for (const auto & r : records) {
      if (r.grad_phi_norm && (!best || *r.grad_phi_norm < *best)) {best = r.grad_phi_norm;}
    }
    return best;
  }
};

/// Map j -> current y^j, one entry per active stencil node.
using WarmStartState = std::map<int, Vector>;

/// |Phi| at or below this skips the outer update.
inline constexpr double kZeroEstimateGuard = 1e-30;

/// Stability bound on the inner step: eta_y < 2 / (mu + L1).
inline double inner_step_limit(const BilevelProblem & problem)
{
  const auto & c = problem.constants();
  return 2.0 / (c.mu + c.l1());
}

/**
 * K steps of SGD on g_{j nu}(x, .) = j nu f(x, .) + g(x, .) from `warm`,
 * with a fresh draw at every step.
 */
inline Vector inner_sgd(
  const BilevelProblem & problem, const Vector & x, int j, double nu, double eta_y, int K,
  Vector warm, std::uint64_t run_seed, std::int64_t outer_t, OracleCounter & counter)
{
  if (K < 1) {throw Error(ErrorCode::InvalidArgument, "inner loop needs K >= 1");}
  if (!(eta_y > 0.0) || eta_y >= inner_step_limit(problem)) {
    throw Error(ErrorCode::StepsizeTooLarge, "eta_y must lie in (0, 2/(mu + L1))");
  }
  const double coef = static_cast<double>(j) * nu;
  Vector y = std::move(warm);
  for (int k = 0; k < K; ++k) {
    const SeedPath path{run_seed, outer_t, j, k, Role::LowerY, 0};
    const Vector gy = sample_gradient(problem, x, y, Role::LowerY, path, counter);
    if (j != 0) {
      const Vector fy = sample_gradient(problem, x, y, Role::UpperY, path, counter);
      y -= eta_y * (coef * fy + gy);
    } else {
      y -= eta_y * gy;
    }
    if (!y.allFinite()) {
      throw Error(ErrorCode::NonFiniteIterate, "inner iterate diverged");
    }
  }
  return y;
}

/// Oracle calls of one outer iteration for the given active nodes.
inline std::uint64_t sfo_per_outer_iteration(
  const std::vector<int> & nodes, int batch, int inner_steps)
{
  std::uint64_t total = 0;
  for (int j : nodes) {
    const std::uint64_t per_call = j == 0 ? 1 : 2;
    total += per_call * (static_cast<std::uint64_t>(inner_steps) + static_cast<std::uint64_t>(batch));
  }
  return total;
}

namespace detail
{

inline void validate_config(const SolverConfig & c)
{
  if (c.p < 1) {throw Error(ErrorCode::InvalidArgument, "p must be >= 1");}
  if (!(c.nu > 0.0) || !(c.eta_x > 0.0) || !(c.eta_y > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "nu, eta_x, eta_y must be positive");
  }
  if (c.batch < 1 || c.inner_steps < 1 || c.outer_iters < 1) {
    throw Error(ErrorCode::InvalidArgument, "S, K, T must be >= 1");
  }
}

inline std::optional<double> measure(const BilevelProblem & problem, const Vector & x)
{
  if (auto g = problem.grad_phi(x)) {return g->norm();}
  return std::nullopt;
}

// Shared outer-loop bookkeeping: metrology, stopping, normalized step.
class OuterLoop
{
public:
  OuterLoop(const BilevelProblem & problem, const SolverConfig & config, std::uint64_t per_iter)
  : problem_(problem), config_(config), per_iter_(per_iter),
    start_(std::chrono::steady_clock::now())
  {
    trace_.problem = problem.name();
    trace_.config = config;
    x_ = problem.initial_x();
  }

  const Vector & x() const {return x_;}
  OracleCounter & counter() {return trace_.sfo;}

  /// False when the run must stop before iteration t.
  bool begin(int t)
  {
    grad_norm_ = measure(problem_, x_);
    if (config_.target && grad_norm_ && *grad_norm_ <= *config_.target) {
      trace_.status = RunStatus::TargetReached;
      trace_.sfo_at_target = trace_.sfo.total();
      return false;
    }
    if (config_.sfo_budget && trace_.sfo.total() + per_iter_ > *config_.sfo_budget) {
      trace_.status = RunStatus::BudgetExhausted;
      return false;
    }
    t_ = t;
    return true;
  }

  void finish(const Vector & phi)
  {
    RunRecord r;
    r.t = t_;
    r.x = x_;
    r.phi_norm = phi.norm();
    r.grad_phi_norm = grad_norm_;
    r.sfo_upper = trace_.sfo.upper_calls;
    r.sfo_lower = trace_.sfo.lower_calls;
    if (config_.wall_clock) {
      r.wall_ms = std::chrono::duration<double, std::milli>(
        std::chrono::steady_clock::now() - start_).count();
    }
    trace_.records.push_back(std::move(r));

    const double norm = phi.norm();
    if (norm > kZeroEstimateGuard) {
      x_ -= config_.eta_x * (phi / norm);
      problem_.project_x(x_);
      if (!x_.allFinite()) {throw Error(ErrorCode::NonFiniteIterate, "outer iterate diverged");}
    }
  }

  RunTrace close(std::string method)
  {
    if (trace_.status == RunStatus::Completed && config_.target) {
      const auto g = measure(problem_, x_);
      if (g && *g <= *config_.target) {
        trace_.status = RunStatus::TargetReached;
        trace_.sfo_at_target = trace_.sfo.total();
      }
    }
    trace_.method = std::move(method);
    trace_.final_x = x_;
    return std::move(trace_);
  }

private:
  const BilevelProblem & problem_;
  const SolverConfig & config_;
  std::uint64_t per_iter_;
  std::chrono::steady_clock::time_point start_;
  RunTrace trace_;
  Vector x_;
  std::optional<double> grad_norm_;
  int t_{0};
};

}  // namespace detail

/**
 * Double-loop F2SA-p. Each outer step runs one warm-started SGD chain per
 * active stencil node j on j nu f + g, combines the chains through the
 * stencil weights into Phi_t, and takes the normalized step
 * x <- x - eta_x Phi_t / |Phi_t|.
 *
 * Even p uses the central stencil (node 0 has zero weight and is never
 * solved); odd p uses the forward stencil on 0..p.
 */
inline RunTrace f2sa_p_run(
  const BilevelProblem & problem, const SolverConfig & config, const DiffStencil & stencil)
{
  detail::validate_config(config);
  if (stencil.order != config.p) {
    throw Error(ErrorCode::InvalidArgument, "stencil order does not match config.p");
  }
  const bool even = config.p % 2 == 0;
  if ((even && stencil.kind != StencilKind::Central) ||
      (!even && stencil.kind != StencilKind::Forward))
  {
    throw Error(ErrorCode::InvalidArgument, "even p needs a central stencil, odd p a forward one");
  }

  const auto nodes = stencil.active_nodes();
  WarmStartState warm;
  for (int j : nodes) {warm[j] = problem.initial_y();}

  detail::OuterLoop loop(problem, config,
    sfo_per_outer_iteration(nodes, config.batch, config.inner_steps));
  for (int t = 0; t < config.outer_iters; ++t) {
    if (!loop.begin(t)) {break;}
    for (int j : nodes) {
      warm[j] = inner_sgd(problem, loop.x(), j, config.nu, config.eta_y, config.inner_steps,
        std::move(warm[j]), config.run_seed, t, loop.counter());
    }
    const auto est = assemble_phi(problem, stencil, config.nu, loop.x(), warm, config.batch,
      config.run_seed, t, loop.counter());
    loop.finish(est.vector);
  }
  return loop.close("f2sa-" + std::to_string(config.p));
}

/// Convenience overload building the stencil from config.p.
inline RunTrace f2sa_p_run(const BilevelProblem & problem, const SolverConfig & config)
{
  return f2sa_p_run(problem, config, stencil_for_order(config.p));
}

/**
 * F2SA-2 written with its two chains explicitly: y tracks argmin nu f + g,
 * z tracks argmin -nu f + g, and
 *   Phi = (1/S) sum_i (F_x(y) + F_x(z) + (G_x(y) - G_x(z)) / nu) / 2.
 * Draws use the same seed paths as nodes +1 (y) and -1 (z) of f2sa_p_run.
 */
inline RunTrace f2sa2_run(const BilevelProblem & problem, const SolverConfig & config)
{
  detail::validate_config(config);
  if (config.p != 2) {throw Error(ErrorCode::InvalidArgument, "f2sa2_run needs p = 2");}
  if (!(config.eta_y < inner_step_limit(problem))) {
    throw Error(ErrorCode::StepsizeTooLarge, "eta_y must lie in (0, 2/(mu + L1))");
  }
  constexpr int kY = 1;
  constexpr int kZ = -1;
  const double nu = config.nu;
  const double eta_y = config.eta_y;

  Vector y = problem.initial_y();
  Vector z = problem.initial_y();
  detail::OuterLoop loop(problem, config, 4ULL * (config.batch + config.inner_steps));
  for (int t = 0; t < config.outer_iters; ++t) {
    if (!loop.begin(t)) {break;}
    const Vector & x = loop.x();
    auto & counter = loop.counter();
    for (int k = 0; k < config.inner_steps; ++k) {
      const SeedPath py{config.run_seed, t, kY, k, Role::LowerY, 0};
      const SeedPath pz{config.run_seed, t, kZ, k, Role::LowerY, 0};
      const Vector gy = sample_gradient(problem, x, y, Role::LowerY, py, counter);
      const Vector fy = sample_gradient(problem, x, y, Role::UpperY, py, counter);
      const Vector gz = sample_gradient(problem, x, z, Role::LowerY, pz, counter);
      const Vector fz = sample_gradient(problem, x, z, Role::UpperY, pz, counter);
      y -= eta_y * (nu * fy + gy);
      z -= eta_y * (-nu * fz + gz);
      if (!y.allFinite() || !z.allFinite()) {
        throw Error(ErrorCode::NonFiniteIterate, "inner iterate diverged");
      }
    }
    Vector acc = Vector::Zero(x.size());
    for (int i = 0; i < config.batch; ++i) {
      const SeedPath path{config.run_seed, t, SeedPath::kShared, SeedPath::kOuter, Role::UpperX, i};
      const Vector gxz = sample_gradient(problem, x, z, Role::LowerX, path, counter);
      const Vector fxz = sample_gradient(problem, x, z, Role::UpperX, path, counter);
      acc += -0.5 * (-1.0 * fxz + gxz / nu);
      const Vector gxy = sample_gradient(problem, x, y, Role::LowerX, path, counter);
      const Vector fxy = sample_gradient(problem, x, y, Role::UpperX, path, counter);
      acc += 0.5 * (1.0 * fxy + gxy / nu);
    }
    loop.finish(acc / static_cast<double>(config.batch));
  }
  return loop.close("f2sa2");
}

/// Constants entering the step-size schedule.
struct HyperparamInputs
{
  double delta{1.0};
  double l1{1.0};
  double l_bar{1.0};
  double mu{1.0};
  double sigma{0.0};
  double r{1.0};  // |y0 - y*(x0)|

  double kappa() const {return l_bar / mu;}
};

/// Reads the constants off a problem; R from y*(x0) or a tight GD solve.
inline HyperparamInputs hyperparam_inputs(const BilevelProblem & problem, int p)
{
  const auto & c = problem.constants();
  HyperparamInputs in;
  in.delta = c.delta;
  in.l1 = c.l1();
  in.l_bar = c.l_bar(p);
  in.mu = c.mu;
  in.sigma = c.sigma;
  const Vector x0 = problem.initial_x();
  const Vector y0 = problem.initial_y();
  in.r = (y0 - exact_perturbed_solution(problem, x0, 0.0)).norm();
  return in;
}

/**
 * Step sizes, batch sizes and loop lengths with unit proportionality
 * constants:
 *
 *   nu    = min{R / kappa, (eps / (Lbar kappa^{2p+1}))^{1/p}}, capped at 1/(2 kappa)
 *   eta_x = eps / (L1 kappa^3)
 *   eta_y = nu^2 eps^2 / (L1 kappa sigma^2), clipped to 1 / (mu + L1)
 *   S     = ceil(sigma^2 / (nu^2 eps^2))
 *   K     = ceil(kappa^2 sigma^2 / (nu^2 eps^2) * log(max{R L1 kappa / (nu eps), 1 / (nu kappa^2)}))
 *   T     = ceil(Delta / (eta_x eps))
 *
 * With sigma = 0: S = 1, eta_y = 1 / (mu + L1), K = ceil(log(R L1 / (nu eps)) / (mu eta_y)).
 * Log arguments are floored at e. Overrides "c_<name>" scale a value, "<name>" replaces
 * it; names are nu, eta_x, eta_y, S, K, T.
 */
inline SolverConfig default_hyperparams(
  const HyperparamInputs & in, double epsilon, int p,
  const std::map<std::string, double> & overrides = {})
{
  if (!(in.delta > 0.0 && in.l1 > 0.0 && in.l_bar > 0.0 && in.mu > 0.0 && in.r >= 0.0 &&
    in.sigma >= 0.0 && epsilon > 0.0) || p < 1)
  {
    throw Error(ErrorCode::DegenerateConstants, "constants must be positive");
  }
  static const std::vector<std::string> kNames = {"nu", "eta_x", "eta_y", "S", "K", "T"};
  for (const auto & [key, value] : overrides) {
    const std::string base = key.rfind("c_", 0) == 0 ? key.substr(2) : key;
    if (std::find(kNames.begin(), kNames.end(), base) == kNames.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown override '" + key + "'");
    }
    if (!(value > 0.0)) {throw Error(ErrorCode::InvalidArgument, "override '" + key + "' <= 0");}
  }
  auto scale = [&](const std::string & name) {
    auto it = overrides.find("c_" + name);
    return it == overrides.end() ? 1.0 : it->second;
  };
  auto replace = [&](const std::string & name, double value) {
    auto it = overrides.find(name);
    return it == overrides.end() ? value : it->second;
  };
  // ceil that ignores last-bit rounding noise: 1000.0000000001 counts as 1000
  auto ceil_count = [](double v) {
    return static_cast<int>(std::clamp(std::ceil(v * (1.0 - 1e-12)), 1.0, 2.0e9));
  };
  auto safe_log = [](double arg) {return std::log(std::max(arg, std::numbers::e));};

  const double kappa = in.kappa();
  const double eps = epsilon;
  const double order_term = std::pow(eps / (in.l_bar * std::pow(kappa, 2 * p + 1)), 1.0 / p);
  double nu = in.r > 0.0 ? std::min(in.r / kappa, order_term) : order_term;
  nu = std::min(scale("nu") * nu, 1.0 / (2.0 * kappa));
  nu = replace("nu", nu);

  SolverConfig c;
  c.p = p;
  c.nu = nu;
  c.overrides = overrides;
  c.eta_x = replace("eta_x", scale("eta_x") * eps / (in.l1 * kappa * kappa * kappa));
  const double eta_y_cap = 1.0 / (in.mu + in.l1);
  const double nu_eps2 = nu * nu * eps * eps;

  if (in.sigma == 0.0) {
    c.eta_y = replace("eta_y", std::min(scale("eta_y") * eta_y_cap, eta_y_cap));
    c.batch = ceil_count(replace("S", scale("S") * 1.0));
    c.inner_steps = ceil_count(replace("K",
      scale("K") * safe_log(in.r * in.l1 / (nu * eps)) / (in.mu * c.eta_y)));
  } else {
    const double s2 = in.sigma * in.sigma;
    c.eta_y = replace("eta_y",
      std::min(scale("eta_y") * nu_eps2 / (in.l1 * kappa * s2), eta_y_cap));
    c.batch = ceil_count(replace("S", scale("S") * s2 / nu_eps2));
    const double log_arg = std::max(in.r * in.l1 * kappa / (nu * eps), 1.0 / (nu * kappa * kappa));
    c.inner_steps = ceil_count(replace("K",
      scale("K") * kappa * kappa * s2 / nu_eps2 * safe_log(log_arg)));
  }
  c.outer_iters = ceil_count(replace("T", scale("T") * in.delta / (c.eta_x * eps)));
  return c;
}

/**
 * Gradient descent on phi with the analytic hyper-gradient; the reference
 * ceiling for benchmark runs. `normalized` switches to x - eta g / |g|.
 */
inline RunTrace oracle_gd_run(
  const BilevelProblem & problem, double eta, int T, bool normalized = false)
{
  if (!problem.has_second_order()) {
    throw Error(ErrorCode::NoSecondOrderAccess, problem.name() + " has no analytic Hessians");
  }
  RunTrace trace;
  trace.problem = problem.name();
  trace.method = normalized ? "oracle-ngd" : "oracle-gd";
  trace.config.eta_x = eta;
  trace.config.outer_iters = T;
  Vector x = problem.initial_x();
  for (int t = 0; t < T; ++t) {
    const Vector g = analytic_hypergrad(problem, x);
    RunRecord r;
    r.t = t;
    r.x = x;
    r.phi_norm = g.norm();
    r.grad_phi_norm = g.norm();
    r.objective = hyper_objective(problem, x);
    trace.records.push_back(std::move(r));
    if (normalized) {
      if (g.norm() > kZeroEstimateGuard) {x -= eta * g / g.norm();}
    } else {
      x -= eta * g;
    }
    problem.project_x(x);
  }
  trace.final_x = x;
  return trace;
}

}  // namespace f2sa

#endif  // F2SA_SOLVERS_HPP_
