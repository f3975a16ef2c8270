#ifndef F2SA_HYPERGRAD_HPP_
#define F2SA_HYPERGRAD_HPP_

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "f2sa/findiff.hpp"
#include "f2sa/oracles.hpp"
#include "f2sa/problem.hpp"

namespace f2sa
{

struct HypergradEstimate
{
  Vector vector;
  double spacing_nu{0.0};
  int stencil_order{0};
  OracleCounter sfo_cost;
};

/// Inner solutions keyed by stencil node j.
using NodeSolutions = std::map<int, Vector>;

/// Dense Cholesky up to this y-dimension, conjugate gradient above.
inline constexpr int kDenseSolveLimit = 500;

/**
 * grad phi(x) = grad_x f - H_xy [H_yy]^{-1} grad_y f, all at (x, y*(x)).
 */
inline Vector analytic_hypergrad(const BilevelProblem & problem, const Vector & x)
{
  if (!problem.has_second_order()) {
    throw Error(ErrorCode::NoSecondOrderAccess, problem.name() + " has no analytic Hessians");
  }
  const auto ys = problem.y_star(x);
  if (!ys) {throw Error(ErrorCode::NoSecondOrderAccess, problem.name() + " has no y*(x)");}

  const Matrix hyy = problem.hess_yy_lower(x, *ys);
  const Matrix hxy = problem.hess_xy_lower(x, *ys);
  const Vector fy = problem.gradient(Role::UpperY, x, *ys);

  Vector v;
  if (problem.dim_y() <= kDenseSolveLimit) {
    Eigen::LLT<Matrix> llt(hyy);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::IllConditioned, "lower-level Hessian is not positive definite");
    }
    v = llt.solve(fy);
  } else {
    Eigen::ConjugateGradient<Matrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-12);
    cg.compute(hyy);
    v = cg.solve(fy);
  }
  if ((hyy * v - fy).norm() > 1e-8 * std::max(fy.norm(), 1e-300)) {
    throw Error(ErrorCode::IllConditioned, "lower-level solve residual too large");
  }
  return problem.gradient(Role::UpperX, x, *ys) - hxy * v;
}

/**
 * Deterministic gradient descent on nu f(x, .) + g(x, .) until the gradient
 * norm drops to tol.
 */
inline Vector solve_lower_gd(
  const BilevelProblem & problem, const Vector & x, double nu, Vector y, double tol,
  long max_iters = 2'000'000)
{
  const double step = 1.0 / (problem.constants().l1() * (1.0 + std::abs(nu)));
  for (long it = 0; it < max_iters; ++it) {
    Vector grad = problem.gradient(Role::LowerY, x, y);
    if (nu != 0.0) {grad += nu * problem.gradient(Role::UpperY, x, y);}
    if (grad.norm() <= tol) {return y;}
    y -= step * grad;
    if (!y.allFinite()) {break;}
  }
  throw Error(ErrorCode::InnerSolveStalled, "lower-level gradient descent did not converge");
}

/// y*_nu(x): closed form when the problem has one, otherwise a tight GD solve.
inline Vector exact_perturbed_solution(const BilevelProblem & problem, const Vector & x, double nu)
{
  if (auto y = problem.perturbed_y_star(x, nu)) {return *y;}
  return solve_lower_gd(
    problem, x, nu, problem.initial_y(), 1e-12 * problem.constants().mu);
}

/// phi(x) = f(x, y*(x)).
inline double hyper_objective(const BilevelProblem & problem, const Vector & x)
{
  if (auto y = problem.y_star(x)) {return problem.upper(x, *y);}
  return problem.upper(x, exact_perturbed_solution(problem, x, 0.0));
}

/**
 * Central differences of phi(x) = f(x, y*(x)) coordinate by coordinate.
 * y* comes from the closed form when the problem has one, otherwise from
 * gradient descent on g to residual 1e-12 mu (never from the problem's own
 * internal solver).
 */
inline Vector fd_reference_hypergrad(const BilevelProblem & problem, const Vector & x, double spacing)
{
  if (!(spacing > 0.0)) {throw Error(ErrorCode::InvalidArgument, "spacing must be positive");}
  const double tol = 1e-12 * problem.constants().mu;
  auto phi = [&](const Vector & z) {
    if (problem.y_star_closed_form()) {return problem.upper(z, *problem.y_star(z));}
    return problem.upper(z, solve_lower_gd(problem, z, 0.0, problem.initial_y(), tol));
  };
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += spacing;
    xm[i] -= spacing;
    out[i] = (phi(xp) - phi(xm)) / (2.0 * spacing);
  }
  return out;
}

/**
 * Phi = (1/S) sum_i sum_j w_j (j F_x(x, y^j; xi_i) + G_x(x, y^j; zeta_i) / nu).
 *
 * The minibatch draws (xi_i, zeta_i) are shared by all stencil nodes j, so
 * the same SeedPath is used for every node. F_x is not drawn at j = 0.
 */
inline HypergradEstimate assemble_phi(
  const BilevelProblem & problem, const DiffStencil & stencil, double nu, const Vector & x,
  const NodeSolutions & y_solutions, int batch, std::uint64_t run_seed, std::int64_t outer_t,
  OracleCounter & counter)
{
  if (!(nu > 0.0)) {throw Error(ErrorCode::InvalidArgument, "nu must be positive");}
  if (batch < 1) {throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");}
  for (int j : stencil.active_nodes()) {
    if (!y_solutions.contains(j)) {
      throw Error(ErrorCode::MissingNode, "no inner solution for node " + std::to_string(j));
    }
  }

  const OracleCounter before = counter;
  Vector acc = Vector::Zero(x.size());
  for (int i = 0; i < batch; ++i) {
    const SeedPath path{run_seed, outer_t, SeedPath::kShared, SeedPath::kOuter, Role::UpperX, i};
    for (std::size_t n = 0; n < stencil.size(); ++n) {
      const double w = stencil.weights_real[n];
      if (w == 0.0) {continue;}
      const int j = stencil.nodes[n];
      const Vector & y = y_solutions.at(j);
      const Vector gx = sample_gradient(problem, x, y, Role::LowerX, path, counter);
      if (j != 0) {
        const Vector fx = sample_gradient(problem, x, y, Role::UpperX, path, counter);
        acc += w * (static_cast<double>(j) * fx + gx / nu);
      } else {
        acc += w * (gx / nu);
      }
    }
  }
  return {acc / static_cast<double>(batch), nu, stencil.order, counter - before};
}

/// Noise-free Phi from the exact partial gradients.
inline Vector deterministic_phi(
  const BilevelProblem & problem, const DiffStencil & stencil, double nu, const Vector & x,
  const NodeSolutions & y_solutions)
{
  Vector acc = Vector::Zero(x.size());
  for (std::size_t n = 0; n < stencil.size(); ++n) {
    const double w = stencil.weights_real[n];
    if (w == 0.0) {continue;}
    const int j = stencil.nodes[n];
    const Vector & y = y_solutions.at(j);
    acc += w * (static_cast<double>(j) * problem.gradient(Role::UpperX, x, y) +
      problem.gradient(Role::LowerX, x, y) / nu);
  }
  return acc;
}

struct ErrorCurve
{
  std::vector<std::pair<double, double>> points;  // (nu, |Phi - grad phi|)
  double noise_floor{0.0};
  std::optional<double> slope;  // empty when fewer than two points clear the floor

  bool degenerate() const {return !slope.has_value();}
};

/**
 * |Phi(nu) - grad phi(x)| over a grid of spacings, with exact inner
 * solutions and zero noise, plus the log-log slope above the noise floor
 * 1e-10 (1 + |grad phi|).
 */
inline ErrorCurve estimator_error_curve(
  const BilevelProblem & problem, const Vector & x, int p, std::span<const double> nu_grid,
  bool exact_inner = true)
{
  const double nu_max = 1.0 / (2.0 * problem.constants().kappa(p));
  for (double nu : nu_grid) {
    if (!(nu > 0.0)) {throw Error(ErrorCode::InvalidArgument, "spacings must be positive");}
    if (nu > nu_max) {
      throw Error(ErrorCode::NuTooLarge, "nu exceeds 1/(2 kappa) = " + std::to_string(nu_max));
    }
  }
  const auto stencil = stencil_for_order(p);
  const auto truth = problem.grad_phi(x);
  const Vector gphi = truth ? *truth : analytic_hypergrad(problem, x);

  ErrorCurve curve;
  curve.noise_floor = 1e-10 * (1.0 + gphi.norm());
  std::vector<double> fit_x, fit_y;
  for (double nu : nu_grid) {
    NodeSolutions ys;
    for (int j : stencil.active_nodes()) {
      const double shift = j * nu;
      ys[j] = exact_inner ? exact_perturbed_solution(problem, x, shift) :
        solve_lower_gd(problem, x, shift, problem.initial_y(), 1e-12 * problem.constants().mu);
    }
    const double err = (deterministic_phi(problem, stencil, nu, x, ys) - gphi).norm();
    curve.points.emplace_back(nu, err);
    if (err > curve.noise_floor) {
      fit_x.push_back(nu);
      fit_y.push_back(err);
    }
  }
  if (fit_x.size() >= 2) {curve.slope = loglog_slope(fit_x, fit_y);}
  return curve;
}

}  // namespace f2sa

#endif  // F2SA_HYPERGRAD_HPP_
