#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

namespace
{

using namespace f2sa;
using f2sa::testing::code_of;
using f2sa::testing::vec;

SolverConfig small_config(int p, double sigma_scale = 1.0)
{
  SolverConfig c;
  c.p = p;
  c.nu = 0.05;
  c.eta_x = 0.02;
  c.eta_y = 0.1 / sigma_scale;
  c.batch = 3;
  c.inner_steps = 4;
  c.outer_iters = 12;
  c.run_seed = 17;
  return c;
}

bool same_trace(const RunTrace & a, const RunTrace & b)
{
  if (a.records.size() != b.records.size() || a.status != b.status || !(a.sfo == b.sfo)) {return false;}
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto & r = a.records[i];
    const auto & s = b.records[i];
    if (r.t != s.t || r.x != s.x || r.phi_norm != s.phi_norm || r.grad_phi_norm != s.grad_phi_norm ||
      r.sfo_upper != s.sfo_upper || r.sfo_lower != s.sfo_lower)
    {
      return false;
    }
  }
  return a.final_x == b.final_x;
}

// ---------------------------------------------------------------- inner SGD

TEST(InnerSgd, ValidatesArguments)
{
  auto p = f2sa::testing::small_tanh();
  const Vector x = vec({0.3, -0.7});
  OracleCounter c;
  EXPECT_EQ(code_of([&] {inner_sgd(*p, x, 1, 0.1, 0.1, 0, Vector::Zero(2), 0, 0, c);}),
    ErrorCode::InvalidArgument);
  const double limit = inner_step_limit(*p);
  EXPECT_EQ(code_of([&] {inner_sgd(*p, x, 1, 0.1, limit, 3, Vector::Zero(2), 0, 0, c);}),
    ErrorCode::StepsizeTooLarge);
}

TEST(InnerSgd, OneNoiselessStepIsAGradientStep)
{
  auto p = f2sa::testing::small_tanh();
  const Vector x = vec({0.3, -0.7});
  const Vector y0 = vec({0.2, -0.1});
  OracleCounter c;
  const Vector y1 = inner_sgd(*p, x, -1, 0.1, 0.2, 1, y0, 0, 0, c);
  const Vector expected =
    y0 - 0.2 * (-0.1 * p->gradient(Role::UpperY, x, y0) + p->gradient(Role::LowerY, x, y0));
  EXPECT_LT((y1 - expected).norm(), 1e-16);
  EXPECT_EQ(c, (OracleCounter{1, 1}));
}

TEST(InnerSgd, FixedPointStaysFixed)
{
  auto p = f2sa::testing::small_tanh();
  const Vector x = vec({0.3, -0.7});
  const Vector ystar = *p->perturbed_y_star(x, 2 * 0.1);
  OracleCounter c;
  const Vector y = inner_sgd(*p, x, 2, 0.1, 0.2, 50, ystar, 0, 0, c);
  EXPECT_LT((y - ystar).norm(), 1e-15);
}

// g = (mu/2)|y - Ax - y0|^2: the error contracts by exactly (1 - mu eta) per step.
TEST(InnerSgd, QuadraticContractionBound)
{
  auto p = f2sa::testing::small_linear();
  const Vector x = vec({0.4, -0.2});
  const Vector ystar = *p->y_star(x);
  const Vector y0 = Vector::Zero(3);
  const double mu = p->constants().mu;
  const double eta = 1.0 / (mu + p->constants().l1());
  const double tol = 1e-9;
  const int K = static_cast<int>(std::ceil(std::log((y0 - ystar).norm() / tol) / (mu * eta)));
  OracleCounter c;
  const Vector y = inner_sgd(*p, x, 0, 0.1, eta, K, y0, 0, 0, c);
  EXPECT_LE((y - ystar).norm(), tol);
  EXPECT_NEAR((y - ystar).norm(), std::pow(1.0 - mu * eta, K) * (y0 - ystar).norm(), 1e-15);
  // node 0 never queries the upper level
  EXPECT_EQ(c, (OracleCounter{0, static_cast<std::uint64_t>(K)}));
}

TEST(InnerSgd, WarmStartResidualDoesNotIncrease)
{
  auto p = f2sa::testing::small_tanh();
  const Vector x = vec({0.3, -0.7});
  const Vector target = *p->perturbed_y_star(x, 0.05);
  Vector y = vec({3.0, -2.0});
  double last = (y - target).norm();
  OracleCounter c;
  for (int t = 0; t < 20; ++t) {
    y = inner_sgd(*p, x, 1, 0.05, 0.2, 3, y, 0, t, c);
    const double now = (y - target).norm();
    EXPECT_LE(now, last);
    last = now;
  }
}

// ---------------------------------------------------------------- outer loop

TEST(F2saRun, NormalisedStepsHaveLengthEtaX)
{
  auto p = f2sa::testing::small_tanh(1.0);
  for (int order : {1, 2, 3}) {
    const auto trace = f2sa_p_run(*p, small_config(order));
    ASSERT_EQ(trace.records.size(), 12u);
    for (std::size_t t = 0; t + 1 < trace.records.size(); ++t) {
      EXPECT_NEAR((trace.records[t + 1].x - trace.records[t].x).norm(), 0.02, 1e-15);
    }
    EXPECT_NEAR((trace.final_x - trace.records.back().x).norm(), 0.02, 1e-15);
  }
}

TEST(F2saRun, OracleCountMatchesLoopBounds)
{
  auto p = f2sa::testing::small_tanh(1.0);
  for (int order : {1, 2, 3, 4}) {
    const auto cfg = small_config(order);
    const auto trace = f2sa_p_run(*p, cfg);
    const std::uint64_t n = stencil_for_order(order).active_nodes().size();
    const std::uint64_t zero = order % 2 == 1 ? 1 : 0;
    const std::uint64_t K = cfg.inner_steps, S = cfg.batch, T = cfg.outer_iters;
    EXPECT_EQ(n, static_cast<std::uint64_t>(order % 2 == 0 ? order : order + 1));
    EXPECT_EQ(trace.sfo.lower_calls, T * n * (K + S));
    EXPECT_EQ(trace.sfo.upper_calls, T * (n - zero) * (K + S));
    EXPECT_EQ(trace.sfo.total(), T * sfo_per_outer_iteration(stencil_for_order(order).active_nodes(),
      cfg.batch, cfg.inner_steps));
    // cumulative counts strictly increase
    for (std::size_t t = 1; t < trace.records.size(); ++t) {
      EXPECT_GT(trace.records[t].sfo_total(), trace.records[t - 1].sfo_total());
    }
  }
}

TEST(F2saRun, EvenOrdersNeverSolveNodeZero)
{
  auto p = f2sa::testing::small_tanh(1.0);
  for (int order : {2, 4, 6}) {
    const auto trace = f2sa_p_run(*p, small_config(order));
    EXPECT_EQ(trace.sfo.upper_calls, trace.sfo.lower_calls) << "p=" << order;
  }
}

TEST(F2saRun, ReplaysBitExactly)
{
  auto p = f2sa::testing::small_tanh(1.0);
  const auto a = f2sa_p_run(*p, small_config(3));
  const auto b = f2sa_p_run(*p, small_config(3));
  EXPECT_TRUE(same_trace(a, b));
  auto other = small_config(3);
  other.run_seed = 18;
  EXPECT_FALSE(same_trace(a, f2sa_p_run(*p, other)));
}

TEST(F2saRun, SpecialisedSecondOrderIsBitIdentical)
{
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const ProblemPtr & p : {ProblemPtr(f2sa::testing::small_tanh(1.0)),
      ProblemPtr(f2sa::testing::small_linear(1.0))})
    {
      auto cfg = small_config(2);
      cfg.run_seed = seed;
      EXPECT_TRUE(same_trace(f2sa_p_run(*p, cfg), f2sa2_run(*p, cfg))) << p->name() << " " << seed;
    }
  }
}

TEST(F2saRun, RejectsMismatchedStencil)
{
  auto p = f2sa::testing::small_tanh();
  EXPECT_EQ(code_of([&] {f2sa_p_run(*p, small_config(2), central_coefficients(4));}),
    ErrorCode::InvalidArgument);
  auto cfg = small_config(1);
  EXPECT_EQ(code_of([&] {f2sa2_run(*p, cfg);}), ErrorCode::InvalidArgument);
  cfg.batch = 0;
  EXPECT_EQ(code_of([&] {f2sa_p_run(*p, cfg);}), ErrorCode::InvalidArgument);
}

TEST(F2saRun, NoiselessFirstOrderReachesTarget)
{
  auto p = f2sa::testing::small_linear(0.0);
  SolverConfig cfg;
  cfg.p = 1;
  cfg.nu = 0.01;
  cfg.eta_x = 0.005;
  cfg.eta_y = 1.0 / (p->constants().mu + p->constants().l1());
  cfg.batch = 1;
  cfg.inner_steps = 20;
  const double eps = 1e-2;
  cfg.outer_iters = static_cast<int>(std::ceil(6.0 * p->constants().delta / (eps * cfg.eta_x)));
  cfg.target = eps;
  const auto trace = f2sa_p_run(*p, cfg);
  EXPECT_EQ(trace.status, RunStatus::TargetReached);
  ASSERT_TRUE(trace.sfo_at_target.has_value());
  EXPECT_LE(p->grad_phi(trace.final_x)->norm(), eps);
}

TEST(F2saRun, BudgetStopsBeforeOverrun)
{
  auto p = f2sa::testing::small_tanh(1.0);
  auto cfg = small_config(2);
  const std::uint64_t per = sfo_per_outer_iteration({-1, 1}, cfg.batch, cfg.inner_steps);
  cfg.sfo_budget = 5 * per + per / 2;
  const auto trace = f2sa_p_run(*p, cfg);
  EXPECT_EQ(trace.status, RunStatus::BudgetExhausted);
  EXPECT_EQ(trace.records.size(), 5u);
  EXPECT_LE(trace.sfo.total(), *cfg.sfo_budget);
}

TEST(F2saRun, ZeroEstimateSkipsTheUpdate)
{
  // no validation data: f is constant and every estimate vanishes
  auto p = make_learn2reg(30, 3, 0, 0.0, 2);
  SolverConfig cfg = small_config(2);
  cfg.eta_y = 0.5 / (p->constants().mu + p->constants().l1());
  const auto trace = f2sa_p_run(*p, cfg);
  EXPECT_EQ(trace.final_x, p->initial_x());
  for (const auto & r : trace.records) {EXPECT_EQ(r.phi_norm, 0.0);}
}

TEST(F2saRun, ReportsMeanAndBestGradient)
{
  auto p = f2sa::testing::small_tanh(1.0);
  const auto trace = f2sa_p_run(*p, small_config(2));
  ASSERT_TRUE(trace.mean_grad_phi() && trace.best_grad_phi());
  EXPECT_LE(*trace.best_grad_phi(), *trace.mean_grad_phi());
}

// ---------------------------------------------------------------- defaults

TEST(DefaultHyperparams, AllOnesConstants)
{
  HyperparamInputs in;  // every constant 1
  in.sigma = 1.0;
  const auto c = default_hyperparams(in, 0.1, 2);
  EXPECT_NEAR(c.nu, std::sqrt(0.1), 1e-15);
  EXPECT_NEAR(c.eta_x, 0.1, 1e-15);
  EXPECT_NEAR(c.eta_y, 1e-3, 1e-15);
  EXPECT_EQ(c.batch, 1000);
  // 1000 log(max(1 / (nu eps), 1 / nu)) = 1000 log(10^{1.5})
  EXPECT_EQ(c.inner_steps, static_cast<int>(std::ceil(1000.0 * 1.5 * std::log(10.0))));
  EXPECT_EQ(c.outer_iters, 100);
}

TEST(DefaultHyperparams, NoiselessFallback)
{
  HyperparamInputs in;
  in.sigma = 0.0;
  const auto c = default_hyperparams(in, 0.1, 2);
  EXPECT_EQ(c.batch, 1);
  EXPECT_NEAR(c.eta_y, 0.5, 1e-15);
  // log(R L1 / (nu eps)) / (mu eta_y) = 2 log(10^{1.5})
  EXPECT_EQ(c.inner_steps, static_cast<int>(std::ceil(2.0 * 1.5 * std::log(10.0))));
}

TEST(DefaultHyperparams, HigherOrderAllowsLargerSpacing)
{
  HyperparamInputs in;
  in.l1 = 3.0;
  in.l_bar = 3.0;
  in.mu = 1.5;
  in.sigma = 1.0;
  in.r = 10.0;
  for (double eps : {0.5, 0.1, 0.01}) {
    const auto c1 = default_hyperparams(in, eps, 1);
    const auto c2 = default_hyperparams(in, eps, 2);
    EXPECT_GE(c2.nu, c1.nu);
    EXPECT_LE(c2.batch, c1.batch);
    EXPECT_LE(c2.inner_steps, c1.inner_steps);
    EXPECT_LE(c2.nu, 1.0 / (2.0 * in.kappa()));
  }
}

TEST(DefaultHyperparams, StepIsClippedToStability)
{
  HyperparamInputs in;
  in.sigma = 1e-3;
  const auto c = default_hyperparams(in, 0.1, 2);
  EXPECT_EQ(c.eta_y, 0.5);
}

TEST(DefaultHyperparams, Overrides)
{
  HyperparamInputs in;
  in.sigma = 1.0;
  const auto base = default_hyperparams(in, 0.1, 2);
  const auto scaled = default_hyperparams(in, 0.1, 2, {{"c_S", 0.5}, {"c_eta_x", 3.0}, {"T", 7}});
  EXPECT_EQ(scaled.batch, 500);
  EXPECT_NEAR(scaled.eta_x, 3.0 * base.eta_x, 1e-15);
  EXPECT_EQ(scaled.outer_iters, 7);
  EXPECT_EQ(scaled.overrides.size(), 3u);
  EXPECT_EQ(code_of([&] {default_hyperparams(in, 0.1, 2, {{"c_bogus", 1.0}});}),
    ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] {default_hyperparams(in, 0.1, 2, {{"S", -1.0}});}),
    ErrorCode::InvalidArgument);
}

TEST(DefaultHyperparams, DegenerateConstants)
{
  HyperparamInputs in;
  in.mu = 0.0;
  EXPECT_EQ(code_of([&] {default_hyperparams(in, 0.1, 2);}), ErrorCode::DegenerateConstants);
  in.mu = 1.0;
  EXPECT_EQ(code_of([&] {default_hyperparams(in, 0.0, 2);}), ErrorCode::DegenerateConstants);
}

TEST(DefaultHyperparams, ReadsProblemConstants)
{
  auto p = f2sa::testing::small_linear();
  const auto in = hyperparam_inputs(*p, 2);
  EXPECT_EQ(in.mu, 1.5);
  EXPECT_NEAR(in.r, p->y_star(p->initial_x())->norm(), 1e-15);
}

// ---------------------------------------------------------------- oracle GD

TEST(OracleGd, DescendsOnLinearFamily)
{
  auto p = f2sa::testing::small_linear();
  const auto trace = oracle_gd_run(*p, 0.1, 30);
  for (std::size_t t = 1; t < trace.records.size(); ++t) {
    EXPECT_LE(*trace.records[t].objective, *trace.records[t - 1].objective);
  }
}

TEST(OracleGd, StationaryStartStaysPut)
{
  TanhCouplingData d;
  d.b = Matrix::Identity(2, 2);
  d.c = Vector::Zero(2);
  TanhCouplingProblem p(d, 1.0, 0.0);
  const auto trace = oracle_gd_run(p, 0.5, 5);
  EXPECT_EQ(trace.final_x, Vector::Zero(2));
}

TEST(OracleGd, NeedsSecondOrderAccess)
{
  class Bare : public BilevelProblem
  {
  public:
    Bare() : BilevelProblem("bare", 1, 1, ProblemConstants{1.0, {1.0, 1.0}, 0.0, 1.0}) {}
    double upper(const Vector &, const Vector &) const override {return 0.0;}
    double lower(const Vector &, const Vector & y) const override {return 0.5 * y.squaredNorm();}
    Vector gradient(Role role, const Vector &, const Vector & y) const override
    {
      return role == Role::LowerY ? y : Vector::Zero(1);
    }
  } bare;
  EXPECT_EQ(code_of([&] {oracle_gd_run(bare, 0.1, 3);}), ErrorCode::NoSecondOrderAccess);
}

// Tiny spacing, converged inner chains and no noise: F2SA follows
// normalised gradient descent on phi.
TEST(OracleGd, MatchesNoiselessF2saInTheLimit)
{
  auto p = f2sa::testing::small_tanh(0.0);
  SolverConfig cfg;
  cfg.p = 2;
  cfg.nu = 1e-4;
  cfg.eta_x = 0.05;
  cfg.eta_y = 1.0 / (p->constants().mu + p->constants().l1());
  cfg.batch = 1;
  cfg.inner_steps = 200;
  cfg.outer_iters = 5;
  const auto f2sa = f2sa_p_run(*p, cfg);
  const auto gd = oracle_gd_run(*p, cfg.eta_x, 5, true);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT((f2sa.records[t].x - gd.records[t].x).norm(), 1e-3) << "t=" << t;
  }
  EXPECT_LT((f2sa.final_x - gd.final_x).norm(), 1e-3);
}

}  // namespace
