#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "f2sa/findiff.hpp"

namespace
{

using f2sa::ErrorCode;
using f2sa::Rational;

std::vector<std::string> fractions(const f2sa::DiffStencil & s)
{
  std::vector<std::string> out;
  for (const auto & w : s.weights) {out.push_back(f2sa::to_fraction_string(w));}
  return out;
}

template<typename F>
ErrorCode code_of(F && f)
{
  try {
    f();
  } catch (const f2sa::Error & e) {
    return e.code();
  }
  ADD_FAILURE() << "no f2sa::Error thrown";
  return ErrorCode::InvalidArgument;
}

TEST(Stencils, CentralLowOrders)
{
  EXPECT_EQ(fractions(f2sa::central_coefficients(2)),
    (std::vector<std::string>{"-1/2", "0", "1/2"}));
  EXPECT_EQ(fractions(f2sa::central_coefficients(4)),
    (std::vector<std::string>{"1/12", "-2/3", "0", "2/3", "-1/12"}));
}

// Reference weights from a sympy solve of the full Taylor system on all nodes.
TEST(Stencils, CentralHigherOrdersMatchReference)
{
  EXPECT_EQ(fractions(f2sa::central_coefficients(6)),
    (std::vector<std::string>{"-1/60", "3/20", "-3/4", "0", "3/4", "-3/20", "1/60"}));
  EXPECT_EQ(fractions(f2sa::central_coefficients(8)),
    (std::vector<std::string>{"1/280", "-4/105", "1/5", "-4/5", "0", "4/5", "-1/5", "4/105",
      "-1/280"}));
}

TEST(Stencils, ForwardOrders)
{
  EXPECT_EQ(fractions(f2sa::forward_coefficients(1)), (std::vector<std::string>{"-1", "1"}));
  EXPECT_EQ(fractions(f2sa::forward_coefficients(3)),
    (std::vector<std::string>{"-11/6", "3", "-3/2", "1/3"}));
  EXPECT_EQ(fractions(f2sa::forward_coefficients(5)),
    (std::vector<std::string>{"-137/60", "5", "-5", "10/3", "-5/4", "1/5"}));
  EXPECT_EQ(fractions(f2sa::forward_coefficients(7)),
    (std::vector<std::string>{"-363/140", "7", "-21/2", "35/3", "-35/4", "21/5", "-7/6", "1/7"}));
}

TEST(Stencils, MomentConditionsHoldExactly)
{
  for (int p = 1; p <= 12; ++p) {
    const auto s = f2sa::stencil_for_order(p);
    for (int k = 0; k <= p; ++k) {
      Rational m = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {m += s.weights[i] * f2sa::int_power(s.nodes[i], k);}
      EXPECT_EQ(m, Rational(k == 1 ? 1 : 0)) << "p=" << p << " k=" << k;
    }
  }
}

TEST(Stencils, CentralIsAntisymmetricAndSkipsZero)
{
  for (int p = 2; p <= 16; p += 2) {
    const auto s = f2sa::central_coefficients(p);
    ASSERT_EQ(s.size(), static_cast<std::size_t>(p + 1));
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s.weights[i], -s.weights[s.size() - 1 - i]);
    }
    const auto active = s.active_nodes();
    EXPECT_EQ(active.size(), static_cast<std::size_t>(p));
    EXPECT_EQ(std::count(active.begin(), active.end(), 0), 0);
  }
}

TEST(Stencils, ForwardUsesAllNodes)
{
  for (int p = 1; p <= 9; p += 2) {
    EXPECT_EQ(f2sa::forward_coefficients(p).active_nodes().size(), static_cast<std::size_t>(p + 1));
  }
}

TEST(Stencils, LargestOrderStaysExact)
{
  const auto s = f2sa::central_coefficients(f2sa::kMaxStencilOrder);
  Rational m = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {m += s.weights[i] * s.nodes[i];}
  EXPECT_EQ(m, Rational(1));
  EXPECT_TRUE(std::isfinite(s.weights_real.front()));
}

TEST(Stencils, RejectsBadOrders)
{
  EXPECT_EQ(code_of([] {f2sa::central_coefficients(3);}), ErrorCode::OddOrder);
  EXPECT_EQ(code_of([] {f2sa::forward_coefficients(4);}), ErrorCode::EvenOrder);
  EXPECT_EQ(code_of([] {f2sa::central_coefficients(34);}), ErrorCode::OrderTooLarge);
  EXPECT_EQ(code_of([] {f2sa::forward_coefficients(33);}), ErrorCode::OrderTooLarge);
  EXPECT_EQ(code_of([] {f2sa::central_coefficients(0);}), ErrorCode::InvalidArgument);
}

TEST(Vandermonde, SolvesSmallSystem)
{
  // x + y + z = 6, x + 2y + 3z = 14, x + 4y + 9z = 36  ->  (1, 2, 3)
  const std::vector<int> nodes{1, 2, 3};
  const std::vector<Rational> rhs{6, 14, 36};
  const auto m = f2sa::solve_vandermonde_exact(nodes, rhs);
  EXPECT_EQ(m, (std::vector<Rational>{1, 2, 3}));
}

TEST(Vandermonde, Errors)
{
  const std::vector<int> dup{1, 1, 2};
  const std::vector<Rational> rhs3{1, 0, 0};
  const std::vector<Rational> rhs2{1, 0};
  EXPECT_EQ(code_of([&] {f2sa::solve_vandermonde_exact(dup, rhs3);}), ErrorCode::DuplicateNodes);
  const std::vector<int> nodes{1, 2, 3};
  EXPECT_EQ(code_of([&] {f2sa::solve_vandermonde_exact(nodes, rhs2);}), ErrorCode::ShapeMismatch);
}

TEST(Stencils, ApplyIsExactOnPolynomials)
{
  // order p differentiates polynomials of degree <= p exactly
  const auto s = f2sa::central_coefficients(4);
  auto poly = [](double t) {return 1.0 + 3.0 * t - 2.0 * t * t + 0.5 * t * t * t + t * t * t * t;};
  EXPECT_NEAR(s.apply(poly, 0.25), 3.0, 1e-13);
}

TEST(EmpiricalOrder, ExpSlopesMatchOrder)
{
  const std::vector<double> nus{0.5, 0.25, 0.125, 0.0625, 0.03125};
  auto e = [](double t) {return std::exp(t);};
  for (int p : {1, 2, 3, 4}) {
    const double slope = f2sa::empirical_order(f2sa::stencil_for_order(p), e, 1.0, nus);
    EXPECT_NEAR(slope, p, 0.25) << "p=" << p;
  }
}

TEST(EmpiricalOrder, PolynomialHitsNoiseFloor)
{
  const std::vector<double> nus{0.5, 0.25, 0.125, 0.0625};
  auto quad = [](double t) {return 2.0 * t + t * t;};
  EXPECT_EQ(code_of([&] {f2sa::empirical_order(f2sa::central_coefficients(2), quad, 2.0, nus);}),
    ErrorCode::AllPointsAtNoiseFloor);
}

TEST(EmpiricalOrder, ValidatesGrid)
{
  auto e = [](double t) {return std::exp(t);};
  const auto s = f2sa::central_coefficients(2);
  const std::vector<double> short_grid{0.5, 0.25, 0.125};
  const std::vector<double> unordered{0.25, 0.5, 0.125, 0.0625};
  const std::vector<double> too_big{2.0, 0.5, 0.25, 0.125};
  EXPECT_EQ(code_of([&] {f2sa::empirical_order(s, e, 1.0, short_grid);}), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] {f2sa::empirical_order(s, e, 1.0, unordered);}), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] {f2sa::empirical_order(s, e, 1.0, too_big);}), ErrorCode::InvalidArgument);
}

TEST(LogLogSlope, RecoversPowerLaw)
{
  const std::vector<double> xs{1.0, 0.5, 0.25, 0.125};
  std::vector<double> ys;
  for (double x : xs) {ys.push_back(7.0 * std::pow(x, 2.5));}
  EXPECT_NEAR(f2sa::loglog_slope(xs, ys), 2.5, 1e-12);
}

}  // namespace
