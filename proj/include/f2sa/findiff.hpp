#ifndef F2SA_FINDIFF_HPP_
#define F2SA_FINDIFF_HPP_

// First-derivative finite-difference stencils of arbitrary order, generated
// from exact rational Vandermonde solves.
//
// A stencil of order p approximates psi'(0) by (1/nu) * sum_j w_j psi(j nu)
// with error O(nu^p). Even orders use the central nodes {-p/2, ..., p/2}
// (w_0 = 0, w_{-j} = -w_j); odd orders use forward nodes {0, ..., p}.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "f2sa/error.hpp"

namespace f2sa
{

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline constexpr int kMaxStencilOrder = 32;

enum class StencilKind { Central, Forward };

struct DiffStencil
{
  int order{0};
  StencilKind kind{StencilKind::Central};
  std::vector<int> nodes;
  std::vector<Rational> weights;
  std::vector<double> weights_real;

  std::size_t size() const { return nodes.size(); }

  /// Nodes carrying a nonzero weight (the lower-level chains a solver must run).
  std::vector<int> active_nodes() const
  {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (weights[i] != 0) {out.push_back(nodes[i]);}
    }
    return out;
  }

  double weight_of(int node) const
  {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] == node) {return weights_real[i];}
    }
    return 0.0;
  }

  /// (1/nu) * sum_j w_j psi(j nu)
  double apply(const std::function<double(double)> & psi, double nu) const
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (weights_real[i] != 0.0) {acc += weights_real[i] * psi(nodes[i] * nu);}
    }
    return acc / nu;
  }
};

inline double to_double(const Rational & r) {return r.convert_to<double>();}

inline std::string to_fraction_string(const Rational & r)
{
  const BigInt num = boost::multiprecision::numerator(r);
  const BigInt den = boost::multiprecision::denominator(r);
  if (den == 1) {return num.str();}
  return num.str() + "/" + den.str();
}

inline Rational int_power(int base, int exponent)
{
  return Rational(boost::multiprecision::pow(BigInt(base), static_cast<unsigned>(exponent)));
}

/**
 * Solves sum_k nodes[k]^exponents[i] * m[k] = rhs[i] for i = 0..n-1 by
 * Gaussian elimination over exact rationals.
 */
inline std::vector<Rational> solve_vandermonde_exact(
  std::span<const int> nodes, std::span<const int> exponents, std::span<const Rational> rhs)
{
  const std::size_t n = nodes.size();
  if (rhs.size() != n || exponents.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "nodes, exponents and rhs must have equal length");
  }
  if (std::set<int>(nodes.begin(), nodes.end()).size() != n) {
    throw Error(ErrorCode::DuplicateNodes, "Vandermonde nodes must be pairwise distinct");
  }
  for (int e : exponents) {
    if (e < 0) {throw Error(ErrorCode::InvalidArgument, "negative exponent");}
  }

  // augmented matrix [V | rhs]
  std::vector<std::vector<Rational>> a(n, std::vector<Rational>(n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {a[i][k] = int_power(nodes[k], exponents[i]);}
    a[i][n] = rhs[i];
  }

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    while (pivot < n && a[pivot][col] == 0) {++pivot;}
    if (pivot == n) {
      throw Error(ErrorCode::InvalidArgument, "singular system for the given exponent schedule");
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t row = 0; row < n; ++row) {
      if (row == col || a[row][col] == 0) {continue;}
      const Rational factor = a[row][col] / a[col][col];
      for (std::size_t k = col; k <= n; ++k) {a[row][k] -= factor * a[col][k];}
    }
  }

  std::vector<Rational> m(n);
  for (std::size_t i = 0; i < n; ++i) {m[i] = a[i][n] / a[i][i];}
  return m;
}

/// Standard Vandermonde schedule, exponents 0..n-1.
inline std::vector<Rational> solve_vandermonde_exact(
  std::span<const int> nodes, std::span<const Rational> rhs)
{
  std::vector<int> exponents(nodes.size());
  std::iota(exponents.begin(), exponents.end(), 0);
  return solve_vandermonde_exact(nodes, exponents, rhs);
}

namespace detail
{

inline void render(DiffStencil & s)
{
  s.weights_real.resize(s.weights.size());
  for (std::size_t i = 0; i < s.weights.size(); ++i) {s.weights_real[i] = to_double(s.weights[i]);}
}

}  // namespace detail

/**
 * Central stencil of even order p on nodes -p/2..p/2.
 *
 * Unknowns are m_j = j * alpha_j for j = 1..p/2. Odd moments give
 * sum_j m_j j^{2r} = [r == 0] / 2 for r = 0..p/2-1; even moments vanish by
 * antisymmetry.
 */
inline DiffStencil central_coefficients(int p)
{
  if (p % 2 != 0) {throw Error(ErrorCode::OddOrder, "central stencils need even order");}
  if (p < 2) {throw Error(ErrorCode::InvalidArgument, "order must be >= 2");}
  if (p > kMaxStencilOrder) {throw Error(ErrorCode::OrderTooLarge, "order above 32");}

  const int half = p / 2;
  std::vector<int> pos(half), exps(half);
  std::vector<Rational> rhs(half, Rational(0));
  for (int j = 0; j < half; ++j) {
    pos[j] = j + 1;
    exps[j] = 2 * j;
  }
  rhs[0] = Rational(1, 2);
  const auto m = solve_vandermonde_exact(pos, exps, rhs);

  DiffStencil s;
  s.order = p;
  s.kind = StencilKind::Central;
  for (int j = -half; j <= half; ++j) {
    s.nodes.push_back(j);
    if (j == 0) {
      s.weights.emplace_back(0);
    } else {
      const int a = std::abs(j);
      const Rational alpha = m[a - 1] / a;
      s.weights.push_back(j > 0 ? alpha : Rational(-alpha));
    }
  }
  detail::render(s);
  return s;
}

/**
 * Forward stencil of odd order p on nodes 0..p.
 *
 * Unknowns are m_j = j * beta_j for j = 1..p with sum_j m_j j^{k-1} = [k == 1]
 * for k = 1..p, and beta_0 = -sum_{j>=1} beta_j.
 */
inline DiffStencil forward_coefficients(int p)
{
  if (p % 2 == 0) {throw Error(ErrorCode::EvenOrder, "forward stencils need odd order");}
  if (p < 1) {throw Error(ErrorCode::InvalidArgument, "order must be >= 1");}
  if (p > kMaxStencilOrder - 1) {throw Error(ErrorCode::OrderTooLarge, "order above 31");}

  std::vector<int> pos(p);
  std::iota(pos.begin(), pos.end(), 1);
  std::vector<Rational> rhs(p, Rational(0));
  rhs[0] = 1;
  const auto m = solve_vandermonde_exact(pos, rhs);

  DiffStencil s;
  s.order = p;
  s.kind = StencilKind::Forward;
  Rational sum = 0;
  s.nodes.push_back(0);
  s.weights.emplace_back(0);
  for (int j = 1; j <= p; ++j) {
    const Rational beta = m[j - 1] / j;
    s.nodes.push_back(j);
    s.weights.push_back(beta);
    sum += beta;
  }
  s.weights[0] = -sum;
  detail::render(s);
  return s;
}

/// Central for even p, forward for odd p.
inline DiffStencil stencil_for_order(int p)
{
  return p % 2 == 0 ? central_coefficients(p) : forward_coefficients(p);
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(std::span<const double> xs, std::span<const double> ys)
{
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/**
 * Least-squares slope of log|D_nu psi - psi'(0)| against log nu over the
 * spacings whose error sits above 1e-12 * |psi'(0)|.
 */
inline double empirical_order(
  const DiffStencil & stencil, const std::function<double(double)> & psi, double dpsi0,
  std::span<const double> spacings)
{
  if (spacings.size() < 4) {throw Error(ErrorCode::InvalidArgument, "need at least 4 spacings");}
  for (std::size_t i = 0; i < spacings.size(); ++i) {
    if (!(spacings[i] > 0.0 && spacings[i] <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "spacings must lie in (0, 1]");
    }
    if (i > 0 && !(spacings[i] < spacings[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "spacings must be strictly decreasing");
    }
  }

  const double floor = 1e-12 * std::abs(dpsi0);
  std::vector<double> nus, errs;
  for (double nu : spacings) {
    const double err = std::abs(stencil.apply(psi, nu) - dpsi0);
    if (err > floor && err > 0.0) {
      nus.push_back(nu);
      errs.push_back(err);
    }
  }
  if (nus.size() < 2) {
    throw Error(ErrorCode::AllPointsAtNoiseFloor, "fewer than two spacings above the noise floor");
  }

  return loglog_slope(nus, errs);
}

}  // namespace f2sa

#endif  // F2SA_FINDIFF_HPP_
