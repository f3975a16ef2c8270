#ifndef F2SA_PROBLEMS_SYNTHETIC_HPP_
#define F2SA_PROBLEMS_SYNTHETIC_HPP_

// Two synthetic bilevel families with closed-form y*(x) and grad phi(x).
//
//   linear:  f = h(x) + b'y,                g = (mu/2)|y - A x - y0|^2
//   tanh:    f = h(x) + c'y + |y|^2 / 2,    g = (mu/2)|y|^2 - y' tanh(B x)
//
// with h(x) = sum_i x_i^2 / (1 + x_i^2).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>

#include "f2sa/problem.hpp"

namespace f2sa
{

namespace detail
{

inline Matrix gaussian_matrix(int rows, int cols, std::mt19937_64 & gen)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {m(i, j) = normal(gen);}
  }
  return m;
}

inline Vector gaussian_vector(int n, std::mt19937_64 & gen)
{
  return gaussian_matrix(n, 1, gen).col(0);
}

inline double spectral_norm(const Matrix & m)
{
  if (m.size() == 0) {return 0.0;}
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double h_value(const Vector & x)
{
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {acc += bounded_square(x[i]);}
  return acc;
}

inline Vector h_gradient(const Vector & x)
{
  return x.unaryExpr([](double t) {return bounded_square_prime(t);});
}

// sup_t |h'(t)|, attained at t = 1/sqrt(3)
inline constexpr double kMaxBoundedSquareSlope = 0.6495190528383290;
// sup_t |d/dt sech^2 t| = 4 / (3 sqrt 3)
inline constexpr double kMaxSech2Slope = 0.7698003589195010;

}  // namespace detail

struct LinearCouplingData
{
  Matrix a;   // dim_y x dim_x
  Vector b;   // dim_y
  Vector y0;  // dim_y
};

class LinearCouplingProblem : public BilevelProblem
{
public:
  LinearCouplingProblem(LinearCouplingData data, double mu, double sigma)
  : BilevelProblem("linear", static_cast<int>(data.a.cols()), static_cast<int>(data.a.rows()),
      ProblemConstants{}),
    data_(std::move(data)), mu_(mu)
  {
    if (mu <= 0.0) {throw Error(ErrorCode::InvalidArgument, "mu must be positive");}
    const double norm_a = detail::spectral_norm(data_.a);
    auto & c = mutable_constants();
    c.mu = mu;
    c.sigma = sigma;
    c.smoothness = {data_.b.norm(), std::max({2.0, mu * (1.0 + norm_a * norm_a), mu})};
    c.delta = basin_gap();
  }

  const LinearCouplingData & data() const {return data_;}

  double upper(const Vector & x, const Vector & y) const override
  {
    return detail::h_value(x) + data_.b.dot(y);
  }

  double lower(const Vector & x, const Vector & y) const override
  {
    return 0.5 * mu_ * residual(x, y).squaredNorm();
  }

  Vector gradient(Role role, const Vector & x, const Vector & y) const override
  {
    switch (role) {
      case Role::UpperX: return detail::h_gradient(x);
      case Role::UpperY: return data_.b;
      case Role::LowerX: return -mu_ * (data_.a.transpose() * residual(x, y));
      case Role::LowerY: return mu_ * residual(x, y);
    }
    return {};
  }

  bool has_second_order() const override {return true;}

  Matrix hess_yy_lower(const Vector &, const Vector &) const override
  {
    return mu_ * Matrix::Identity(dim_y(), dim_y());
  }

  Matrix hess_xy_lower(const Vector &, const Vector &) const override
  {
    return -mu_ * data_.a.transpose();
  }

  std::optional<Vector> y_star(const Vector & x) const override
  {
    return Vector(data_.a * x + data_.y0);
  }
  bool y_star_closed_form() const override {return true;}

  std::optional<Vector> perturbed_y_star(const Vector & x, double nu) const override
  {
    return Vector(data_.a * x + data_.y0 - (nu / mu_) * data_.b);
  }

  std::optional<Vector> grad_phi(const Vector & x) const override
  {
    return Vector(detail::h_gradient(x) + data_.a.transpose() * data_.b);
  }

private:
  Vector residual(const Vector & x, const Vector & y) const
  {
    return y - data_.a * x - data_.y0;
  }

  // phi is separable: phi(x) = sum_i h(x_i) + c_i x_i + b'y0 with c = A'b.
  // The gap is measured to the local minimizer in the basin of x0 = 0.
  double basin_gap() const
  {
    const Vector c = data_.a.transpose() * data_.b;
    double gap = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (std::abs(c[i]) >= detail::kMaxBoundedSquareSlope) {
        return std::numeric_limits<double>::infinity();
      }
      // h' is increasing on [-1/sqrt3, 1/sqrt3]; bisect h'(t) = -c_i
      double lo = -1.0 / std::sqrt(3.0), hi = 1.0 / std::sqrt(3.0);
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (bounded_square_prime(mid) + c[i] > 0.0) {hi = mid;} else {lo = mid;}
      }
      const double t = 0.5 * (lo + hi);
      gap += -(bounded_square(t) + c[i] * t);
    }
    return std::max(gap, 1e-12);
  }

  LinearCouplingData data_;
  double mu_;
};

/**
 * Draws A, b, y0 from `seed`. A is rescaled to unit spectral norm and b so
 * that |A'b|_inf = 0.3, which keeps a stationary point of phi inside the
 * basin around x = 0.
 */
inline std::shared_ptr<LinearCouplingProblem> make_linear_coupling(
  int dim_x, int dim_y, double mu, double sigma, std::uint64_t seed)
{
  if (dim_x < 1 || dim_y < 1) {throw Error(ErrorCode::InvalidArgument, "dims must be >= 1");}
  std::mt19937_64 gen(seed);
  LinearCouplingData d;
  d.a = detail::gaussian_matrix(dim_y, dim_x, gen);
  d.a /= detail::spectral_norm(d.a);
  d.b = detail::gaussian_vector(dim_y, gen);
  d.y0 = detail::gaussian_vector(dim_y, gen);
  const double slope = (d.a.transpose() * d.b).cwiseAbs().maxCoeff();
  if (slope > 0.0) {d.b *= 0.3 / slope;}
  return std::make_shared<LinearCouplingProblem>(std::move(d), mu, sigma);
}

struct TanhCouplingData
{
  Matrix b;  // dim_y x dim_x
  Vector c;  // dim_y
};

class TanhCouplingProblem : public BilevelProblem
{
public:
  TanhCouplingProblem(TanhCouplingData data, double mu, double sigma)
  : BilevelProblem("tanh", static_cast<int>(data.b.cols()), static_cast<int>(data.b.rows()),
      ProblemConstants{}),
    data_(std::move(data)), mu_(mu)
  {
    if (mu <= 0.0) {throw Error(ErrorCode::InvalidArgument, "mu must be positive");}
    const double nb = detail::spectral_norm(data_.b);
    const double nc = data_.c.norm();
    const double y_radius = (std::sqrt(static_cast<double>(dim_y())) + nc) / mu;
    auto & k = mutable_constants();
    k.mu = mu;
    k.sigma = sigma;
    const double l2 = detail::kMaxSech2Slope * nb * nb;
    k.smoothness = {
      nc + y_radius,
      std::max({2.0, 1.0, mu + nb + l2 * y_radius}),
      l2,
    };
    // phi >= -|c|^2 / 2 and phi(0) = 0
    k.delta = std::max(0.5 * nc * nc, 1e-12);
  }

  const TanhCouplingData & data() const {return data_;}

  double upper(const Vector & x, const Vector & y) const override
  {
    return detail::h_value(x) + data_.c.dot(y) + 0.5 * y.squaredNorm();
  }

  double lower(const Vector & x, const Vector & y) const override
  {
    return 0.5 * mu_ * y.squaredNorm() - y.dot(squash(x));
  }

  Vector gradient(Role role, const Vector & x, const Vector & y) const override
  {
    switch (role) {
      case Role::UpperX: return detail::h_gradient(x);
      case Role::UpperY: return data_.c + y;
      case Role::LowerX: return -(data_.b.transpose() * sech2(x).cwiseProduct(y));
      case Role::LowerY: return mu_ * y - squash(x);
    }
    return {};
  }

  bool has_second_order() const override {return true;}

  Matrix hess_yy_lower(const Vector &, const Vector &) const override
  {
    return mu_ * Matrix::Identity(dim_y(), dim_y());
  }

  Matrix hess_xy_lower(const Vector & x, const Vector &) const override
  {
    return -(data_.b.transpose() * sech2(x).asDiagonal());
  }

  std::optional<Vector> y_star(const Vector & x) const override
  {
    return Vector(squash(x) / mu_);
  }
  bool y_star_closed_form() const override {return true;}

  std::optional<Vector> perturbed_y_star(const Vector & x, double nu) const override
  {
    if (mu_ + nu <= 0.0) {return std::nullopt;}
    return Vector((squash(x) - nu * data_.c) / (mu_ + nu));
  }

  std::optional<Vector> grad_phi(const Vector & x) const override
  {
    const Vector ys = squash(x) / mu_;
    return Vector(
      detail::h_gradient(x) +
      (data_.b.transpose() * sech2(x).cwiseProduct(data_.c + ys)) / mu_);
  }

private:
  Vector squash(const Vector & x) const
  {
    return (data_.b * x).unaryExpr([](double t) {return std::tanh(t);});
  }

  Vector sech2(const Vector & x) const
  {
    return (data_.b * x).unaryExpr([](double t) {
      const double th = std::tanh(t);
      return 1.0 - th * th;
    });
  }

  TanhCouplingData data_;
  double mu_;
};

/// B is rescaled to unit spectral norm; c is standard Gaussian.
inline std::shared_ptr<TanhCouplingProblem> make_tanh_coupling(
  int dim_x, int dim_y, double mu, double sigma, std::uint64_t seed)
{
  if (dim_x < 1 || dim_y < 1) {throw Error(ErrorCode::InvalidArgument, "dims must be >= 1");}
  std::mt19937_64 gen(seed);
  TanhCouplingData d;
  d.b = detail::gaussian_matrix(dim_y, dim_x, gen);
  d.b /= detail::spectral_norm(d.b);
  d.c = detail::gaussian_vector(dim_y, gen);
  return std::make_shared<TanhCouplingProblem>(std::move(d), mu, sigma);
}

}  // namespace f2sa

#endif  // F2SA_PROBLEMS_SYNTHETIC_HPP_
