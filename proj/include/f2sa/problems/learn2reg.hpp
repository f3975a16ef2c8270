#ifndef F2SA_PROBLEMS_LEARN2REG_HPP_
#define F2SA_PROBLEMS_LEARN2REG_HPP_

// Desk-scale learn-to-regularize: per-feature ridge weights exp(2 x_i) on a
// binary logistic model.
//
//   g(x, y) = mean_i log(1 + exp(-l_i a_i'y)) + sum_k exp(2 x_k) y_k^2   (train)
//   f(x, y) = mean_i log(1 + exp(-l_i a_i'y))                           (validation)
//
// x is kept in the box |x_k| <= 2, so g is 2 exp(-4)-strongly convex in y.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>

#include "f2sa/problem.hpp"
#include "f2sa/problems/synthetic.hpp"

namespace f2sa
{

struct LogisticData
{
  Matrix features;  // n x d
  Vector labels;    // n, entries +-1
};

namespace detail
{

inline double log1p_exp(double t)
{
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t)
{
  if (t >= 0.0) {return 1.0 / (1.0 + std::exp(-t));}
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logistic_loss(const LogisticData & d, const Vector & w)
{
  const Eigen::Index n = d.features.rows();
  if (n == 0) {return 0.0;}
  const Vector margins = (d.features * w).cwiseProduct(d.labels);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {acc += log1p_exp(-margins[i]);}
  return acc / static_cast<double>(n);
}

inline Vector logistic_gradient(const LogisticData & d, const Vector & w)
{
  const Eigen::Index n = d.features.rows();
  if (n == 0) {return Vector::Zero(w.size());}
  const Vector margins = (d.features * w).cwiseProduct(d.labels);
  Vector coeff(n);
  for (Eigen::Index i = 0; i < n; ++i) {coeff[i] = -d.labels[i] * sigmoid(-margins[i]);}
  return d.features.transpose() * coeff / static_cast<double>(n);
}

inline Matrix logistic_hessian(const LogisticData & d, const Vector & w)
{
  const Eigen::Index n = d.features.rows();
  if (n == 0) {return Matrix::Zero(w.size(), w.size());}
  const Vector z = d.features * w;
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = sigmoid(z[i]);
    s[i] = p * (1.0 - p);
  }
  return d.features.transpose() * s.asDiagonal() * d.features / static_cast<double>(n);
}

}  // namespace detail

class Learn2RegProblem : public BilevelProblem
{
public:
  static constexpr double kBox = 2.0;

  Learn2RegProblem(LogisticData train, LogisticData validation, double sigma)
  : BilevelProblem("learn2reg", static_cast<int>(train.features.cols()),
      static_cast<int>(train.features.cols()), ProblemConstants{}),
    train_(std::move(train)), val_(std::move(validation))
  {
    auto & k = mutable_constants();
    k.mu = 2.0 * std::exp(-2.0 * kBox);
    k.sigma = sigma;
    const double spec_tr = train_.features.rows() > 0 ?
      detail::spectral_norm(train_.features) / std::sqrt(double(train_.features.rows())) : 0.0;
    const double spec_val = val_.features.rows() > 0 ?
      detail::spectral_norm(val_.features) / std::sqrt(double(val_.features.rows())) : 0.0;
    double max_row = 0.0;
    for (Eigen::Index i = 0; i < val_.features.rows(); ++i) {
      max_row = std::max(max_row, val_.features.row(i).norm());
    }
    const double ridge = 2.0 * std::exp(2.0 * kBox);
    k.smoothness = {
      max_row,
      std::max(0.25 * spec_tr * spec_tr + ridge, 0.25 * spec_val * spec_val),
      0.1 * std::max(spec_tr, spec_val) * std::max(spec_tr * spec_tr, spec_val * spec_val),
    };
    k.delta = std::log(2.0);
  }

  const LogisticData & train() const {return train_;}
  const LogisticData & validation() const {return val_;}

  double upper(const Vector &, const Vector & y) const override
  {
    return detail::logistic_loss(val_, y);
  }

  double lower(const Vector & x, const Vector & y) const override
  {
    return detail::logistic_loss(train_, y) + ridge_weights(x).dot(y.cwiseAbs2());
  }

  Vector gradient(Role role, const Vector & x, const Vector & y) const override
  {
    switch (role) {
      case Role::UpperX: return Vector::Zero(dim_x());
      case Role::UpperY: return detail::logistic_gradient(val_, y);
      case Role::LowerX: return 2.0 * ridge_weights(x).cwiseProduct(y.cwiseAbs2());
      case Role::LowerY:
        return detail::logistic_gradient(train_, y) + 2.0 * ridge_weights(x).cwiseProduct(y);
    }
    return {};
  }

  bool has_second_order() const override {return true;}

  Matrix hess_yy_lower(const Vector & x, const Vector & y) const override
  {
    Matrix h = detail::logistic_hessian(train_, y);
    h.diagonal() += 2.0 * ridge_weights(x);
    return h;
  }

  Matrix hess_xy_lower(const Vector & x, const Vector & y) const override
  {
    return Matrix((4.0 * ridge_weights(x).cwiseProduct(y)).asDiagonal());
  }

  /// Newton solve of the lower level; not closed form.
  std::optional<Vector> y_star(const Vector & x) const override
  {
    return perturbed_y_star(x, 0.0);
  }

  /// Newton on nu f + g. Returns nullopt if the perturbed Hessian loses
  /// definiteness or the iteration fails to converge.
  std::optional<Vector> perturbed_y_star(const Vector & x, double nu) const override
  {
    Vector y = Vector::Zero(dim_y());
    for (int it = 0; it < 100; ++it) {
      const Vector grad = nu * gradient(Role::UpperY, x, y) + gradient(Role::LowerY, x, y);
      if (grad.norm() <= 1e-14) {return y;}
      Matrix h = hess_yy_lower(x, y);
      if (nu != 0.0) {h += nu * detail::logistic_hessian(val_, y);}
      Eigen::LLT<Matrix> llt(h);
      if (llt.info() != Eigen::Success) {return std::nullopt;}
      const Vector step = llt.solve(grad);
      y -= step;
      if (step.norm() <= 1e-15 * (1.0 + y.norm())) {return y;}
    }
    const Vector grad = nu * gradient(Role::UpperY, x, y) + gradient(Role::LowerY, x, y);
    if (grad.norm() <= 1e-10) {return y;}
    return std::nullopt;
  }

  void project_x(Vector & x) const override
  {
    x = x.cwiseMax(-kBox).cwiseMin(kBox);
  }

  Vector ridge_weights(const Vector & x) const
  {
    return (2.0 * x).array().exp().matrix();
  }

private:
  LogisticData train_;
  LogisticData val_;
};

namespace detail
{

inline LogisticData synth_logistic(
  int n, const Vector & w_true, std::mt19937_64 & gen)
{
  LogisticData d;
  d.features = gaussian_matrix(n, static_cast<int>(w_true.size()), gen);
  d.labels.resize(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double p = sigmoid(d.features.row(i).dot(w_true));
    d.labels[i] = unif(gen) < p ? 1.0 : -1.0;
  }
  return d;
}

}  // namespace detail

/// Gaussian features, labels from a planted logistic model. Validation set may be empty.
inline std::shared_ptr<Learn2RegProblem> make_learn2reg(
  int n_samples, int n_features, int n_val, double sigma, std::uint64_t seed)
{
  if (n_features > 200 || n_samples > 2000 || n_val > 2000) {
    throw Error(ErrorCode::ScaleTooLarge, "learn2reg is limited to 200 features, 2000 samples");
  }
  if (n_features < 1 || n_samples < 1 || n_val < 0) {
    throw Error(ErrorCode::InvalidArgument, "learn2reg sizes must be positive");
  }
  std::mt19937_64 gen(seed);
  const Vector w_true = detail::gaussian_vector(n_features, gen);
  LogisticData train = detail::synth_logistic(n_samples, w_true, gen);
  LogisticData val = detail::synth_logistic(n_val, w_true, gen);
  return std::make_shared<Learn2RegProblem>(std::move(train), std::move(val), sigma);
}

}  // namespace f2sa

#endif  // F2SA_PROBLEMS_LEARN2REG_HPP_
