#ifndef F2SA_PROBLEM_HPP_
#define F2SA_PROBLEM_HPP_

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "f2sa/error.hpp"
#include "f2sa/seed.hpp"

namespace f2sa
{

/**
 * Smoothness and conditioning data of one bilevel instance.
 *
 * smoothness[j] holds L_j: L_0 bounds the y-Lipschitz constant of f, L_1 the
 * joint gradient Lipschitz constant of f and g, L_j (j >= 2) the higher-order
 * y-smoothness. Entries that are not listed are taken as 0.
 */
struct ProblemConstants
{
  double mu{1.0};
  std::vector<double> smoothness{0.0, 1.0};
  double sigma{0.0};
  double delta{1.0};

  double lipschitz(int j) const
  {
    return j >= 0 && static_cast<std::size_t>(j) < smoothness.size() ? smoothness[j] : 0.0;
  }
  double l1() const {return lipschitz(1);}

  /// Largest smoothness constant over orders 0..p.
  double l_bar(int p) const
  {
    double out = 0.0;
    for (int j = 0; j <= p; ++j) {out = std::max(out, lipschitz(j));}
    return std::max(out, l1());
  }
  double kappa(int p) const {return l_bar(p) / mu;}
};

/**
 * Oracle-facing description of one bilevel instance
 *
 *   min_x phi(x) = f(x, y*(x)),  y*(x) = argmin_y g(x, y).
 *
 * Derived classes provide the deterministic partial gradients; the default
 * stochastic oracle adds isotropic Gaussian noise with total variance
 * sigma^2. Optional analytic access (Hessians, y*, perturbed minimizers,
 * grad phi) is reported through std::optional / has_second_order().
 * Instances are immutable after construction.
 */
class BilevelProblem
{
public:
  BilevelProblem(std::string name, int dim_x, int dim_y, ProblemConstants constants)
  : name_(std::move(name)), dim_x_(dim_x), dim_y_(dim_y), constants_(std::move(constants))
  {}
  virtual ~BilevelProblem() = default;

  const std::string & name() const {return name_;}
  int dim_x() const {return dim_x_;}
  int dim_y() const {return dim_y_;}
  const ProblemConstants & constants() const {return constants_;}
  double sigma() const {return constants_.sigma;}

  virtual double upper(const Vector & x, const Vector & y) const = 0;
  virtual double lower(const Vector & x, const Vector & y) const = 0;

  /// Exact partial gradient for the given role.
  virtual Vector gradient(Role role, const Vector & x, const Vector & y) const = 0;

  virtual Vector stochastic_gradient(
    Role role, const Vector & x, const Vector & y, const SeedPath & path) const
  {
    Vector out = gradient(role, x, y);
    if (sigma() > 0.0) {
      auto rng = path.stream();
      out += isotropic_noise(out.size(), sigma(), rng);
    }
    return out;
  }

  virtual bool has_second_order() const {return false;}

  /// Hessian of g in y, dim_y x dim_y.
  virtual Matrix hess_yy_lower(const Vector &, const Vector &) const
  {
    throw Error(ErrorCode::NoSecondOrderAccess, name_ + " exposes no Hessians");
  }

  /// Mixed Hessian d/dx d/dy g, dim_x x dim_y.
  virtual Matrix hess_xy_lower(const Vector &, const Vector &) const
  {
    throw Error(ErrorCode::NoSecondOrderAccess, name_ + " exposes no Hessians");
  }

  virtual std::optional<Vector> y_star(const Vector &) const {return std::nullopt;}

  /// True when y_star() is a closed-form expression rather than an internal solve.
  virtual bool y_star_closed_form() const {return false;}

  /// argmin_y nu f(x, y) + g(x, y), when available without iteration.
  virtual std::optional<Vector> perturbed_y_star(const Vector &, double) const
  {
    return std::nullopt;
  }

  virtual std::optional<Vector> grad_phi(const Vector &) const {return std::nullopt;}

  virtual Vector initial_x() const {return Vector::Zero(dim_x_);}
  virtual Vector initial_y() const {return Vector::Zero(dim_y_);}

  /// Feasible-set projection applied after every outer step.
  virtual void project_x(Vector &) const {}

protected:
  ProblemConstants & mutable_constants() {return constants_;}

private:
  std::string name_;
  int dim_x_;
  int dim_y_;
  ProblemConstants constants_;
};

using ProblemPtr = std::shared_ptr<const BilevelProblem>;

/// Scalar h(t) = t^2 / (1 + t^2) and its derivative, summed coordinatewise
/// by the synthetic families.
inline double bounded_square(double t) {return t * t / (1.0 + t * t);}
inline double bounded_square_prime(double t)
{
  const double s = 1.0 + t * t;
  return 2.0 * t / (s * s);
}

}  // namespace f2sa

#endif  // F2SA_PROBLEM_HPP_
