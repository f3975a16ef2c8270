#ifndef F2SA_PROBLEMS_HARD_INSTANCE_HPP_
#define F2SA_PROBLEMS_HARD_INSTANCE_HPP_

// Separable worst-case instance built on the zero-chain function of
// Carmon et al. with the Bernoulli-masked oracle of Arjevani et al.:
//
//   f(x, y) = (L1 beta^2 / Lbar1) fnc(rho(U'x / beta)) + (L1 lambda / (2 Lbar1)) |x|^2
//   g(x, y) = (mu / 2) y^2
//
// The stochastic upper-level gradient multiplies the coordinate just past
// prog_{1/4}(z) by xi / gamma with xi ~ Bernoulli(gamma).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>

#include "f2sa/problem.hpp"
#include "f2sa/problems/synthetic.hpp"

namespace f2sa
{

/// Psi(t) = exp(1 - 1/(2t-1)^2) for t > 1/2, else 0.
inline double psi(double t)
{
  if (t <= 0.5) {return 0.0;}
  const double s = 2.0 * t - 1.0;
  return std::exp(1.0 - 1.0 / (s * s));
}

inline double psi_prime(double t)
{
  if (t <= 0.5) {return 0.0;}
  const double s = 2.0 * t - 1.0;
  return psi(t) * 4.0 / (s * s * s);
}

/// Phi(t) = sqrt(e) * int_{-inf}^t exp(-u^2/2) du
inline double phi_cap(double t)
{
  using std::numbers::e;
  using std::numbers::pi;
  return std::sqrt(e) * std::sqrt(pi / 2.0) * std::erfc(-t / std::numbers::sqrt2);
}

inline double phi_cap_prime(double t)
{
  return std::sqrt(std::numbers::e) * std::exp(-0.5 * t * t);
}

/// Zero-chain function -Psi(1) Phi(x_1) + sum_{i>=2} [Psi(-x_{i-1}) Phi(-x_i) - Psi(x_{i-1}) Phi(x_i)].
inline double f_nc(const Vector & x)
{
  double acc = -psi(1.0) * phi_cap(x[0]);
  for (Eigen::Index i = 1; i < x.size(); ++i) {
    acc += psi(-x[i - 1]) * phi_cap(-x[i]) - psi(x[i - 1]) * phi_cap(x[i]);
  }
  return acc;
}

inline Vector grad_f_nc(const Vector & x)
{
  const Eigen::Index n = x.size();
  Vector g = Vector::Zero(n);
  g[0] = -psi(1.0) * phi_cap_prime(x[0]);
  for (Eigen::Index i = 1; i < n; ++i) {
    // d/dx_{i-1} and d/dx_i of the pair term
    g[i - 1] += -psi_prime(-x[i - 1]) * phi_cap(-x[i]) - psi_prime(x[i - 1]) * phi_cap(x[i]);
    g[i] += -psi(-x[i - 1]) * phi_cap_prime(-x[i]) - psi(x[i - 1]) * phi_cap_prime(x[i]);
  }
  return g;
}

/// Largest 1-based index i with |x_i| > alpha; 0 if none.
inline int prog(const Vector & x, double alpha)
{
  for (Eigen::Index i = x.size(); i > 0; --i) {
    if (std::abs(x[i - 1]) > alpha) {return static_cast<int>(i);}
  }
  return 0;
}

/// F_T(z) for a given Bernoulli outcome xi.
inline Vector masked_chain_gradient(const Vector & z, bool xi, double gamma)
{
  Vector g = grad_f_nc(z);
  const int m = prog(z, 0.25);
  const double scale = xi ? 1.0 / gamma : 0.0;
  for (Eigen::Index i = m; i < g.size(); ++i) {g[i] *= scale;}
  return g;
}

struct HardInstanceParams
{
  int t_chain{10};
  double epsilon{0.1};
  double l1{1.0};
  double sigma{1.0};
  double mu{1.0};
  std::uint64_t seed{0};

  static constexpr double kLBar1 = 155.0;
  static constexpr double kLambda = 0.2;

  double beta() const {return 4.0 * kLBar1 * epsilon / l1;}
  double r_chain() const {return 230.0 * std::sqrt(static_cast<double>(t_chain));}
  double gamma() const
  {
    if (sigma == 0.0) {return 1.0;}
    const double a = 46.0 * epsilon;
    return std::min(a * a / (sigma * sigma), 1.0);
  }
};

class HardInstanceProblem : public BilevelProblem
{
public:
  explicit HardInstanceProblem(const HardInstanceParams & params)
  : BilevelProblem("hard", params.t_chain, 1, ProblemConstants{}), params_(params)
  {
    if (params.t_chain < 1) {throw Error(ErrorCode::InvalidArgument, "t_chain must be >= 1");}
    const double gamma = params.gamma();
    if (!(gamma > 0.0 && gamma <= 1.0) || !(params.epsilon > 0.0) || !(params.l1 > 0.0)) {
      throw Error(ErrorCode::GammaOutOfRange, "gamma must lie in (0, 1]");
    }
    std::mt19937_64 gen(params.seed);
    const Matrix g = detail::gaussian_matrix(params.t_chain, params.t_chain, gen);
    Eigen::HouseholderQR<Matrix> qr(g);
    rotation_ = qr.householderQ() * Matrix::Identity(params.t_chain, params.t_chain);

    auto & k = mutable_constants();
    k.mu = params.mu;
    k.sigma = params.sigma;
    k.smoothness = {0.0, std::max(params.l1, params.mu)};
    // fnc(0) - inf fnc <= 12 T
    k.delta = params.l1 * params.beta() * params.beta() / HardInstanceParams::kLBar1 *
      12.0 * params.t_chain;
  }

  const HardInstanceParams & params() const {return params_;}
  const Matrix & rotation() const {return rotation_;}
  double gamma() const {return params_.gamma();}

  Vector inner_argument(const Vector & x) const
  {
    return (rotation_.transpose() * x) / params_.beta();
  }

  Vector rho(const Vector & u) const
  {
    return u / rho_scale(u);
  }

  /// Jacobian of rho; symmetric.
  Matrix rho_jacobian(const Vector & u) const
  {
    const double s = rho_scale(u);
    const double r2 = params_.r_chain() * params_.r_chain();
    return Matrix::Identity(u.size(), u.size()) / s - (u * u.transpose()) / (r2 * s * s * s);
  }

  /// z = rho(U'x / beta), the point where the chain function is evaluated.
  Vector chain_point(const Vector & x) const {return rho(inner_argument(x));}

  double f_u(const Vector & x) const
  {
    const double b = params_.beta();
    return params_.l1 * b * b / HardInstanceParams::kLBar1 * f_nc(chain_point(x)) +
           params_.l1 * HardInstanceParams::kLambda / (2.0 * HardInstanceParams::kLBar1) *
           x.squaredNorm();
  }

  Vector grad_f_u(const Vector & x) const {return assemble(x, grad_f_nc(chain_point(x)));}

  /// F_U(x) with the Bernoulli outcome given explicitly.
  Vector masked_grad_f_u(const Vector & x, bool xi) const
  {
    return assemble(x, masked_chain_gradient(chain_point(x), xi, gamma()));
  }

  bool draw_xi(const SeedPath & path) const
  {
    auto rng = path.stream();
    std::bernoulli_distribution bern(gamma());
    return bern(rng);
  }

  double upper(const Vector & x, const Vector &) const override {return f_u(x);}

  double lower(const Vector &, const Vector & y) const override
  {
    return 0.5 * params_.mu * y.squaredNorm();
  }

  Vector gradient(Role role, const Vector & x, const Vector & y) const override
  {
    switch (role) {
      case Role::UpperX: return grad_f_u(x);
      case Role::UpperY: return Vector::Zero(1);
      case Role::LowerX: return Vector::Zero(dim_x());
      case Role::LowerY: return params_.mu * y;
    }
    return {};
  }

  Vector stochastic_gradient(
    Role role, const Vector & x, const Vector & y, const SeedPath & path) const override
  {
    if (role != Role::UpperX) {return gradient(role, x, y);}
    return masked_grad_f_u(x, draw_xi(path));
  }

  bool has_second_order() const override {return true;}
  Matrix hess_yy_lower(const Vector &, const Vector &) const override
  {
    return Matrix::Constant(1, 1, params_.mu);
  }
  Matrix hess_xy_lower(const Vector &, const Vector &) const override
  {
    return Matrix::Zero(dim_x(), 1);
  }

  std::optional<Vector> y_star(const Vector &) const override {return Vector::Zero(1);}
  bool y_star_closed_form() const override {return true;}
  std::optional<Vector> perturbed_y_star(const Vector &, double) const override
  {
    return Vector::Zero(1);
  }
  std::optional<Vector> grad_phi(const Vector & x) const override {return grad_f_u(x);}

private:
  double rho_scale(const Vector & u) const
  {
    const double r = params_.r_chain();
    return std::sqrt(1.0 + u.squaredNorm() / (r * r));
  }

  // (L1 / Lbar1) (beta U J_rho(u) v + lambda x), v the chain gradient at rho(u)
  Vector assemble(const Vector & x, const Vector & chain_grad) const
  {
    const Vector u = inner_argument(x);
    const Vector inner = rho_jacobian(u) * chain_grad;
    return (params_.l1 / HardInstanceParams::kLBar1) *
           (params_.beta() * (rotation_ * inner) + HardInstanceParams::kLambda * x);
  }

  HardInstanceParams params_;
  Matrix rotation_;
};

/// x with chain point rho(U'x / beta) equal to z (requires |z| < R).
inline Vector hard_point_from_chain(const HardInstanceProblem & h, const Vector & z)
{
  const double r = h.params().r_chain();
  const double scale = std::sqrt(1.0 - z.squaredNorm() / (r * r));
  return h.params().beta() * (h.rotation() * (z / scale));
}

/// A chain point with prog_{1/4} equal to m: coordinates past m lie in [-1/4, 1/4].
inline Vector random_chain_point(int dim, int m, std::mt19937_64 & gen)
{
  std::uniform_real_distribution<double> small(-0.25, 0.25);
  std::uniform_real_distribution<double> large(0.26, 2.0);
  std::uniform_real_distribution<double> any(-2.0, 2.0);
  std::bernoulli_distribution sign(0.5);
  Vector z(dim);
  for (int i = 0; i < dim; ++i) {
    if (i + 1 < m) {
      z[i] = any(gen);
    } else if (i + 1 == m) {
      z[i] = sign(gen) ? large(gen) : -large(gen);
    } else {
      z[i] = small(gen);
    }
  }
  return z;
}

inline std::shared_ptr<HardInstanceProblem> make_hard_instance(const HardInstanceParams & params)
{
  return std::make_shared<HardInstanceProblem>(params);
}

}  // namespace f2sa

#endif  // F2SA_PROBLEMS_HARD_INSTANCE_HPP_
