#ifndef F2SA_TESTS_SUPPORT_HPP_
#define F2SA_TESTS_SUPPORT_HPP_

#include <gtest/gtest.h>

#include <memory>

#include "f2sa/f2sa.hpp"

namespace f2sa::testing
{

template<typename F>
ErrorCode code_of(F && f)
{
  try {
    f();
  } catch (const Error & e) {
    return e.code();
  }
  ADD_FAILURE() << "no f2sa::Error thrown";
  return ErrorCode::InvalidArgument;
}

inline Vector vec(std::initializer_list<double> v)
{
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) {out[i++] = x;}
  return out;
}

// Small hand-written instances whose reference values were computed
// separately with mpmath (40 digits).

inline std::shared_ptr<TanhCouplingProblem> small_tanh(double sigma = 0.0)
{
  TanhCouplingData d;
  d.b.resize(2, 2);
  d.b << 0.6, -0.8, 0.3, 0.4;
  d.c = vec({0.5, -1.0});
  return std::make_shared<TanhCouplingProblem>(d, 2.0, sigma);
}

inline std::shared_ptr<LinearCouplingProblem> small_linear(double sigma = 0.0)
{
  LinearCouplingData d;
  d.a.resize(3, 2);
  d.a << 1.0, 0.5, -0.5, 0.2, 0.3, 0.3;
  d.b = vec({0.2, -0.1, 0.4});
  d.y0 = vec({0.1, 0.0, -0.2});
  return std::make_shared<LinearCouplingProblem>(d, 1.5, sigma);
}

inline std::shared_ptr<Learn2RegProblem> small_learn2reg(double sigma = 0.0)
{
  LogisticData tr, val;
  tr.features.resize(4, 2);
  tr.features << 1.0, 0.5, -0.3, 1.2, 0.8, -0.7, -1.1, -0.4;
  tr.labels = vec({1, -1, 1, -1});
  val.features.resize(3, 2);
  val.features << 0.4, 0.9, -0.6, 0.2, 1.3, -0.5;
  val.labels = vec({1, 1, -1});
  return std::make_shared<Learn2RegProblem>(tr, val, sigma);
}

}  // namespace f2sa::testing

#endif  // F2SA_TESTS_SUPPORT_HPP_
