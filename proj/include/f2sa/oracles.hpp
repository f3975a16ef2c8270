#ifndef F2SA_ORACLES_HPP_
#define F2SA_ORACLES_HPP_

#include <cstdint>

#include "f2sa/problem.hpp"
#include "f2sa/seed.hpp"

namespace f2sa
{

/// Ledger of stochastic first-order oracle calls. One call is one partial
/// gradient of f (upper) or g (lower).
struct OracleCounter
{
  std::uint64_t upper_calls{0};
  std::uint64_t lower_calls{0};

  std::uint64_t total() const {return upper_calls + lower_calls;}

  void record(Role role)
  {
    if (is_upper(role)) {
      ++upper_calls;
    } else {
      ++lower_calls;
    }
  }

  // per-worker shards merge by addition
  OracleCounter & operator+=(const OracleCounter & other)
  {
    upper_calls += other.upper_calls;
    lower_calls += other.lower_calls;
    return *this;
  }

  friend OracleCounter operator-(const OracleCounter & a, const OracleCounter & b)
  {
    return {a.upper_calls - b.upper_calls, a.lower_calls - b.lower_calls};
  }

  friend bool operator==(const OracleCounter &, const OracleCounter &) = default;
};

/**
 * Draws one stochastic partial gradient at (x, y) and books it in `counter`.
 * The result is a deterministic function of (problem, x, y, role, path).
 */
inline Vector sample_gradient(
  const BilevelProblem & problem, const Vector & x, const Vector & y, Role role,
  const SeedPath & path, OracleCounter & counter)
{
  if (x.size() != problem.dim_x() || y.size() != problem.dim_y()) {
    throw Error(ErrorCode::DimensionMismatch, "point does not match problem dimensions");
  }
  SeedPath p = path;
  p.role = role;
  counter.record(role);
  return problem.stochastic_gradient(role, x, y, p);
}

}  // namespace f2sa

#endif  // F2SA_ORACLES_HPP_
