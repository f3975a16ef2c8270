#ifndef F2SA_SEED_HPP_
#define F2SA_SEED_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace f2sa
{

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Which partial gradient an oracle call returns: F_y, G_y, F_x or G_x.
enum class Role : std::uint8_t { UpperY = 0, LowerY = 1, UpperX = 2, LowerX = 3 };

inline bool is_upper(Role r) {return r == Role::UpperY || r == Role::UpperX;}
inline bool is_x_role(Role r) {return r == Role::UpperX || r == Role::LowerX;}

/// SplitMix64; doubles as the key-mixing function and a small URBG.
class SplitMix64
{
public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  static constexpr result_type min() {return 0;}
  static constexpr result_type max() {return std::numeric_limits<result_type>::max();}

  result_type operator()()
  {
    return mix(state_ += 0x9e3779b97f4a7c15ULL);
  }

  static constexpr std::uint64_t mix(std::uint64_t z)
  {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

/// Address of one oracle draw. Identical paths give identical samples.
struct SeedPath
{
  // sentinels for draws that do not belong to a stencil node / inner step
  static constexpr std::int64_t kShared = std::numeric_limits<std::int64_t>::min();
  static constexpr std::int64_t kOuter = -1;

  std::uint64_t run_seed{0};
  std::int64_t outer_t{0};
  std::int64_t stencil_j{kShared};
  std::int64_t inner_k{kOuter};
  Role role{Role::UpperX};
  std::int64_t batch_i{0};

  std::uint64_t key() const
  {
    std::uint64_t h = SplitMix64::mix(run_seed ^ 0x6a09e667f3bcc909ULL);
    auto absorb = [&h](std::uint64_t v) {
      h = SplitMix64::mix(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
    };
    absorb(static_cast<std::uint64_t>(outer_t));
    absorb(static_cast<std::uint64_t>(stencil_j));
    absorb(static_cast<std::uint64_t>(inner_k));
    absorb(static_cast<std::uint64_t>(role));
    absorb(static_cast<std::uint64_t>(batch_i));
    return h;
  }

  SplitMix64 stream() const {return SplitMix64(key());}
};

/// Isotropic Gaussian with total variance sigma^2 (sigma^2/d per coordinate).
inline Vector isotropic_noise(Eigen::Index dim, double sigma, SplitMix64 & rng)
{
  Vector out(dim);
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(dim)));
  for (Eigen::Index i = 0; i < dim; ++i) {out[i] = normal(rng);}
  return out;
}

}  // namespace f2sa

#endif  // F2SA_SEED_HPP_
