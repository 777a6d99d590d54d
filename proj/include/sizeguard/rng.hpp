#ifndef SIZEGUARD_RNG_HPP
#define SIZEGUARD_RNG_HPP

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace sizeguard {

// Counter-based pseudorandom numbers.
//
// Every variate is a pure function of (key, counter), so draws can be
// produced in any order, from any thread, with identical results.  Streams
// are keyed by (seed, stage, search index); within a stream the counter
// enumerates (replication index, coordinate).  Monte-Carlo results are
// therefore bitwise reproducible for a fixed seed no matter how the work is
// scheduled.

namespace rng_detail {

// SplitMix64 output function: a bijective 64-bit finalizer with full
// avalanche, evaluated in counter mode.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double to_unit_interval(std::uint64_t bits) {
  // (0,1): 53 mantissa bits, offset by half an ulp so 0 cannot occur.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace rng_detail

// Stream identity for one (stage, search) unit of work.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stage,
                                std::uint64_t search) {
  std::uint64_t h = rng_detail::mix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = rng_detail::mix64(h ^ (0xbb67ae8584caa73bULL + stage));
  h = rng_detail::mix64(h ^ (0x3c6ef372fe94f82bULL + search));
  return h;
}

inline std::uint64_t random_bits(std::uint64_t key, std::uint64_t counter) {
  return rng_detail::mix64(key + 0x9e3779b97f4a7c15ULL * counter);
}

inline double random_u01(std::uint64_t key, std::uint64_t counter) {
  return rng_detail::to_unit_interval(random_bits(key, counter));
}

// Sequential view of a keyed stream; owns its counter.  Convenient for
// consumers that draw a data-dependent number of variates.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : key_(key), counter_(0) {}

  double u01() { return random_u01(key_, counter_++); }

  // Marsaglia polar method would branch unpredictably; Box-Muller keeps a
  // fixed consumption of two uniforms per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = u01();
    const double u2 = u01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Gamma(shape) for positive integer shape, as a sum of exponentials.
  double gamma_integer(int shape) {
    double product = 1.0;
    for (int i = 0; i < shape; ++i) product *= u01();
    return -std::log(product);
  }

  // Beta(a, b) for positive integer parameters.
  double beta_integer(int a, int b) {
    const double x = gamma_integer(a);
    const double y = gamma_integer(b);
    return x / (x + y);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// N×n matrix of i.i.d. standard normals; row i is replication i and is a
// pure function of (key, i), independent of how rows are filled.
inline void fill_normal_panel(std::uint64_t key, Eigen::MatrixXd& panel) {
  const Eigen::Index N = panel.rows();
  const Eigen::Index n = panel.cols();
  const std::uint64_t stride = static_cast<std::uint64_t>(n + (n & 1));
  for (Eigen::Index i = 0; i < N; ++i) {
    const std::uint64_t base = static_cast<std::uint64_t>(i) * stride;
    for (Eigen::Index j = 0; j < n; j += 2) {
      const double u1 = random_u01(key, base + static_cast<std::uint64_t>(j));
      const double u2 =
          random_u01(key, base + static_cast<std::uint64_t>(j) + 1);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 6.283185307179586476925286766559 * u2;
      panel(i, j) = radius * std::cos(angle);
      if (j + 1 < n) panel(i, j + 1) = radius * std::sin(angle);
    }
  }
}

}  // namespace sizeguard

#endif
