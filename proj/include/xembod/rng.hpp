#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace xembod {

// Deterministic random stream. Wraps splitmix64/xoshiro-style state with
// hand-rolled uniform and normal draws so trajectories are bit-identical
// across standard library versions. Streams are cheap; derive one per
// (seed, stream id) pair instead of sharing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    // splitmix64 twice to decorrelate nearby seeds/streams
    state_ = mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    state_ = mix(state_ + 0xbf58476d1ce4e5b9ULL);
    if (state_ == 0) state_ = 0x2545f4914f6cdd1dULL;
  }

  std::uint64_t next_u64() {
    // xorshift64*
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // standard normal, Box-Muller with cached second value
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    cached_ = r * std::sin(th);
    has_cached_ = true;
    return r * std::cos(th);
  }

  Eigen::VectorXd normal_vector(int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }

  template <typename It>
  void shuffle(It begin, It end) {
    const auto n = static_cast<std::int64_t>(end - begin);
    for (std::int64_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::int64_t>(next_u64() %
                                               static_cast<std::uint64_t>(i + 1));
      std::swap(*(begin + i), *(begin + j));
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace xembod
