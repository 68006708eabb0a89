#pragma once

#include <cstdint>
#include <random>

namespace tdglm {

/// Single-owner random number source. One instance per chain or task;
/// never shared across threads. Identical seeds give identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unif_(gen_); }
  double normal() { return norm_(gen_); }

  /// Gamma(shape, rate) draw (rate = inverse scale).
  double gamma(double shape, double rate) {
    std::gamma_distribution<double> d(shape, 1.0 / rate);
    return d(gen_);
  }

  double beta(double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(gen_);
    const double y = gb(gen_);
    return x / (x + y);
  }

  long poisson(double lambda) {
    std::poisson_distribution<long> d(lambda);
    return d(gen_);
  }

  std::uint64_t raw() { return gen_(); }

  /// Derive a decorrelated stream seed from a master seed and a stream
  /// index (splitmix64 finalizer).
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace tdglm
