#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace cbm {

// SplitMix64 finalizer. Used to derive independent stream seeds from a master
// seed so that every stage of a run is reproducible in isolation.
inline std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return MixSeed(seed ^ MixSeed(stream));
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return DeriveSeed(seed, h);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::size_t Index(std::size_t n) {
    return static_cast<std::size_t>(Uniform() * static_cast<double>(n));
  }

  // Draws an index proportionally to non-negative weights.
  std::size_t Categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double target = Uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      target -= weights[i];
      if (target < 0.0) return i;
    }
    // Rounding can leave a sliver of mass; fall back to the last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
      if (weights[i] > 0.0) return i;
    }
    return weights.size() - 1;
  }

  double Gamma(double shape) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

  std::vector<double> Dirichlet(std::size_t dim, double concentration) {
    std::vector<double> out(dim);
    double total = 0.0;
    for (auto& x : out) {
      x = Gamma(concentration);
      total += x;
    }
    if (total <= 0.0) {
      // Tiny concentrations can underflow every draw; put the mass on one atom.
      out[Index(dim)] = 1.0;
      return out;
    }
    for (auto& x : out) x /= total;
    return out;
  }

  int Poisson(double mean) {
    std::poisson_distribution<int> dist(mean);
    return dist(engine_);
  }

  double Normal() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
  }

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = Index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cbm
