#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pfm/tensor.hpp"

namespace pfm {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic random source. Uniform/normal variates are derived from raw
// mt19937_64 words by fixed arithmetic (not std::*_distribution, whose output
// is implementation-defined), so streams are reproducible everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

  uint64_t seed() const { return seed_; }

  uint64_t bits() { return eng_(); }

  // [0, 1)
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller, second variate cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // unbiased integer in [0, n)
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= lim);
    return x % n;
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = int(below(uint64_t(i) + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

  void fill_normal(Tensor& t, double sigma = 1.0) {
    for (double& x : t.data) x = sigma * normal();
  }
  void fill_uniform(Tensor& t, double lo, double hi) {
    for (double& x : t.data) x = uniform(lo, hi);
  }

  // independent stream derived from this rng's seed and an index
  Rng substream(uint64_t idx) const { return Rng(splitmix64(splitmix64(seed_) ^ (idx + 1))); }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pfm
