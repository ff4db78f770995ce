//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLGRAPH_RNG_H_
#define MOLGRAPH_RNG_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "molgraph/tensor.h"

namespace molgraph {

// mt19937_64 is fully specified by the standard; the conversions below avoid
// the implementation-defined standard distributions so streams are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) { }

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do { x = eng_(); } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }
  std::uint64_t next() { return eng_(); }

  template <typename T>
  void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  Tensor uniform_tensor(Shape shape, double bound) {
    Tensor t(std::move(shape));
    for (auto &x : t.mutable_data()) x = uniform(-bound, bound);
    return t;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace molgraph

#endif  // MOLGRAPH_RNG_H_
