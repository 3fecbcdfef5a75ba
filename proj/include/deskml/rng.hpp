#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deskml/tensor.hpp"

namespace deskml {

/// Seeded, splittable pseudo-random generator.
///
/// State advances by the SplitMix64 increment (0x9E3779B97F4A7C15) and each
/// output is the SplitMix64 finaliser of the state. split() derives an
/// independent child stream by seeding it from the parent's next output
/// mixed with a second constant. Uniform doubles take the top 53 bits;
/// normals use the Box-Muller transform. All arithmetic is integer or
/// IEEE double, so a seed reproduces the same stream on any build.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n).
    std::size_t below(std::size_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    Rng split();

    Tensor normal_tensor(const Shape& shape, double stddev = 1.0);
    Tensor uniform_tensor(const Shape& shape, double lo, double hi);
    /// k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
    /// Index drawn from an unnormalised non-negative weight vector.
    std::size_t categorical(const std::vector<double>& weights);

  private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace deskml
