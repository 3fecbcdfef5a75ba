#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deskml/rng.hpp"
#include "deskml/tensor.hpp"

namespace deskml {

struct KMeansOptions {
    std::size_t max_iter = 100;
    /// Stop once no centroid moves further than this.
    double tol = 0.0;
};

struct KMeansState {
    std::size_t k = 0;
    Tensor centroids;                      // [k x d]
    std::vector<std::size_t> assignments;  // one per point
    std::size_t iterations = 0;
    bool converged = false;
    /// Inertia after each assign + update iteration.
    std::vector<double> inertia_history;
};

/// Index of the nearest centroid per row of points; ties go to the lowest index.
std::vector<std::size_t> nearest_centroids(const Tensor& points, const Tensor& centroids);

/// Lloyd iterations from k distinct points drawn with rng.
KMeansState kmeans_fit(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& opts = {});
/// Lloyd iterations from the given initial centroids [k x d].
KMeansState kmeans_fit(const Tensor& points, const Tensor& initial_centroids, const KMeansOptions& opts = {});

/// Σ ‖point − assigned centroid‖²
double kmeans_inertia(const KMeansState& state, const Tensor& points);

// ---------------------------------------------------------------------------

/// Entries are −1 or +1.
using BipolarState = std::vector<int>;

struct HopfieldNet {
    HopfieldNet() = default;
    /// Validates W symmetric with zero diagonal and b of matching size.
    HopfieldNet(Tensor w, Tensor b);

    std::size_t size() const { return b.numel(); }

    Tensor w;  // [N x N]
    Tensor b;  // [N]
};

/// Hebbian rule: W = (1/P)·Σ ξξᵀ with the diagonal zeroed, b = 0.
HopfieldNet hopfield_store(std::span<const BipolarState> patterns);

/// E(s) = −½ Σ w_ij s_i s_j + Σ b_i s_i
double hopfield_energy(const HopfieldNet& net, const BipolarState& s);

/// One asynchronous sweep visiting units in `order`:
/// s_i ← sign(Σ_j w_ij s_j − b_i), with sign(0) = +1.
BipolarState hopfield_update(const HopfieldNet& net, const BipolarState& s, std::span<const std::size_t> order);

struct HopfieldRecall {
    BipolarState state;
    std::size_t sweeps = 0;
    bool converged = false;
};

/// Ascending-order sweeps until a sweep changes nothing or max_sweeps is hit.
HopfieldRecall hopfield_recall(const HopfieldNet& net, const BipolarState& probe, std::size_t max_sweeps);

BipolarState random_bipolar(std::size_t n, Rng& rng);
/// Copy of s with `count` distinct positions flipped.
BipolarState flip_bits(const BipolarState& s, std::size_t count, Rng& rng);

}  // namespace deskml
