#include "deskml/classic.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "deskml/errors.hpp"

namespace deskml {

namespace {

double sq_dist(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j, std::size_t d) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        const double diff = a[i * d + c] - b[j * d + c];
        s += diff * diff;
    }
    return s;
}

void require_points(const Tensor& points) {
    if (points.rank() != 2) {
        throw DimensionError("points must be [n x d], got " + shape_str(points.shape()));
    }
}

double inertia_of(const Tensor& points, const Tensor& centroids, const std::vector<std::size_t>& assign) {
    const std::size_t d = points.dim(1);
    double total = 0.0;
    for (std::size_t i = 0; i < assign.size(); ++i) {
        total += sq_dist(points, i, centroids, assign[i], d);
    }
    return total;
}

void require_bipolar(const BipolarState& s, std::size_t n) {
    if (s.size() != n) {
        throw DimensionError(fmt::format("state has {} units, network has {}", s.size(), n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] != 1 && s[i] != -1) {
            throw DomainError(fmt::format("state entry {} is {}, expected -1 or +1", i, s[i]));
        }
    }
}

}  // namespace

std::vector<std::size_t> nearest_centroids(const Tensor& points, const Tensor& centroids) {
    require_points(points);
    const std::size_t n = points.dim(0);
    const std::size_t d = points.dim(1);
    const std::size_t k = centroids.dim(0);
    std::vector<std::size_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = sq_dist(points, i, centroids, 0, d);
        for (std::size_t j = 1; j < k; ++j) {
            const double dist = sq_dist(points, i, centroids, j, d);
            if (dist < best) {
                best = dist;
                out[i] = j;
            }
        }
    }
    return out;
}

KMeansState kmeans_fit(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& opts) {
    require_points(points);
    const std::size_t n = points.dim(0);
    if (k == 0 || n < k) {
        throw DomainError(fmt::format("k-means needs 1 <= k <= n, got k={} n={}", k, n));
    }
    const std::size_t d = points.dim(1);
    Tensor init(Shape{k, d});
    const std::vector<std::size_t> picks = rng.sample_without_replacement(n, k);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
            init[j * d + c] = points[picks[j] * d + c];
        }
    }
    return kmeans_fit(points, init, opts);
}

KMeansState kmeans_fit(const Tensor& points, const Tensor& initial, const KMeansOptions& opts) {
    require_points(points);
    const std::size_t n = points.dim(0);
    const std::size_t d = points.dim(1);
    if (initial.rank() != 2 || initial.dim(1) != d) {
        throw DimensionError(fmt::format("centroids {} do not match points {}", shape_str(initial.shape()),
                                         shape_str(points.shape())));
    }
    const std::size_t k = initial.dim(0);
    if (n < k) {
        throw DomainError(fmt::format("k-means needs k <= n, got k={} n={}", k, n));
    }
    if (opts.max_iter == 0) {
        throw DomainError("max_iter must be positive");
    }

    KMeansState st;
    st.k = k;
    st.centroids = initial;
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        std::vector<std::size_t> assign = nearest_centroids(points, st.centroids);
        const bool stable = it > 1 && assign == st.assignments;
        st.assignments = std::move(assign);

        Tensor sums(Shape{k, d}, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = st.assignments[i];
            ++counts[j];
            for (std::size_t c = 0; c < d; ++c) {
                sums[j * d + c] += points[i * d + c];
            }
        }
        Tensor next = st.centroids;
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                continue;
            }
            for (std::size_t c = 0; c < d; ++c) {
                next[j * d + c] = sums[j * d + c] / static_cast<double>(counts[j]);
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] != 0) {
                continue;
            }
            // Re-seed with the point farthest from its own centroid.
            std::size_t far = 0;
            double far_dist = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[st.assignments[i]] < 2) {
                    continue;
                }
                const double dist = sq_dist(points, i, next, st.assignments[i], d);
                if (dist > far_dist) {
                    far_dist = dist;
                    far = i;
                }
            }
            if (far_dist <= 0.0) {
                continue;
            }
            const std::size_t from = st.assignments[far];
            --counts[from];
            counts[j] = 1;
            st.assignments[far] = j;
            for (std::size_t c = 0; c < d; ++c) {
                next[j * d + c] = points[far * d + c];
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (st.assignments[i] == from) {
                        s += points[i * d + c];
                    }
                }
                next[from * d + c] = s / static_cast<double>(counts[from]);
            }
        }

        double shift = 0.0;
        for (std::size_t i = 0; i < next.numel(); ++i) {
            shift = std::max(shift, std::abs(next[i] - st.centroids[i]));
        }
        st.centroids = std::move(next);
        st.iterations = it;
        st.inertia_history.push_back(inertia_of(points, st.centroids, st.assignments));
        if (stable || shift <= opts.tol) {
            st.converged = true;
            break;
        }
    }
    return st;
}

double kmeans_inertia(const KMeansState& state, const Tensor& points) {
    require_points(points);
    if (state.assignments.size() != points.dim(0)) {
        throw DimensionError(
            fmt::format("state has {} assignments for {} points", state.assignments.size(), points.dim(0)));
    }
    return inertia_of(points, state.centroids, state.assignments);
}

// ---------------------------------------------------------------------------

HopfieldNet::HopfieldNet(Tensor weights, Tensor bias) : w(std::move(weights)), b(std::move(bias)) {
    const std::size_t n = b.numel();
    if (b.rank() != 1 || w.shape() != Shape{n, n}) {
        throw DimensionError(
            fmt::format("Hopfield weights {} and bias {} disagree", shape_str(w.shape()), shape_str(b.shape())));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (w[i * n + i] != 0.0) {
            throw DomainError(fmt::format("Hopfield weight diagonal must be zero (w[{0}][{0}] = {1})", i, w[i * n + i]));
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (w[i * n + j] != w[j * n + i]) {
                throw DomainError(fmt::format("Hopfield weights are not symmetric at ({}, {})", i, j));
            }
        }
    }
}

HopfieldNet hopfield_store(std::span<const BipolarState> patterns) {
    if (patterns.empty()) {
        throw DomainError("no patterns to store");
    }
    const std::size_t n = patterns.front().size();
    if (n == 0) {
        throw DomainError("patterns must be non-empty");
    }
    for (const BipolarState& p : patterns) {
        require_bipolar(p, n);
    }
    Tensor w(Shape{n, n}, 0.0);
    const double scale = 1.0 / static_cast<double>(patterns.size());
    for (const BipolarState& p : patterns) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) {
                    w[i * n + j] += scale * p[i] * p[j];
                }
            }
        }
    }
    return HopfieldNet(std::move(w), Tensor(Shape{n}, 0.0));
}

double hopfield_energy(const HopfieldNet& net, const BipolarState& s) {
    const std::size_t n = net.size();
    require_bipolar(s, n);
    double quad = 0.0;
    double lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            quad += net.w[i * n + j] * s[i] * s[j];
        }
        lin += net.b[i] * s[i];
    }
    return -0.5 * quad + lin;
}

BipolarState hopfield_update(const HopfieldNet& net, const BipolarState& s, std::span<const std::size_t> order) {
    const std::size_t n = net.size();
    require_bipolar(s, n);
    std::vector<bool> seen(n, false);
    for (std::size_t i : order) {
        if (i >= n) {
            throw DomainError(fmt::format("update order index {} out of range [0,{})", i, n));
        }
        seen[i] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen[i]) {
            throw DomainError(fmt::format("update order never visits unit {}", i));
        }
    }
    BipolarState out = s;
    for (std::size_t i : order) {
        double h = -net.b[i];
        for (std::size_t j = 0; j < n; ++j) {
            h += net.w[i * n + j] * out[j];
        }
        out[i] = h >= 0.0 ? 1 : -1;
    }
    return out;
}

HopfieldRecall hopfield_recall(const HopfieldNet& net, const BipolarState& probe, std::size_t max_sweeps) {
    std::vector<std::size_t> order(net.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    HopfieldRecall r;
    r.state = probe;
    require_bipolar(probe, net.size());
    while (r.sweeps < max_sweeps) {
        BipolarState next = hopfield_update(net, r.state, order);
        ++r.sweeps;
        if (next == r.state) {
            r.converged = true;
            break;
        }
        r.state = std::move(next);
    }
    return r;
}

BipolarState random_bipolar(std::size_t n, Rng& rng) {
    BipolarState s(n);
    for (int& v : s) {
        v = rng.bernoulli(0.5) ? 1 : -1;
    }
    return s;
}

BipolarState flip_bits(const BipolarState& s, std::size_t count, Rng& rng) {
    if (count > s.size()) {
        throw DomainError(fmt::format("cannot flip {} of {} bits", count, s.size()));
    }
    BipolarState out = s;
    for (std::size_t i : rng.sample_without_replacement(s.size(), count)) {
        out[i] = -out[i];
    }
    return out;
}

}  // namespace deskml
