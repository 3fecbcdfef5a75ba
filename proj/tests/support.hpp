#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include <gtest/gtest.h>

#include "deskml/gradcheck.hpp"
#include "deskml/rng.hpp"
#include "deskml/tensor.hpp"

namespace deskml {

inline void PrintTo(const Tensor& t, std::ostream* os) { *os << t.to_string(); }

}  // namespace deskml

namespace deskml::testing {

inline void expect_tensor_near(const Tensor& actual, const Tensor& expected, double tol) {
    ASSERT_EQ(actual.shape(), expected.shape());
    for (std::size_t i = 0; i < actual.numel(); ++i) {
        EXPECT_NEAR(actual[i], expected[i], tol) << "at flat index " << i;
    }
}

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -2.0, double hi = 2.0) {
    return rng.uniform_tensor(shape, lo, hi);
}

/// Runs grad_check on `instances` random points drawn from `shapes`.
inline void expect_gradients(const ScalarFn& f, const std::vector<Shape>& shapes, std::uint64_t seed,
                             int instances = 5, double lo = -2.0, double hi = 2.0) {
    Rng rng(seed);
    for (int n = 0; n < instances; ++n) {
        std::vector<Tensor> point;
        for (const Shape& s : shapes) {
            point.push_back(rng.uniform_tensor(s, lo, hi));
        }
        const GradCheckReport r = grad_check(f, point);
        EXPECT_TRUE(r.passed()) << "instance " << n << " max rel diff " << r.max_rel_diff;
    }
}

}  // namespace deskml::testing
