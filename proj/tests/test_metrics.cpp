// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "quakecast/metrics.hpp"

using namespace quakecast;
using V = std::vector<double>;

TEST(Metrics, HandValues) {
    EXPECT_NEAR(rmse(V{1, 2, 3}, V{1, 2, 4}), std::sqrt(1.0 / 3.0), 1e-12);
    EXPECT_EQ(mae(V{0, 0}, V{1, 3}), 2.0);
    EXPECT_EQ(rmse(V{1, 5}, V{1, 5}), 0.0);
    EXPECT_EQ(mae(V{1, 5}, V{1, 5}), 0.0);
    EXPECT_EQ(r_squared(V{1, 2, 4}, V{1, 2, 4}), 1.0);
    EXPECT_NEAR(r_squared(V{1, 2, 6}, V{3, 3, 3}), 0.0, 1e-15);
    EXPECT_LT(r_squared(V{1, 2, 3}, V{3, 2, 1}), 0.0);
}

TEST(Metrics, Errors) {
    EXPECT_THROW(rmse(V{1}, V{1, 2}), DomainError);
    EXPECT_THROW(mae(V{}, V{}), DomainError);
    EXPECT_THROW(r_squared(V{1}, V{1}), DomainError);
    EXPECT_THROW(r_squared(V{2, 2, 2}, V{1, 2, 3}), DomainError);
    const auto r = evaluate(V{2, 2}, V{1, 2});
    EXPECT_TRUE(std::isnan(r.r2));
    EXPECT_EQ(r.n, 2u);
}

TEST(Metrics, RmseDominatesMaeAndPermutationInvariance) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 2 + trial % 20;
        V y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = u(rng);
            p[i] = u(rng);
        }
        const auto a = evaluate(y, p);
        ASSERT_GE(a.rmse, a.mae);
        ASSERT_LE(a.r2, 1.0);
        if (trial % 50 == 0) {
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            V ys(n), ps(n);
            for (std::size_t i = 0; i < n; ++i) {
                ys[i] = y[idx[i]];
                ps[i] = p[idx[i]];
            }
            const auto b = evaluate(ys, ps);
            EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
            EXPECT_NEAR(a.mae, b.mae, 1e-12);
            EXPECT_NEAR(a.r2, b.r2, 1e-12);
        }
    }
}
