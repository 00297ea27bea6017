#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "maxstop/numerics.hpp"

using namespace maxstop::numerics;

TEST(FindRoot, CubeRootOfTwo) {
    double r = find_root([](double x) { return x * x * x - 2.0; }, 0.0, 2.0);
    EXPECT_NEAR(r, std::cbrt(2.0), 1e-12);
}

TEST(FindRoot, NoSignChangeGivesNaN) {
    EXPECT_TRUE(std::isnan(find_root([](double x) { return x * x + 1.0; }, -1.0, 1.0)));
}

TEST(FindRoot, EndpointRoot) {
    EXPECT_EQ(find_root([](double x) { return x - 1.0; }, 1.0, 3.0), 1.0);
}

TEST(Maximize, Parabola) {
    auto [x, f] = maximize([](double t) { return -(t - 0.3) * (t - 0.3) + 2.0; }, -1.0, 1.0);
    EXPECT_NEAR(x, 0.3, 1e-7);
    EXPECT_NEAR(f, 2.0, 1e-14);
}

TEST(AdaptiveSimpson, SineOverHalfPeriod) {
    EXPECT_NEAR(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi, 1e-12), 2.0, 1e-11);
}

TEST(AdaptiveSimpson, SharpPeak) {
    auto f = [](double x) { return 1.0 / (1e-4 + x * x); };
    double exact = 2.0 / std::sqrt(1e-4) * std::atan(1.0 / std::sqrt(1e-4));
    EXPECT_NEAR(adaptive_simpson(f, -1.0, 1.0, 1e-10) / exact, 1.0, 1e-8);
}

TEST(PairwiseSum, ExactOnRepresentableValues) {
    std::vector<double> v(1000, 0.125);
    EXPECT_EQ(pairwise_sum(v), 125.0);
}

TEST(PairwiseSum, BetterThanNaiveOnSmallIncrements) {
    std::vector<double> v(1 << 20, 0.1);
    double naive = 0.0;
    for (double x : v) naive += x;
    double exact = 0.1 * (1 << 20);
    EXPECT_LE(std::abs(pairwise_sum(v) - exact), std::abs(naive - exact));
    EXPECT_NEAR(pairwise_sum(v), exact, 1e-8);
}

TEST(ClusteredGrid, EndpointsAndOrder) {
    auto g = clustered_grid(0.0, 2.0, 256, 1e-9);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g.back(), 2.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
    EXPECT_LT(g[1], 1e-8);
    EXPECT_GT(g[g.size() - 2], 2.0 - 1e-8);
}

TEST(TwoSidedUnitGrid, CoversBothEnds) {
    auto t = two_sided_unit_grid(6, 4, 6);
    EXPECT_NEAR(t.front(), 1e-6, 1e-18);
    EXPECT_EQ(t.back(), 1.0);
    EXPECT_GT(t[t.size() - 2], 1.0 - 1e-5);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsWorkerException) {
    EXPECT_THROW(parallel_for(100, 3,
                              [](std::size_t i) {
                                  if (i == 57) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}
