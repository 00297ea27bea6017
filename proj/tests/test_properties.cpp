#include <gtest/gtest.h>

#include <cmath>

#include "maxstop/solver.hpp"
#include "support/checks.hpp"
#include "support/fixtures.hpp"

using namespace maxstop;
using namespace maxstop::fixtures;

namespace {

constexpr std::size_t kCases = 200;
constexpr std::uint64_t kSeed = 20240601;

}  // namespace

TEST(RandomizedInvariants, ValueDominatesConcaveAndConsistent) {
    std::size_t checked = 0;
    for (const auto& c : random_cases(kCases, kSeed)) {
        SCOPED_TRACE(c.label);
        auto m = make_model(c.model);
        auto h = effective_reward(c.reward);
        PropertyReport r;
        ASSERT_NO_THROW(r = check_case(m, h, c.s));
        EXPECT_LE(r.dominance, 1e-9);
        EXPECT_LE(r.stop_mismatch, 1e-12);
        EXPECT_LE(r.concavity, 1e-9);
        EXPECT_LE(r.finv, 1e-12);
        EXPECT_LE(r.ode, 1e-10);
        ++checked;
    }
    EXPECT_GE(checked, 100u);
}

TEST(RandomizedInvariants, DiagonalValueAtLeastImmediatePayoff) {
    for (const auto& c : random_cases(60, kSeed + 1)) {
        SCOPED_TRACE(c.label);
        auto m = make_model(c.model);
        auto h = effective_reward(c.reward);
        auto d = v_diag(m, h, c.s);
        EXPECT_GE(d.v, h(c.s, c.s) * (1.0 - 1e-14) - 1e-300);
        if (d.diag_case == DiagCase::StopNow) {
            EXPECT_EQ(d.v, h(c.s, c.s));
        }
        if (d.diag_case == DiagCase::DeepStop) {
            EXPECT_GT(d.l_star, 0.0);
            EXPECT_LT(d.l_star, c.s - m.lower());
        }
    }
}

// Rewards homogeneous of degree one under GBM scale with the state.
TEST(RandomizedInvariants, HomogeneousRewardsScaleWithTheState) {
    std::mt19937_64 gen(kSeed + 2);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        ModelSpec sp;
        sp.mu = -0.1 + 0.2 * U(gen);
        sp.sigma = 0.1 + 0.4 * U(gen);
        sp.q = std::max(sp.mu, 0.0) + 0.02 + 0.2 * U(gen);
        auto m = make_model(sp);
        auto h = effective_reward(i % 2 ? rewards::russian() : rewards::lookback(0.2 + 0.7 * U(gen)));
        double s = 0.5 + 20.0 * U(gen);
        double lam = 0.2 + 4.0 * U(gen);
        double x = s * (0.3 + 0.7 * U(gen));
        auto [v1, r1] = v_surface(m, h, s, x);
        auto [v2, r2] = v_surface(m, h, lam * s, lam * x);
        EXPECT_NEAR(v2, lam * v1, 1e-7 * lam * v1) << "mu=" << sp.mu << " sigma=" << sp.sigma << " q=" << sp.q;
    }
}
