#include <gtest/gtest.h>

#include <cmath>

#include "maxstop/reward.hpp"
#include "support/fixtures.hpp"

using namespace maxstop;
using namespace maxstop::fixtures;

TEST(EffectiveReward, ExampleFamilies) {
    auto ps = power_sum_reward();
    EXPECT_DOUBLE_EQ(ps(4.0, 9.0), 3.0 + 2.0 - 5.0);
    auto lb = lookback_reward();
    EXPECT_DOUBLE_EQ(lb(2.0, 7.0), 6.0);
    auto put = put_reward();
    EXPECT_DOUBLE_EQ(put(3.0, 100.0), 2.0);
    EXPECT_DOUBLE_EQ(put(6.0, 100.0), 0.0);
    auto ru = russian_reward();
    EXPECT_DOUBLE_EQ(ru(0.3, 1.7), 1.7);
}

TEST(EffectiveReward, ConstantIncomeSubtractsItsPotential) {
    const double q = 0.15, c = 0.3;
    RewardSpec r = rewards::lookback(0.5);
    r.f = [=](double, double) { return c; };
    r.fbar = [=](double, double) { return c / q; };
    auto h = effective_reward(r);
    EXPECT_NEAR(h(2.0, 7.0), 6.0 - c / q, 1e-15);
    EXPECT_NEAR(h.dx(2.0, 7.0), -0.5, 1e-6);  // falls back to finite differences
}

TEST(EffectiveReward, IncomeWithoutPotentialIsRejected) {
    RewardSpec r = rewards::russian();
    r.f = [](double, double) { return 1.0; };
    EXPECT_THROW(effective_reward(r), RewardError);
    RewardSpec empty;
    EXPECT_THROW(effective_reward(empty), RewardError);
}

TEST(EffectiveReward, KinkDerivativeIsRightSided) {
    auto put = put_reward();
    EXPECT_TRUE(put.is_kink(5.0));
    EXPECT_FALSE(put.is_kink(4.9));
    RewardSpec r = rewards::put(5.0);
    r.dg_dx = nullptr;
    auto h = effective_reward(r);
    EXPECT_NEAR(h.dx(5.0, 5.0), 0.0, 1e-12);
    EXPECT_NEAR(h.dx(4.0, 5.0), -1.0, 1e-8);
}

TEST(TransformedReward, MatchesDefinition) {
    auto m = reference_gbm();
    auto h = put_reward();
    auto H = transform(m, h, 5.0);
    const double delta = oracle::gamma1 - oracle::gamma0;
    for (double x : {0.1, 1.0, 3.0, 4.99, 7.0}) {
        double y = std::pow(x, delta);
        double expect = std::max(5.0 - x, 0.0) * std::pow(x, -oracle::gamma0);
        EXPECT_NEAR(H.H(y), expect, 1e-12 * (1.0 + expect)) << x;
    }
}

TEST(TransformedReward, PhiIsMappedToOne) {
    auto m = reference_gbm();
    RewardSpec r;
    r.g = [&](double x, double) { return m.phi(x); };
    r.dg_dx = [&](double x, double) { return m.dphi(x); };
    auto h = effective_reward(r);
    auto H = transform(m, h, 2.0);
    for (double y : {1e-6, 0.01, 1.0, 42.0, 1e8}) {
        EXPECT_NEAR(H.H(y), 1.0, 1e-12);
        EXPECT_NEAR(H.Hprime(y), 0.0, 1e-12);
    }
}

TEST(TransformedReward, PsiHasUnitSlope) {
    auto m = reference_gbm();
    RewardSpec r;
    r.g = [&](double x, double) { return m.psi(x); };
    r.dg_dx = [&](double x, double) { return m.dpsi(x); };
    auto h = effective_reward(r);
    auto H = transform(m, h, 2.0);
    for (double x : {0.2, 1.0, 6.0}) {
        EXPECT_NEAR(H.slope(x), 1.0, 1e-12);
        EXPECT_NEAR(H.H(m.F(x)), m.F(x), 1e-12 * m.F(x));
    }
}

TEST(TransformedReward, ReconstructsRewardOnDenseGrid) {
    auto m = reference_gbm();
    auto h = power_sum_reward();
    const double s = 12.0;
    auto H = transform(m, h, s);
    for (int i = 0; i < 1000; ++i) {
        double x = 0.01 + (s - 0.01) * i / 999.0;
        double back = m.phi(x) * H.H(m.F(x));
        EXPECT_LE(std::abs(back - h(x, s)), 1e-10 * (1.0 + std::abs(h(x, s)))) << x;
    }
}

TEST(TransformedReward, DerivativeMatchesFiniteDifference) {
    auto m = drifted_bm();
    auto h = lookback_reward();
    auto H = transform(m, h, 1.0);
    for (double x : {-3.0, -1.0, 0.0, 0.9}) {
        double y = m.F(x);
        double e = 1e-6 * y;
        double fd = (H.H(y + e) - H.H(y - e)) / (2.0 * e);
        EXPECT_NEAR(H.Hprime(y), fd, 1e-6 * (1.0 + std::abs(fd))) << x;
    }
}

TEST(TransformedReward, RejectsOutOfRangeInputs) {
    auto m = reference_gbm();
    auto h = put_reward();
    EXPECT_THROW(transform(m, h, -1.0), DomainError);
    auto H = transform(m, h, 5.0);
    EXPECT_THROW(H.H(0.0), DomainError);
    EXPECT_THROW(H.H(-2.0), DomainError);
}

TEST(TransformedReward, MonotoneInLevel) {
    auto m = reference_gbm();
    auto h = power_sum_reward();
    for (double y : {0.01, 0.5, 3.0, 50.0}) {
        double prev = -1e300;
        for (double s : {2.0, 5.0, 10.0, 30.0}) {
            double v = transform(m, h, s).H(y);
            EXPECT_GE(v, prev);
            prev = v;
        }
    }
}

TEST(SlopeAt, VanishesAtPutThreshold) {
    auto m = reference_gbm();
    auto h = put_reward();
    auto H = transform(m, h, 5.0);
    auto r = slope_at(H, oracle::put_x_star);
    EXPECT_NEAR(r.slope, 0.0, 1e-12);
    EXPECT_FALSE(r.one_sided);
    EXPECT_GT(slope_at(H, 3.0).slope, 0.0);
    EXPECT_LT(slope_at(H, 4.0).slope, 0.0);
    EXPECT_TRUE(slope_at(H, 5.0).one_sided);
}

TEST(BoundaryLimits, VanishForPowerSum) {
    auto m = reference_gbm();
    auto h = power_sum_reward();
    for (double s : {5.0, 35.0}) {
        auto b = boundary_limits(m, h, s);
        EXPECT_NEAR(b.xi_l, 0.0, 1e-12);
        EXPECT_NEAR(b.xi_r, 0.0, 1e-12);
        EXPECT_TRUE(b.converged_l);
        EXPECT_TRUE(b.converged_r);
    }
}

TEST(BoundaryLimits, PutHasNoMassAtZero) {
    auto m = reference_gbm();
    auto b = boundary_limits(m, put_reward(), 5.0);
    EXPECT_NEAR(b.xi_l, 0.0, 1e-12);
    EXPECT_NEAR(b.xi_r, 0.0, 1e-12);
}

TEST(BoundaryLimits, PositiveLimitForPhiReward) {
    auto m = reference_gbm();
    RewardSpec r;
    r.g = [&](double x, double) { return 2.0 * m.phi(x) + 1.0; };
    auto b = boundary_limits(m, effective_reward(r), 1.0);
    EXPECT_NEAR(b.xi_l, 2.0, 1e-6);
}

TEST(BoundaryLimits, FastGrowthIsInfinite) {
    auto m = reference_gbm();
    RewardSpec r;
    r.g = [](double x, double) { return x * x * x; };
    EXPECT_THROW(boundary_limits(m, effective_reward(r), 1.0), ValueInfinite);
}
