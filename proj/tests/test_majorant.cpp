#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "maxstop/majorant.hpp"
#include "maxstop/reward.hpp"
#include "maxstop/solver.hpp"
#include "support/fixtures.hpp"

using namespace maxstop;
using namespace maxstop::fixtures;

namespace {

std::vector<Point> sample(double lo, double hi, int n, double (*f)(double)) {
    std::vector<Point> p;
    for (int i = 0; i < n; ++i) {
        double y = lo + (hi - lo) * i / (n - 1);
        p.push_back({y, f(y)});
    }
    return p;
}

struct SqrtCurve {
    double value(double y) const { return std::sqrt(y); }
    double derivative(double y) const { return 0.5 / std::sqrt(y); }
};

struct LineCurve {
    double value(double y) const { return 2.0 * y + 1.0; }
    double derivative(double) const { return 2.0; }
};

}  // namespace

TEST(Envelope, ConcaveInputTouchesEverywhere) {
    auto pts = sample(0.0, 4.0, 200, [](double y) { return std::sqrt(y); });
    auto env = upper_concave_envelope(pts, {});
    for (char c : env.contact()) EXPECT_TRUE(c);
    for (const auto& p : pts) EXPECT_NEAR(env(p.y), p.w, 1e-14);
}

TEST(Envelope, ConvexInputBecomesChord) {
    auto pts = sample(0.0, 2.0, 101, [](double y) { return y * y; });
    auto env = upper_concave_envelope(pts, {});
    ASSERT_EQ(env.knots().size(), 2u);
    EXPECT_NEAR(env(1.0), 2.0, 1e-14);
    auto iv = env.contact_intervals();
    ASSERT_EQ(iv.size(), 2u);
    EXPECT_EQ(iv.front().first, 0.0);
    EXPECT_EQ(iv.back().second, 2.0);
}

TEST(Envelope, PinsRestrictDomainAndRaiseValues) {
    auto pts = sample(0.0, 3.0, 301, [](double y) { return std::min(y, 1.0); });
    auto env = upper_concave_envelope(pts, {{0.0, 0.0}, {2.0, 1.0}});
    EXPECT_EQ(env.y_max(), 2.0);
    EXPECT_NEAR(env(0.5), 0.5, 1e-14);
    EXPECT_NEAR(env(1.5), 1.0, 1e-14);
    EXPECT_THROW(env(2.5), DomainError);

    auto raised = upper_concave_envelope(pts, {{0.0, 0.5}, {2.0, 1.0}});
    EXPECT_NEAR(raised(0.0), 0.5, 1e-14);
    EXPECT_NEAR(raised(1.0), 1.0, 1e-14);
    EXPECT_FALSE(raised.contact().front());
}

TEST(Envelope, PinBelowSampleIsInconsistent) {
    auto pts = sample(0.0, 2.0, 21, [](double y) { return y; });
    EXPECT_THROW(upper_concave_envelope(pts, {{0.0, 0.0}, {1.0, 0.5}}), InconsistentPin);
}

TEST(Envelope, RejectsBadSamples) {
    EXPECT_THROW(upper_concave_envelope({}, {}), DomainError);
    EXPECT_THROW(upper_concave_envelope({{1.0, 0.0}, {1.0, 1.0}}, {}), DomainError);
    EXPECT_THROW(upper_concave_envelope({{0.0, NAN}, {1.0, 1.0}}, {}), DomainError);
}

TEST(Envelope, TailSlopeDropsDominatedVertices) {
    auto pts = sample(0.0, 10.0, 101, [](double y) { return std::sqrt(y); });
    EnvelopeOptions o;
    o.tail_slope = 0.5;
    auto env = upper_concave_envelope(pts, {}, o);
    EXPECT_TRUE(std::isinf(env.y_max()));
    EXPECT_NEAR(env(20.0), env(10.0) + 5.0, 1e-12);
    EXPECT_LE(env.knots().back().y, 1.0 + 1e-12);
}

TEST(Envelope, InvariantUnderPointsBelowIt) {
    auto pts = sample(0.0, 4.0, 41, [](double y) { return std::sin(y) + 0.1 * y; });
    auto base = upper_concave_envelope(pts, {});
    std::vector<Point> more;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        more.push_back(pts[i]);
        double y = 0.5 * (pts[i].y + pts[i + 1].y);
        more.push_back({y, base(y) - 0.3});
    }
    more.push_back(pts.back());
    auto env = upper_concave_envelope(more, {});
    ASSERT_EQ(env.knots().size(), base.knots().size());
    for (std::size_t i = 0; i < env.knots().size(); ++i) {
        EXPECT_EQ(env.knots()[i].y, base.knots()[i].y);
        EXPECT_EQ(env.knots()[i].w, base.knots()[i].w);
    }
}

TEST(Envelope, ConvergesUnderRefinement) {
    auto f = [](double y) { return std::sin(y) + 0.1 * y; };
    double prev_err = 1e300;
    for (int n : {21, 81, 321, 1281}) {
        std::vector<Point> p;
        for (int i = 0; i < n; ++i) {
            double y = 4.0 * i / (n - 1);
            p.push_back({y, f(y)});
        }
        auto env = upper_concave_envelope(p, {});
        // Exact majorant: sin(y) + 0.1 y is concave on [0, pi], then the tangent from
        // the right end at y = 4.
        double err = std::abs(env(1.0) - f(1.0));
        EXPECT_LE(err, prev_err + 1e-15);
        prev_err = err;
    }
    EXPECT_LT(prev_err, 1e-12);
}

TEST(Envelope, PutEnvelopeHasFlatSegment) {
    auto m = reference_gbm();
    auto h = put_reward();
    TransformedReward H(m, h, 5.0);
    std::vector<Point> pts;
    for (int i = 0; i < 2000; ++i) {
        double x = 0.5 * std::pow(40.0, i / 1999.0);
        pts.push_back({m.F(x), H.eta(x)});
    }
    EnvelopeOptions o;
    o.tail_slope = 0.0;
    auto env = upper_concave_envelope(pts, {{0.0, 0.0}}, o);
    double y_star = m.F(oracle::put_x_star);
    double peak = H.eta(oracle::put_x_star);
    EXPECT_NEAR(env(m.F(10.0)), peak, 1e-6 * peak);
    EXPECT_NEAR(env.slope(env.segment(m.F(20.0))), 0.0, 0.0);
    EXPECT_LE(env(0.5 * y_star), peak);
}

TEST(Tangent, AnalyticSquareRoot) {
    auto t = tangent_from_point(SqrtCurve{}, {-1.0, 0.0}, Side::Right, 0.01, 100.0);
    EXPECT_NEAR(t.y, 1.0, 1e-9);
    EXPECT_NEAR(t.slope, 0.5, 1e-9);
    EXPECT_FALSE(t.degenerate);
}

TEST(Tangent, FromPointOnConcaveGraph) {
    // From (4, 2) on the graph the left tangent is at the point itself.
    auto t = try_tangent_from_point(SqrtCurve{}, {4.0, 2.0}, Side::Left, 0.01, 10.0);
    ASSERT_TRUE(t.has_value());
    EXPECT_NEAR(t->y, 4.0, 1e-9);
}

TEST(Tangent, NoTangencyInRange) {
    EXPECT_THROW(tangent_from_point(SqrtCurve{}, {0.0, 5.0}, Side::Right, 0.01, 50.0), NoTangency);
    EXPECT_FALSE(try_tangent_from_point(SqrtCurve{}, {0.0, 5.0}, Side::Left, 0.01, 50.0).has_value());
}

TEST(Tangent, LinearCurveThroughPointIsDegenerate) {
    auto t = tangent_from_point(LineCurve{}, {0.0, 1.0}, Side::Right, 0.0, 3.0);
    EXPECT_TRUE(t.degenerate);
    EXPECT_DOUBLE_EQ(t.slope, 2.0);
}

TEST(Tangent, OriginTangentToPowerSumReward) {
    auto m = reference_gbm();
    auto h = power_sum_reward();
    TransformedReward H(m, h, 20.0);
    auto t = tangent_from_point(H, {0.0, 0.0}, Side::Right, m.F(0.01), m.F(20.0));
    EXPECT_NEAR(m.Finv(t.y), oracle::ps_x_star_20, 1e-8);
}

TEST(Tangent, LookbackContactAtBetaS) {
    // The lookback level problem: the line through (F(s), V(s,s)/phi(s)) touches H_s
    // at F(beta s).
    auto m = reference_gbm();
    auto h = lookback_reward();
    const double s = 5.0;
    TransformedReward H(m, h, s);
    Point p{m.F(s), oracle::lookback_v55 / m.phi(s)};
    auto t = tangent_from_point(H, p, Side::Left, m.F(0.05 * s), m.F(s));
    EXPECT_NEAR(m.Finv(t.y) / s, oracle::lookback_beta, 1e-7);
}
