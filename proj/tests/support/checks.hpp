#pragma once

// Randomized invariant checks shared by the property tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "maxstop/solver.hpp"

namespace maxstop::fixtures {

struct PropertyCase {
    ModelSpec model;
    RewardSpec reward;
    double s = 1.0;
    std::string label;
};

// GBM and drifted BM with q > max(mu, 0) + 0.02, crossed with the put, lookback, Russian and
// power_sum families at random parameters and levels.
inline std::vector<PropertyCase> random_cases(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); };
    std::vector<PropertyCase> out;
    for (std::size_t i = 0; i < n; ++i) {
        PropertyCase c;
        bool gbm = i % 4 != 3;
        c.model.kind = gbm ? ModelKind::GBM : ModelKind::BM;
        c.model.mu = U(-0.1, 0.1);
        c.model.sigma = U(0.1, 0.5);
        c.model.q = U(std::max(c.model.mu, 0.0) + 0.02, 0.3);
        if (!gbm) c.model.l = -numerics::kInf;
        int fam = static_cast<int>(i % 4);
        if (!gbm) fam = 0;  // on the line only the put keeps a positive reward
        switch (fam) {
            case 0: {
                double K = U(1.0, 10.0);
                c.reward = rewards::put(K);
                c.reward.name += "(" + std::to_string(K) + ")";
                c.s = gbm ? U(0.3, 2.0) * K : K + U(-3.0, 3.0);
                break;
            }
            case 1: {
                c.reward = rewards::lookback(U(0.2, 0.9));
                c.s = U(0.5, 30.0);
                break;
            }
            case 2: {
                c.reward = rewards::russian();
                c.s = U(0.5, 30.0);
                break;
            }
            default: {
                c.reward = rewards::power_sum(0.5, 0.5, 1.0, 5.0);
                c.s = U(1.0, 40.0);
                break;
            }
        }
        c.label = std::string(to_string(c.model.kind)) + " mu=" + std::to_string(c.model.mu) +
                  " sigma=" + std::to_string(c.model.sigma) + " q=" + std::to_string(c.model.q) + " " +
                  c.reward.name + " s=" + std::to_string(c.s);
        out.push_back(std::move(c));
    }
    return out;
}

struct PropertyReport {
    double dominance = 0.0;      // max (h - V) / (1 + |h|), <= 0 when V >= h
    double stop_mismatch = 0.0;  // max |V - h| / (1 + |h|) on points labelled Gamma
    double concavity = 0.0;      // max slope increase of W_s over a stencil, relative to max |W|
    double finv = 0.0;           // max |Finv(F(x)) - x| / (1 + |x|)
    double ode = 0.0;            // max relative generator residual of psi and phi
    bool wave = false;
    std::size_t points = 0;
};

inline PropertyReport check_case(const Model& m, const EffectiveReward& h, double s, int n_x = 64) {
    PropertyReport r;
    auto col = build_column(m, h, s);
    r.wave = col.wave();
    for (double x : column_x_grid(m, s, n_x)) {
        auto [v, reg] = col.evaluate(x);
        double hx = h(x, s);
        r.dominance = std::max(r.dominance, (hx - v) / (1.0 + std::abs(hx)));
        if (reg == Region::Stop) r.stop_mismatch = std::max(r.stop_mismatch, std::abs(v - hx) / (1.0 + std::abs(hx)));
        double back = m.Finv(m.F(x));
        r.finv = std::max(r.finv, std::abs(back - x) / (1.0 + std::abs(x)));
        r.ode = std::max({r.ode, std::abs(generator_residual(m, true, x)), std::abs(generator_residual(m, false, x))});
        ++r.points;
    }
    if (!r.wave) {
        // Uniform and log-spaced y on (0, F(s)]; a slope increase is measured in value
        // units over its stencil.
        double ys = m.F(s);
        const int n = 300;
        std::vector<double> y;
        for (int i = 1; i <= n; ++i) y.push_back(ys * (static_cast<double>(i) / n));
        for (int i = 0; i < n; ++i) y.push_back(ys * std::pow(10.0, -8.0 * (1.0 - static_cast<double>(i) / n)));
        std::sort(y.begin(), y.end());
        y.erase(std::unique(y.begin(), y.end()), y.end());
        std::vector<double> w;
        double wmax = 0.0;
        for (double v : y) {
            w.push_back(col.W(v));
            wmax = std::max(wmax, std::abs(w.back()));
        }
        for (std::size_t i = 1; i + 1 < y.size(); ++i) {
            double s0 = (w[i] - w[i - 1]) / (y[i] - y[i - 1]);
            double s1 = (w[i + 1] - w[i]) / (y[i + 1] - y[i]);
            r.concavity = std::max(r.concavity, (s1 - s0) * (y[i + 1] - y[i - 1]) / (1.0 + wmax));
        }
    }
    return r;
}

}  // namespace maxstop::fixtures
