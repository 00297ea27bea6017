#pragma once

// Shared test fixtures: the reference GBM and the example rewards, plus constants
// produced by tests/oracles/derive_oracles.py (mpmath / scipy, independent of this code).

#include <algorithm>
#include <cmath>
#include <limits>

#include "maxstop/diffusion.hpp"
#include "maxstop/reward.hpp"

namespace maxstop::fixtures {

namespace oracle {
inline constexpr double gamma0 = -2.511334438749598093;
inline constexpr double gamma1 = 1.911334438749598093;
inline constexpr double put_x_star = 3.5760399394537529797;
inline constexpr double put_v55 = 0.61366135049368130132;
inline constexpr double lookback_beta = 0.70163618002738692078;
inline constexpr double lookback_v55 = 3.5864750486394705458;
inline constexpr double russian_beta = 0.78407286846748644481;
inline constexpr double russian_v11 = 1.1385511789901486751;
inline constexpr double ps_l_star_35 = 0.53707262861381505283;
inline constexpr double ps_v35_closed_form = 18.423211230986439998;
inline constexpr double ps_strategy_value_35 = 18.45607522512468;  // level integral of l*(.)
inline constexpr double ps_x_star_20 = 2.2141700901181190169;
inline constexpr double ps_s_hat = 8.6419909690681513232;
inline constexpr double ps_v55_wave = 0.79438373069717005088;
inline constexpr double ps_s_lower = 25.0;
}  // namespace oracle

inline Model reference_gbm(double q = 0.15) {
    ModelSpec s;
    s.kind = ModelKind::GBM;
    s.mu = 0.05;
    s.sigma = 0.25;
    s.q = q;
    return make_model(s);
}

inline Model drifted_bm(double mu = 0.1, double sigma = 0.4, double q = 0.15) {
    ModelSpec s;
    s.kind = ModelKind::BM;
    s.mu = mu;
    s.sigma = sigma;
    s.q = q;
    s.l = -std::numeric_limits<double>::infinity();
    return make_model(s);
}

// The reference GBM entered through user callables.
inline Model custom_gbm(bool with_dynamics = true) {
    const double g0 = oracle::gamma0;
    const double g1 = oracle::gamma1;
    ModelSpec s;
    s.kind = ModelKind::Custom;
    s.q = 0.15;
    s.l = 0.0;
    s.anchor = 1.0;
    auto& c = s.custom;
    c.psi = [=](double x) { return std::pow(x, g1); };
    c.dpsi = [=](double x) { return g1 * std::pow(x, g1 - 1.0); };
    c.d2psi = [=](double x) { return g1 * (g1 - 1.0) * std::pow(x, g1 - 2.0); };
    c.phi = [=](double x) { return std::pow(x, g0); };
    c.dphi = [=](double x) { return g0 * std::pow(x, g0 - 1.0); };
    c.d2phi = [=](double x) { return g0 * (g0 - 1.0) * std::pow(x, g0 - 2.0); };
    if (with_dynamics) {
        c.drift = [](double x) { return 0.05 * x; };
        c.volatility = [](double x) { return 0.25 * x; };
    }
    return make_model(s);
}

inline EffectiveReward put_reward() { return effective_reward(rewards::put(5.0)); }
inline EffectiveReward lookback_reward() { return effective_reward(rewards::lookback(0.5)); }
inline EffectiveReward russian_reward() { return effective_reward(rewards::russian()); }
inline EffectiveReward power_sum_reward() { return effective_reward(rewards::power_sum(0.5, 0.5, 1.0, 5.0)); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace maxstop::fixtures
