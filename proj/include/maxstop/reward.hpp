#pragma once

// Payoff data: terminal reward g(x, s), running income f with its q-potential fbar,
// the effective reward h = g - fbar, and its image H_s(y) = h(F^-1(y), s) / phi(F^-1(y)).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "maxstop/diffusion.hpp"
#include "maxstop/errors.hpp"
#include "maxstop/numerics.hpp"

namespace maxstop {

using RealFn2 = std::function<double(double, double)>;

struct RewardSpec {
    std::string name = "custom";
    RealFn2 g;
    RealFn2 f;     // running income, empty means f == 0
    RealFn2 fbar;  // closed-form q-potential of f, mandatory when f is given
    RealFn2 dg_dx;     // optional analytic x-derivatives; finite differences otherwise
    RealFn2 dfbar_dx;
    bool monotone_in_s = true;
    // false when h does not depend on s at all (perpetual put): the diagonal value then
    // reduces to a one-dimensional problem instead of the closed-form depth objective.
    bool depends_on_s = true;
    std::vector<double> kinks;  // abscissae where g is not differentiable
};

namespace rewards {

/// g = s^a + k x^b - K.
inline RewardSpec power_sum(double a, double k, double b, double K) {
    RewardSpec r;
    r.name = "power_sum";
    r.g = [=](double x, double s) { return std::pow(s, a) + k * std::pow(x, b) - K; };
    r.dg_dx = [=](double x, double) { return k * b * std::pow(x, b - 1.0); };
    r.monotone_in_s = a >= 0.0;
    r.depends_on_s = a != 0.0;
    return r;
}

/// g = s - k x.
inline RewardSpec lookback(double k) {
    RewardSpec r;
    r.name = "lookback";
    r.g = [=](double x, double s) { return s - k * x; };
    r.dg_dx = [=](double, double) { return -k; };
    return r;
}

/// g = (K - x)^+.
inline RewardSpec put(double K) {
    RewardSpec r;
    r.name = "put";
    r.g = [=](double x, double) { return std::max(K - x, 0.0); };
    r.dg_dx = [=](double x, double) { return x < K ? -1.0 : 0.0; };
    r.depends_on_s = false;
    r.kinks = {K};
    return r;
}

/// g = s.
inline RewardSpec russian() {
    RewardSpec r;
    r.name = "russian";
    r.g = [](double, double s) { return s; };
    r.dg_dx = [](double, double) { return 0.0; };
    return r;
}

}  // namespace rewards

/// h = g - fbar with its x-derivative. At a declared kink the derivative is one-sided
/// from the right.
class EffectiveReward {
public:
    explicit EffectiveReward(RewardSpec spec) : spec_(std::move(spec)) {
        if (!spec_.g) throw RewardError("reward has no terminal payoff g");
        if (spec_.f && !spec_.fbar) {
            throw RewardError("running income f given without its closed-form q-potential fbar");
        }
        std::sort(spec_.kinks.begin(), spec_.kinks.end());
    }

    const RewardSpec& spec() const noexcept { return spec_; }

    double operator()(double x, double s) const {
        double v = spec_.g(x, s);
        if (spec_.fbar) v -= spec_.fbar(x, s);
        return v;
    }

    bool is_kink(double x, double rel = 1e-12) const {
        for (double k : spec_.kinks) {
            if (std::abs(x - k) <= rel * (1.0 + std::abs(k))) return true;
        }
        return false;
    }

    double dx(double x, double s) const {
        bool analytic = spec_.dg_dx && (!spec_.fbar || spec_.dfbar_dx);
        if (analytic) {
            double d = spec_.dg_dx(x, s);
            if (spec_.fbar) d -= spec_.dfbar_dx(x, s);
            return d;
        }
        double e = 1e-6 * (1.0 + std::abs(x));
        if (is_kink(x) || crosses_kink(x - e, x + e)) {
            return ((*this)(x + e, s) - (*this)(x, s)) / e;
        }
        return ((*this)(x + e, s) - (*this)(x - e, s)) / (2.0 * e);
    }

private:
    bool crosses_kink(double a, double b) const {
        return std::any_of(spec_.kinks.begin(), spec_.kinks.end(),
                           [&](double k) { return k > a && k < b; });
    }

    RewardSpec spec_;
};

inline EffectiveReward effective_reward(RewardSpec spec) { return EffectiveReward(std::move(spec)); }

/// H_s together with the state-space views eta(x) = h(x, s) / phi(x) and the slope
/// gamma(x) = (h / phi)'(x) / F'(x) = H_s'(F(x)).
class TransformedReward {
public:
    TransformedReward(const Model& model, const EffectiveReward& h, double s)
        : model_(&model), h_(&h), s_(s) {
        if (!model.contains(s)) throw DomainError("transform: level s outside (l, r)");
        if (model.scale_only()) throw ModelError("transform requires q > 0");
    }

    double s() const noexcept { return s_; }
    const Model& model() const noexcept { return *model_; }
    const EffectiveReward& reward() const noexcept { return *h_; }

    double eta(double x) const { return (*h_)(x, s_) / model_->phi(x); }

    double slope(double x) const {
        double p = model_->phi(x);
        double d = (h_->dx(x, s_) * p - (*h_)(x, s_) * model_->dphi(x)) / (p * p);
        return d / model_->dF(x);
    }

    double H(double y) const {
        check_y(y);
        return eta(model_->Finv(y));
    }

    double Hprime(double y) const {
        check_y(y);
        return slope(model_->Finv(y));
    }

    double value(double y) const { return H(y); }
    double derivative(double y) const { return Hprime(y); }

private:
    void check_y(double y) const {
        if (!(y > 0.0) || !std::isfinite(y)) {
            throw DomainError("H_s: y = " + std::to_string(y) + " outside the F-image (0, inf)");
        }
    }

    const Model* model_;
    const EffectiveReward* h_;
    double s_;
};

inline TransformedReward transform(const Model& model, const EffectiveReward& h, double s) {
    return TransformedReward(model, h, s);
}

struct SlopeResult {
    double slope;
    bool one_sided;  // x is a kink; slope is the right derivative
};

inline SlopeResult slope_at(const TransformedReward& H, double x) {
    return {H.slope(x), H.reward().is_kink(x)};
}

struct BoundaryLimits {
    double xi_l;
    double xi_r;
    bool converged_l;
    bool converged_r;
};

namespace detail {

// limsup of v(x_k) along x_k = Finv(y_ref * 10^(+-40 k / 63)), k = 0..63.
template <class V>
std::pair<double, bool> boundary_limit(const Model& model, double x_ref, int direction, V&& v) {
    constexpr int n = 64;
    double y_ref = model.F(x_ref);
    std::vector<double> vals;
    vals.reserve(n);
    for (int k = 0; k < n; ++k) {
        double y = y_ref * std::pow(10.0, direction * 40.0 * k / (n - 1));
        double x = model.Finv(y);
        if (!model.contains(x)) break;
        double val = v(x);
        if (!std::isfinite(val)) throw ValueInfinite("reward grows faster than the fundamental solution");
        vals.push_back(std::max(val, 0.0));
    }
    if (vals.size() < 8) return {vals.empty() ? 0.0 : vals.back(), false};
    auto tail = std::span<const double>(vals).last(8);
    auto [mn, mx] = std::minmax_element(tail.begin(), tail.end());
    double last = vals.back();
    double peak = *std::max_element(vals.begin(), vals.end());
    // Aitken on the last three terms: exact for geometric approach, which is what
    // power-law rewards produce along a geometric sequence in F.
    double a = vals[vals.size() - 3];
    double b = vals[vals.size() - 2];
    double c = last;
    double den = (c - b) - (b - a);
    double est = std::abs(den) > 1e-300 ? c - (c - b) * (c - b) / den : c;
    if (!std::isfinite(est)) est = c;
    if (est < 0.0) est = (c <= b && b <= a) ? 0.0 : c;  // overshoot of a decaying tail
    if (est <= 1e-10 * peak) est = 0.0;
    if (*mx - *mn < 1e-8 * (1.0 + std::abs(last))) return {est, true};
    // Geometric decay (constant ratio) converges to the Aitken limit too.
    bool geometric = tail.front() > 0.0;
    for (std::size_t i = 1; geometric && i + 1 < tail.size(); ++i) {
        double r0 = tail[i] / tail[i - 1];
        double r1 = tail[i + 1] / tail[i];
        geometric = r0 < 1.0 && r1 < 1.0 && std::abs(r1 - r0) <= 0.05 * r0;
    }
    if (geometric) return {est, true};
    // Not settled: strictly growing tails mean the limit is infinite.
    bool growing = std::is_sorted(tail.begin(), tail.end()) && tail.back() > 2.0 * tail.front() &&
                   tail.back() > 1e-8;
    if (growing) throw ValueInfinite("boundary ratio diverges: value is infinite");
    return {std::max(est, *mx), false};
}

}  // namespace detail

/// xi_l = limsup h^+/phi at l, xi_r = limsup h^+/psi at r.
inline BoundaryLimits boundary_limits(const Model& model, const EffectiveReward& h, double s) {
    if (!model.contains(s)) throw DomainError("boundary_limits: s outside (l, r)");
    auto [xl, cl] = detail::boundary_limit(model, std::min(s, model.anchor()), -1, [&](double x) {
        return std::max(h(x, s), 0.0) / model.phi(x);
    });
    auto [xr, cr] = detail::boundary_limit(model, std::max(s, model.anchor()), +1, [&](double x) {
        return std::max(h(x, s), 0.0) / model.psi(x);
    });
    return {xl, xr, cl, cr};
}

}  // namespace maxstop
