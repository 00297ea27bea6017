#pragma once

// One-dimensional diffusions dX = mu(X) dt + sigma(X) dB on a natural-boundary interval
// (l, r): the increasing/decreasing fundamental solutions psi, phi of (A - q) v = 0,
// the ratio F = psi / phi and its inverse.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "maxstop/errors.hpp"
#include "maxstop/numerics.hpp"

namespace maxstop {

enum class ModelKind { GBM, ABM, BM, Custom };

enum class LogPhiShape { StrictlyConvex, Linear, Indeterminate };

using RealFn = std::function<double(double)>;

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::GBM: return "GBM";
        case ModelKind::ABM: return "ABM";
        case ModelKind::BM: return "BM";
        case ModelKind::Custom: return "Custom";
    }
    return "?";
}

inline const char* to_string(LogPhiShape s) {
    switch (s) {
        case LogPhiShape::StrictlyConvex: return "StrictlyConvex";
        case LogPhiShape::Linear: return "Linear";
        case LogPhiShape::Indeterminate: return "Indeterminate";
    }
    return "?";
}

/// Closed-form callables for a user-defined diffusion. psi and phi with their first and
/// second derivatives are mandatory; finv is optional (solved numerically otherwise);
/// drift and volatility are needed only for residual checks and simulation.
struct CustomFunctions {
    RealFn psi, dpsi, d2psi;
    RealFn phi, dphi, d2phi;
    RealFn finv;
    RealFn drift, volatility;
};

struct ModelSpec {
    ModelKind kind = ModelKind::GBM;
    double mu = 0.0;     // per unit time (GBM: relative drift)
    double sigma = 1.0;  // per sqrt time (GBM: relative volatility)
    double q = 0.0;      // discount rate
    double l = 0.0;
    double r = std::numeric_limits<double>::infinity();
    std::optional<double> anchor;  // psi(anchor) = phi(anchor) = 1
    CustomFunctions custom;
};

struct Fundamentals {
    double psi;
    double phi;
    double dpsi;
    double dphi;
    double d2phi;
};

class Model;
Model make_model(ModelSpec spec);

/// Immutable diffusion model. Built-in kinds are evaluated in closed form; every
/// member function is pure and safe to call concurrently.
class Model {
public:
    const ModelSpec& spec() const noexcept { return spec_; }
    ModelKind kind() const noexcept { return spec_.kind; }
    double q() const noexcept { return spec_.q; }
    double lower() const noexcept { return spec_.l; }
    double upper() const noexcept { return spec_.r; }
    double anchor() const noexcept { return anchor_; }

    /// q == 0: only the scale function is available; no value solving.
    bool scale_only() const noexcept { return spec_.q == 0.0; }

    bool contains(double x) const noexcept { return x > spec_.l && x < spec_.r; }

    /// GBM exponents: phi = (x/x0)^gamma0, psi = (x/x0)^gamma1.
    double gamma0() const noexcept { return g0_; }
    double gamma1() const noexcept { return g1_; }

    /// Characteristic length used to scale boundary offsets and probe intervals.
    double length_scale() const noexcept { return length_; }

    LogPhiShape log_phi_shape() const noexcept { return shape_; }

    double psi(double x) const {
        require_fundamentals();
        switch (spec_.kind) {
            case ModelKind::GBM: return std::pow(x / anchor_, g1_);
            case ModelKind::ABM:
            case ModelKind::BM: return std::exp(g1_ * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.psi(x);
        }
        return numerics::kNaN;
    }

    double dpsi(double x) const {
        require_fundamentals();
        switch (spec_.kind) {
            case ModelKind::GBM: return g1_ / x * std::pow(x / anchor_, g1_);
            case ModelKind::ABM:
            case ModelKind::BM: return g1_ * std::exp(g1_ * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.dpsi(x);
        }
        return numerics::kNaN;
    }

    double d2psi(double x) const {
        require_fundamentals();
        switch (spec_.kind) {
            case ModelKind::GBM: return g1_ * (g1_ - 1.0) / (x * x) * std::pow(x / anchor_, g1_);
            case ModelKind::ABM:
            case ModelKind::BM: return g1_ * g1_ * std::exp(g1_ * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.d2psi(x);
        }
        return numerics::kNaN;
    }

    double phi(double x) const {
        require_fundamentals();
        switch (spec_.kind) {
            case ModelKind::GBM: return std::pow(x / anchor_, g0_);
            case ModelKind::ABM:
            case ModelKind::BM: return std::exp(g0_ * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.phi(x);
        }
        return numerics::kNaN;
    }

    double dphi(double x) const {
        require_fundamentals();
        switch (spec_.kind) {
            case ModelKind::GBM: return g0_ / x * std::pow(x / anchor_, g0_);
            case ModelKind::ABM:
            case ModelKind::BM: return g0_ * std::exp(g0_ * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.dphi(x);
        }
        return numerics::kNaN;
    }

    double d2phi(double x) const {
        require_fundamentals();
        switch (spec_.kind) {
            case ModelKind::GBM: return g0_ * (g0_ - 1.0) / (x * x) * std::pow(x / anchor_, g0_);
            case ModelKind::ABM:
            case ModelKind::BM: return g0_ * g0_ * std::exp(g0_ * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.d2phi(x);
        }
        return numerics::kNaN;
    }

    /// F = psi / phi, or the scale function (F(x0) = 0, F'(x0) = 1) when q == 0.
    double F(double x) const {
        if (scale_only()) return scale_function(x);
        switch (spec_.kind) {
            case ModelKind::GBM: return std::pow(x / anchor_, g1_ - g0_);
            case ModelKind::ABM:
            case ModelKind::BM: return std::exp((g1_ - g0_) * (x - anchor_));
            case ModelKind::Custom: return spec_.custom.psi(x) / spec_.custom.phi(x);
        }
        return numerics::kNaN;
    }

    double dF(double x) const {
        if (scale_only()) return scale_density(x);
        switch (spec_.kind) {
            case ModelKind::GBM: return (g1_ - g0_) / x * std::pow(x / anchor_, g1_ - g0_);
            case ModelKind::ABM:
            case ModelKind::BM: return (g1_ - g0_) * std::exp((g1_ - g0_) * (x - anchor_));
            case ModelKind::Custom: {
                const auto& c = spec_.custom;
                double p = c.phi(x);
                return (c.dpsi(x) * p - c.psi(x) * c.dphi(x)) / (p * p);
            }
        }
        return numerics::kNaN;
    }

    /// Inverse of F on F((l, r)).
    double Finv(double y) const {
        if (scale_only()) return scale_inverse(y);
        if (!(y > 0.0) || std::isinf(y)) {
            throw DomainError("Finv: y = " + std::to_string(y) + " outside F((l, r)) = (0, inf)");
        }
        switch (spec_.kind) {
            case ModelKind::GBM: return anchor_ * std::pow(y, 1.0 / (g1_ - g0_));
            case ModelKind::ABM:
            case ModelKind::BM: return anchor_ + std::log(y) / (g1_ - g0_);
            case ModelKind::Custom:
                if (spec_.custom.finv) return spec_.custom.finv(y);
                return solve_finv(y);
        }
        return numerics::kNaN;
    }

    /// Drift mu(x) and volatility sigma(x) of the SDE.
    double drift(double x) const {
        switch (spec_.kind) {
            case ModelKind::GBM: return spec_.mu * x;
            case ModelKind::ABM:
            case ModelKind::BM: return spec_.mu;
            case ModelKind::Custom:
                if (!spec_.custom.drift) throw ModelError("custom model has no drift callable");
                return spec_.custom.drift(x);
        }
        return numerics::kNaN;
    }

    double volatility(double x) const {
        switch (spec_.kind) {
            case ModelKind::GBM: return spec_.sigma * x;
            case ModelKind::ABM:
            case ModelKind::BM: return spec_.sigma;
            case ModelKind::Custom:
                if (!spec_.custom.volatility) throw ModelError("custom model has no volatility callable");
                return spec_.custom.volatility(x);
        }
        return numerics::kNaN;
    }

    bool has_dynamics() const noexcept {
        return spec_.kind != ModelKind::Custom || (spec_.custom.drift && spec_.custom.volatility);
    }

    /// Interval on which numeric probes (classification, residual checks) are run.
    std::pair<double, double> probe_interval() const {
        double l = spec_.l;
        double r = spec_.r;
        double x0 = anchor_;
        bool lf = std::isfinite(l);
        bool rf = std::isfinite(r);
        if (lf && rf) {
            double w = r - l;
            return {l + 1e-6 * w, r - 1e-6 * w};
        }
        if (lf) return {l + (x0 - l) * 1e-4, l + (x0 - l) * 1e4};
        if (rf) return {r - (r - x0) * 1e4, r - (r - x0) * 1e-4};
        return {x0 - 50.0 * length_, x0 + 50.0 * length_};
    }

private:
    friend Model make_model(ModelSpec spec);
    Model() = default;

    void require_fundamentals() const {
        if (scale_only()) {
            throw ModelError("q = 0: only scale-function queries are available for this model");
        }
    }

    // Scale function with s(x0) = 0, s'(x0) = 1 (q == 0 models).
    double scale_function(double x) const {
        double m = spec_.mu;
        double v = spec_.sigma * spec_.sigma;
        switch (spec_.kind) {
            case ModelKind::GBM: {
                double p = 1.0 - 2.0 * m / v;
                if (p == 0.0) return anchor_ * std::log(x / anchor_);
                return anchor_ / p * (std::pow(x / anchor_, p) - 1.0);
            }
            case ModelKind::ABM:
            case ModelKind::BM:
                if (m == 0.0) return x - anchor_;
                return v / (2.0 * m) * (1.0 - std::exp(-2.0 * m * (x - anchor_) / v));
            case ModelKind::Custom: break;
        }
        throw ModelError("custom models require q > 0");
    }

    double scale_density(double x) const {
        double m = spec_.mu;
        double v = spec_.sigma * spec_.sigma;
        switch (spec_.kind) {
            case ModelKind::GBM: return std::pow(x / anchor_, -2.0 * m / v);
            case ModelKind::ABM:
            case ModelKind::BM: return std::exp(-2.0 * m * (x - anchor_) / v);
            case ModelKind::Custom: break;
        }
        throw ModelError("custom models require q > 0");
    }

    double scale_inverse(double y) const {
        double m = spec_.mu;
        double v = spec_.sigma * spec_.sigma;
        switch (spec_.kind) {
            case ModelKind::GBM: {
                double p = 1.0 - 2.0 * m / v;
                if (p == 0.0) return anchor_ * std::exp(y / anchor_);
                return anchor_ * std::pow(1.0 + p * y / anchor_, 1.0 / p);
            }
            case ModelKind::ABM:
            case ModelKind::BM:
                if (m == 0.0) return y + anchor_;
                return anchor_ - v / (2.0 * m) * std::log(1.0 - 2.0 * m * y / v);
            case ModelKind::Custom: break;
        }
        throw ModelError("custom models require q > 0");
    }

    double solve_finv(double y) const {
        // Expand a bracket around the anchor until F changes side of y.
        double lo = anchor_;
        double hi = anchor_;
        double step = length_;
        auto inside = [this](double x) { return contains(x); };
        auto toward = [](double bound, double x, double step) {
            return std::isfinite(bound) ? 0.5 * (x + bound) : x + (bound > x ? step : -step);
        };
        int guard = 0;
        while (F(lo) > y && guard++ < 200) {
            double next = toward(spec_.l, lo, step);
            if (!inside(next)) break;
            lo = next;
            step *= 2.0;
        }
        step = length_;
        guard = 0;
        while (F(hi) < y && guard++ < 200) {
            double next = toward(spec_.r, hi, step);
            if (!inside(next)) break;
            hi = next;
            step *= 2.0;
        }
        double x = numerics::find_root([&](double t) { return F(t) - y; }, lo, hi, 1e-14);
        if (std::isnan(x)) throw DomainError("Finv: y = " + std::to_string(y) + " outside F-image");
        return x;
    }

    ModelSpec spec_;
    double anchor_ = 1.0;
    double g0_ = numerics::kNaN;
    double g1_ = numerics::kNaN;
    double length_ = 1.0;
    LogPhiShape shape_ = LogPhiShape::Indeterminate;
};

inline Fundamentals eval_fundamentals(const Model& model, double x) {
    if (!model.contains(x)) {
        throw DomainError("eval_fundamentals: x = " + std::to_string(x) + " outside (l, r)");
    }
    return {model.psi(x), model.phi(x), model.dpsi(x), model.dphi(x), model.d2phi(x)};
}

/// Sign of (log phi)'' on a dense sample of [lo, hi]. StrictlyConvex selects Q in the
/// diagonal formula, Linear (exponential phi) selects the replacement Q-tilde.
inline LogPhiShape classify_log_phi(const Model& model, double lo, double hi, int samples = 512,
                                    double tol = 1e-10) {
    bool all_pos = true;
    bool all_zero = true;
    for (int i = 0; i < samples; ++i) {
        double t = (i + 0.5) / samples;
        double x = (lo > 0.0 && hi / lo > 100.0) ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
        double p = model.phi(x);
        double dp = model.dphi(x);
        double d2p = model.d2phi(x);
        double curv = (d2p * p - dp * dp) / (p * p);
        double scale = (dp / p) * (dp / p) + std::abs(d2p / p);
        if (!(curv > tol * scale)) all_pos = false;
        if (!(std::abs(curv) <= tol * scale)) all_zero = false;
    }
    if (all_pos) return LogPhiShape::StrictlyConvex;
    if (all_zero) return LogPhiShape::Linear;
    return LogPhiShape::Indeterminate;
}

inline LogPhiShape classify_log_phi(const Model& model) {
    auto [lo, hi] = model.probe_interval();
    return classify_log_phi(model, lo, hi);
}

inline Model make_model(ModelSpec spec) {
    if (!(spec.q >= 0.0) || !std::isfinite(spec.q)) throw ModelError("q must be finite and >= 0");
    Model m;
    if (spec.kind == ModelKind::GBM) {
        if (spec.l != 0.0 || !std::isinf(spec.r) || spec.r < 0) {
            throw ModelError("GBM state space must be (0, inf)");
        }
    }
    if (!(spec.l < spec.r)) throw ModelError("interval requires l < r");
    if (spec.kind != ModelKind::Custom && !(spec.sigma > 0.0)) {
        throw ModelError("sigma must be strictly positive");
    }
    if (!std::isfinite(spec.mu)) throw ModelError("mu must be finite");

    double default_anchor = 0.0;
    switch (spec.kind) {
        case ModelKind::GBM: default_anchor = 1.0; break;
        case ModelKind::ABM:
        case ModelKind::BM: default_anchor = 0.0; break;
        case ModelKind::Custom: {
            double l = spec.l;
            double r = spec.r;
            if (std::isfinite(l) && std::isfinite(r)) default_anchor = 0.5 * (l + r);
            else if (std::isfinite(l)) default_anchor = l + 1.0;
            else if (std::isfinite(r)) default_anchor = r - 1.0;
            break;
        }
    }
    m.anchor_ = spec.anchor.value_or(default_anchor);
    if (!(m.anchor_ > spec.l && m.anchor_ < spec.r)) throw ModelError("anchor must lie inside (l, r)");

    double s2 = spec.sigma * spec.sigma;
    switch (spec.kind) {
        case ModelKind::GBM: {
            m.length_ = m.anchor_;
            if (spec.q > 0.0) {
                double a = 2.0 * spec.mu / s2 - 1.0;
                double disc = a * a + 8.0 * spec.q / s2;
                if (!(disc > 0.0)) throw ModelError("GBM characteristic discriminant is not positive");
                m.g0_ = 0.5 * (-a - std::sqrt(disc));
                m.g1_ = 0.5 * (-a + std::sqrt(disc));
                m.shape_ = LogPhiShape::StrictlyConvex;
            }
            break;
        }
        case ModelKind::ABM:
        case ModelKind::BM: {
            if (spec.q > 0.0) {
                double disc = spec.mu * spec.mu + 2.0 * spec.q * s2;
                if (!(disc > 0.0)) throw ModelError("BM characteristic discriminant is not positive");
                m.g0_ = (-spec.mu - std::sqrt(disc)) / s2;
                m.g1_ = (-spec.mu + std::sqrt(disc)) / s2;
                m.length_ = 1.0 / std::abs(m.g0_);
                m.shape_ = LogPhiShape::Linear;
            } else {
                m.length_ = spec.sigma;
            }
            break;
        }
        case ModelKind::Custom: {
            if (spec.q == 0.0) throw ModelError("custom models require q > 0");
            const auto& c = spec.custom;
            std::string missing;
            if (!c.psi) missing += " psi";
            if (!c.dpsi) missing += " psi'";
            if (!c.d2psi) missing += " psi''";
            if (!c.phi) missing += " phi";
            if (!c.dphi) missing += " phi'";
            if (!c.d2phi) missing += " phi''";
            if (!missing.empty()) throw ModelError("custom model is missing:" + missing);
            double l = spec.l;
            double r = spec.r;
            if (std::isfinite(l) && std::isfinite(r)) m.length_ = 0.1 * (r - l);
            else if (std::isfinite(l)) m.length_ = m.anchor_ - l;
            else if (std::isfinite(r)) m.length_ = r - m.anchor_;
            else m.length_ = 1.0;
            break;
        }
    }
    m.spec_ = std::move(spec);
    if (m.spec_.kind == ModelKind::Custom) m.shape_ = classify_log_phi(m);
    return m;
}

/// Relative residual (A - q) v / (q v) of a fundamental solution at x.
inline double generator_residual(const Model& model, bool increasing, double x) {
    double v = increasing ? model.psi(x) : model.phi(x);
    double dv = increasing ? model.dpsi(x) : model.dphi(x);
    double d2v = increasing ? model.d2psi(x) : model.d2phi(x);
    double sig = model.volatility(x);
    double res = 0.5 * sig * sig * d2v + model.drift(x) * dv - model.q() * v;
    return res / (model.q() * v);
}

}  // namespace maxstop
