#pragma once

// Optimal stopping of (X, S) with S the running maximum: the diagonal value V(s, s),
// the excursion depth l*(s), the value surface V(x, s) and its region diagram.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "maxstop/diffusion.hpp"
#include "maxstop/errors.hpp"
#include "maxstop/majorant.hpp"
#include "maxstop/numerics.hpp"
#include "maxstop/reward.hpp"

namespace maxstop {

struct SolverOptions {
    double eps_b = 1e-8;          // boundary offset, in units of the model length scale
    double r_scan_factor = 4.0;   // stopping-set detection runs up to x = 4 s (GBM)
    int envelope_points = 2048;   // log-spaced samples in y = F(x)
    double y_floor_decades = 40;  // samples start no lower than F(s) * 10^-40
    double contact_rtol = 1e-9;
    int depth_grid = 256;
    int depth_bits = 40;
    double stop_gain_rtol = 1e-10;  // a smaller relative gain over h(s, s) means l* = 0
    int s_hat_scan = 64;
    double s_hat_tol = 1e-8;
    std::optional<double> s_hat_lo;
    std::optional<double> s_hat_hi;
    // Precomputed find_s_hat result; the inner optional is the "no fixed point" sentinel.
    std::optional<std::optional<double>> s_hat_hint;
    double boundary_rtol = 1e-4;  // bisection tolerance for s_lower / s_upper
    double prop1_rtol = 1e-8;
    double prop1_dlambda = 0.02;  // outer step in the survival exponent
    double survival_floor = 1e-12;
    double prop1_max_decades = 40;  // truncation cap on log10 F(u) / F(s)
    int threads = 1;
};

enum class DiagCase { DeepStop, StopNow, Wave };

inline const char* to_string(DiagCase c) {
    switch (c) {
        case DiagCase::DeepStop: return "DeepStop";
        case DiagCase::StopNow: return "StopNow";
        case DiagCase::Wave: return "Wave";
    }
    return "?";
}

struct DiagonalSolution {
    double s = numerics::kNaN;
    double v = numerics::kNaN;
    double l_star = numerics::kNaN;  // Wave: s - l (ride to the fixed point)
    DiagCase diag_case = DiagCase::StopNow;
    double x_star = numerics::kNaN;  // threshold of the one-dimensional problem, NaN if none
    double s_hat = numerics::kNaN;   // Wave only
};

enum class ContinuationSide { None, Left, Right };

/// Structure of the one-dimensional problem at a fixed level s: the envelope of H_s
/// pinned at (0, xi_l) with tail slope xi_r, and where s sits relative to its stopping set.
struct LevelStructure {
    double s;
    double xi_l;
    double xi_r;
    bool s_in_stopping_set;
    ContinuationSide side_of_s;       // continuation component containing s
    ContinuationSide threshold_side;  // which half-interval the continuation set is
    double x_star;                    // NaN when the stopping set is everything
    std::vector<double> xs;           // sample abscissae
    PiecewiseMajorant envelope;
};

namespace detail {

inline double lower_edge(const Model& m, const SolverOptions& o) {
    return std::isfinite(m.lower()) ? m.lower() + o.eps_b * m.length_scale() : -numerics::kInf;
}

inline double scan_upper(const Model& m, double s, const SolverOptions& o) {
    double span = std::isfinite(m.lower()) ? s - m.lower() : std::max(std::abs(s - m.anchor()), m.length_scale());
    double r = s + (o.r_scan_factor - 1.0) * span;
    if (std::isfinite(m.upper())) r = std::min(r, m.upper() - 1e-6 * (m.upper() - s));
    return r;
}

// Abscissae log-spaced in F from max(F(l + eps), F(min(s, anchor)) 10^-decades) to F(x_hi), plus
// the extra points, sorted and deduplicated.
inline std::vector<double> f_log_grid(const Model& m, double s, double x_hi, int n, const SolverOptions& o,
                                      std::initializer_list<double> extra = {}) {
    // Decades are counted from the smaller of s and the anchor so high levels still see
    // the behaviour near l.
    double y_s = m.F(std::min(s, m.anchor()));
    double y_lo = y_s * std::pow(10.0, -o.y_floor_decades);
    double xl = lower_edge(m, o);
    if (std::isfinite(xl)) y_lo = std::max(y_lo, m.F(xl));
    double y_hi = m.F(x_hi);
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(n) + extra.size());
    double a = std::log(y_lo);
    double b = std::log(y_hi);
    for (int i = 0; i < n; ++i) {
        double y = std::exp(a + (b - a) * i / (n - 1));
        double x = std::min(m.Finv(y), x_hi);  // Finv(F(x_hi)) may round past x_hi
        if (m.contains(x)) xs.push_back(x);
    }
    for (double e : extra) {
        if (m.contains(e) && e <= x_hi) xs.push_back(e);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    // Distinct x can still collide in y after rounding.
    std::vector<double> out;
    out.reserve(xs.size());
    double last_y = -numerics::kInf;
    for (double x : xs) {
        double y = m.F(x);
        if (y > last_y) {
            out.push_back(x);
            last_y = y;
        } else if (x == s) {
            out.back() = x;
        }
    }
    return out;
}

inline std::vector<Point> sample_transformed(const TransformedReward& H, const std::vector<double>& xs,
                                             std::vector<double>* phis = nullptr) {
    const Model& m = H.model();
    std::vector<Point> pts;
    pts.reserve(xs.size());
    if (phis) phis->clear();
    for (double x : xs) {
        double ph = m.phi(x);
        double w = H.reward()(x, H.s()) / ph;
        if (!std::isfinite(w)) throw DomainError("transformed reward not finite at x = " + std::to_string(x));
        pts.push_back({m.F(x), w});
        if (phis) phis->push_back(ph);
    }
    return pts;
}

inline std::size_t index_of(const std::vector<double>& xs, double x) {
    auto it = std::lower_bound(xs.begin(), xs.end(), x);
    if (it == xs.end() || *it != x) throw DomainError("sample grid does not contain the level");
    return static_cast<std::size_t>(it - xs.begin());
}

// Envelope with contact judged in payoff units: |V - h| <= rtol (1 + |V|), V = phi W.
inline PiecewiseMajorant payoff_scaled_envelope(const std::vector<Point>& pts, const std::vector<double>& phis,
                                                const std::vector<Point>& pins, std::optional<double> tail,
                                                double rtol) {
    EnvelopeOptions eo;
    eo.contact_rtol = 0.0;
    eo.tail_slope = tail;
    auto env = upper_concave_envelope(pts, pins, eo);
    std::vector<char> c(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double V = env.majorant_at_samples()[i] * phis[i];
        double h = pts[i].w * phis[i];
        // A zero payoff under a positive value is never stopping, however small phi makes both.
        bool close = std::abs(V - h) <= rtol * (1.0 + std::abs(V));
        c[i] = close && (h > 0.0 || V <= 0.0) ? 1 : 0;
    }
    env.set_contact(std::move(c));
    return env;
}

}  // namespace detail

/// Envelope analysis of H_s on [0, F(r_scan)] and the threshold x*(s).
inline LevelStructure analyze_level(const Model& model, const EffectiveReward& h, double s,
                                    const SolverOptions& opt = {}) {
    TransformedReward H(model, h, s);
    auto lim = boundary_limits(model, h, s);
    LevelStructure L;
    L.s = s;
    L.xi_l = lim.xi_l;
    L.xi_r = lim.xi_r;
    std::vector<Point> pts;
    std::vector<SampleRun> runs;
    // Widen the scan while nothing in it is stopping (reward negative far above s).
    SolverOptions wide = opt;
    for (int attempt = 0;; ++attempt) {
        L.xs = detail::f_log_grid(model, s, detail::scan_upper(model, s, wide), opt.envelope_points, opt, {s});
        std::vector<double> phis;
        pts = detail::sample_transformed(H, L.xs, &phis);
        L.envelope = detail::payoff_scaled_envelope(pts, phis, {Point{0.0, L.xi_l}}, L.xi_r, opt.contact_rtol);
        runs = L.envelope.runs();
        if (runs.size() > 1 || runs.front().contact || attempt >= 12) break;
        wide.r_scan_factor = 1.0 + 4.0 * (wide.r_scan_factor - 1.0);
    }
    std::size_t n = pts.size();
    std::size_t is = detail::index_of(L.xs, s);
    std::optional<SampleRun> left;
    std::optional<SampleRun> right;
    int bounded = 0;
    for (const auto& r : runs) {
        if (r.contact) continue;
        bool touches_l = r.first == 0;
        bool touches_r = r.last == n - 1;
        if (touches_l && touches_r) {
            throw UnsupportedStructure("no stopping region for the one-dimensional problem at s = " +
                                       std::to_string(s) + " within the scan range");
        }
        if (touches_l) left = r;
        else if (touches_r) right = r;
        else ++bounded;
    }
    if (bounded > 0 || (left && right)) {
        std::string msg = "continuation set at s = " + std::to_string(s) + " is not a half-interval:";
        for (const auto& r : runs) {
            if (!r.contact) {
                msg += " (" + std::to_string(L.xs[r.first]) + ", " + std::to_string(L.xs[r.last]) + ")";
            }
        }
        throw UnsupportedStructure(msg);
    }

    L.s_in_stopping_set = L.envelope.contact()[is] != 0;
    L.side_of_s = ContinuationSide::None;
    if (!L.s_in_stopping_set) L.side_of_s = (left && is <= left->last) ? ContinuationSide::Left : ContinuationSide::Right;

    auto y_at = [&](std::size_t i) { return pts[i].y; };
    L.x_star = numerics::kNaN;
    L.threshold_side = ContinuationSide::None;
    if (left) {
        L.threshold_side = ContinuationSide::Left;
        std::size_t a = left->last > 0 ? left->last - 1 : 0;
        std::size_t b = std::min(left->last + 2, n - 1);
        auto t = try_tangent_from_point(H, Point{0.0, L.xi_l}, Side::Right, y_at(a), y_at(b), 16);
        double y = t && !t->degenerate ? t->y : y_at(left->last + 1);
        L.x_star = model.Finv(y);
    } else if (right) {
        L.threshold_side = ContinuationSide::Right;
        std::size_t a = right->first >= 2 ? right->first - 2 : 0;
        std::size_t b = right->first;
        double xi = L.xi_r;
        double y = numerics::find_root([&](double v) { return H.Hprime(v) - xi; }, y_at(a), y_at(b), 1e-13);
        if (std::isnan(y)) y = y_at(right->first - 1);
        L.x_star = model.Finv(y);
    }
    return L;
}

/// x*(s): the free boundary of the one-dimensional problem at level s (NaN if the whole
/// line is stopping).
inline double stopping_threshold(const Model& model, const EffectiveReward& h, double s,
                                 const SolverOptions& opt = {}) {
    return analyze_level(model, h, s, opt).x_star;
}

/// Diagonal value of stopping below depth z at level s and acting optimally above.
inline double prop2_objective(const Model& model, const EffectiveReward& h, double s, double z) {
    if (z == 0.0) return h(s, s);
    if (z < 0.0) throw DomainError("prop2_objective: negative depth");
    double x = s - z;
    if (!model.contains(x)) throw DomainError("prop2_objective: s - z outside (l, r)");
    double dF = model.F(s) - model.F(x);
    double num;
    double den;
    switch (model.log_phi_shape()) {
        case LogPhiShape::StrictlyConvex:
            num = model.dF(s) * model.dphi(s);
            den = model.d2phi(s) * dF + num;
            break;
        case LogPhiShape::Linear:
            num = model.dF(s) * model.phi(s);
            den = (model.dphi(s) - model.phi(s)) * dF + num;
            break;
        default:
            throw UnsupportedModel("log phi is neither strictly convex nor linear on the working interval");
    }
    // Q > 0 requires num and den of equal sign; past a zero of den the objective is unbounded.
    if (!(num / den > 0.0)) return numerics::kInf;
    return model.phi(s) / model.phi(x) * (num / den) * h(x, s);
}

/// phi(s) / phi(s - z) h(s - z): the diagonal value for rewards that do not depend on s.
inline double simple_objective(const Model& model, const EffectiveReward& h, double s, double z) {
    if (z == 0.0) return h(s, s);
    double x = s - z;
    if (!model.contains(x)) throw DomainError("simple_objective: s - z outside (l, r)");
    return model.phi(s) / model.phi(x) * h(x, s);
}

struct DepthOptimum {
    double l_star;
    double v;
};

namespace detail {

template <class Obj>
DepthOptimum maximize_depth(Obj&& f, double s, double z_max, double v0, const SolverOptions& opt) {
    auto g = numerics::clustered_grid(0.0, z_max, opt.depth_grid, 1e-9);
    std::vector<double> vals(g.size(), -numerics::kInf);
    std::size_t best = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double v = g[i] == 0.0 ? v0 : -numerics::kInf;
        if (g[i] != 0.0) {
            try {
                v = f(g[i]);
            } catch (const DomainError&) {
                v = -numerics::kInf;
            }
        }
        if (v == numerics::kInf) {
            throw ValueInfinite("depth objective unbounded at s = " + std::to_string(s) +
                                ", z = " + std::to_string(g[i]));
        }
        if (std::isnan(v)) v = -numerics::kInf;
        vals[i] = v;
        if (v > vals[best]) best = i;
    }
    DepthOptimum out{g[best], vals[best]};
    if (best > 0) {
        double a = g[best - 1];
        double b = best + 1 < g.size() ? g[best + 1] : g[best];
        auto safe = [&](double z) {
            if (z <= 0.0) return v0;
            try {
                double v = f(z);
                return std::isnan(v) ? -numerics::kInf : v;
            } catch (const DomainError&) {
                return -numerics::kInf;
            }
        };
        auto [z, v] = numerics::maximize(safe, a, b, opt.depth_bits);
        if (v > out.v) out = {z, v};
        // Brent locates a flat maximum only to ~sqrt(eps), and that jitter in l*(s) makes
        // level integrals of the policy stall. Polish with a root of a fourth-order
        // central-difference slope, which is a smooth function of s.
        double span = std::min(out.l_star, z_max - out.l_star);  // distance to either end
        double e = 1e-3 * span;
        double w = 5e-3 * span;
        double lo = std::max(a, out.l_star - w);
        double hi = std::min(b, out.l_star + w);
        auto slope = [&](double t) {
            return (8.0 * (safe(t + e) - safe(t - e)) - (safe(t + 2.0 * e) - safe(t - 2.0 * e))) / (12.0 * e);
        };
        if (e > 0.0 && lo - 2.0 * e > 0.0) {
            double sl = slope(lo);
            double sh = slope(hi);
            if (std::isfinite(sl) && std::isfinite(sh) && sl > 0.0 && sh < 0.0) {
                double zr = numerics::find_root(slope, lo, hi, 1e-14);
                double vr = safe(zr);
                if (std::isfinite(vr) && vr >= out.v - 1e-10 * std::abs(out.v)) out = {zr, vr};
            }
        }
    }
    // Relative only: when h(s, s) = 0 any positive gain is a real continuation value.
    if (!(out.v > v0 + opt.stop_gain_rtol * std::abs(v0))) out = {0.0, v0};
    return out;
}

inline double depth_limit(const Model& model, double s, const SolverOptions& opt) {
    if (std::isfinite(model.lower())) return s - model.lower() - opt.eps_b * model.length_scale();
    // Far enough that phi(s) / phi(s - z) is negligible for exponential phi.
    return 80.0 * model.length_scale();
}

}  // namespace detail

/// l*(s): maximizer of prop2_objective over z in [0, s - l - eps] (simple_objective for
/// rewards that do not depend on s). z = 0 is always a candidate.
inline DepthOptimum optimal_excursion_depth(const Model& model, const EffectiveReward& h, double s,
                                            const SolverOptions& opt = {}) {
    if (!model.contains(s)) throw DomainError("optimal_excursion_depth: s outside (l, r)");
    if (model.scale_only()) throw ModelError("value solving requires q > 0");
    double v0 = h(s, s);
    double zmax = detail::depth_limit(model, s, opt);
    if (!h.spec().depends_on_s) {
        return detail::maximize_depth([&](double z) { return simple_objective(model, h, s, z); }, s, zmax, v0, opt);
    }
    if (model.log_phi_shape() == LogPhiShape::Indeterminate) {
        throw UnsupportedModel("log phi is neither strictly convex nor linear on the working interval");
    }
    return detail::maximize_depth([&](double z) { return prop2_objective(model, h, s, z); }, s, zmax, v0, opt);
}

/// Smallest root of s - x*(s) on a log scan of levels; nullopt when there is none.
inline std::optional<double> find_s_hat(const Model& model, const EffectiveReward& h, const SolverOptions& opt = {}) {
    if (opt.s_hat_hint) return *opt.s_hat_hint;
    double lo;
    double hi;
    if (std::isfinite(model.lower())) {
        double d = model.anchor() - model.lower();
        lo = opt.s_hat_lo.value_or(model.lower() + 1e-3 * d);
        hi = opt.s_hat_hi.value_or(model.lower() + 1e3 * d);
    } else {
        lo = opt.s_hat_lo.value_or(model.anchor() - 50.0 * model.length_scale());
        hi = opt.s_hat_hi.value_or(model.anchor() + 50.0 * model.length_scale());
    }
    if (std::isfinite(model.upper())) hi = std::min(hi, model.upper() - 1e-6 * (model.upper() - lo));
    auto gap = [&](double s) {
        double xs = stopping_threshold(model, h, s, opt);
        double x = std::isnan(xs) ? (std::isfinite(model.lower()) ? model.lower() : -numerics::kInf) : xs;
        return s - x;
    };
    bool logscale = std::isfinite(model.lower());
    auto level = [&](int i) {
        double t = static_cast<double>(i) / (opt.s_hat_scan - 1);
        if (logscale) {
            double l = model.lower();
            return l + (lo - l) * std::pow((hi - l) / (lo - l), t);
        }
        return lo + (hi - lo) * t;
    };
    double prev_s = level(0);
    double prev_g = gap(prev_s);
    for (int i = 1; i < opt.s_hat_scan; ++i) {
        double s = level(i);
        double g = gap(s);
        if (prev_g == 0.0) return prev_s;
        if (prev_g < 0.0 && g >= 0.0) {
            double r = numerics::find_root(gap, prev_s, s, opt.s_hat_tol);
            if (!std::isnan(r)) return r;
        }
        prev_s = s;
        prev_g = g;
    }
    return std::nullopt;
}

/// V(s, s) and the optimal excursion depth with the case label.
inline DiagonalSolution v_diag(const Model& model, const EffectiveReward& h, double s, const SolverOptions& opt = {}) {
    if (!model.contains(s)) throw DomainError("v_diag: s outside (l, r)");
    if (model.scale_only()) throw ModelError("value solving requires q > 0");
    auto L = analyze_level(model, h, s, opt);
    DiagonalSolution d;
    d.s = s;
    d.x_star = L.x_star;
    if (L.side_of_s == ContinuationSide::Left) {
        auto sh = find_s_hat(model, h, opt);
        if (!sh || !(*sh > s)) {
            throw UnsupportedStructure("level s = " + std::to_string(s) +
                                       " lies in a left-sided continuation set but no fixed point s = x*(s) above it");
        }
        d.s_hat = *sh;
        d.v = model.psi(s) / model.psi(*sh) * h(*sh, *sh);
        d.l_star = std::isfinite(model.lower()) ? s - model.lower() : numerics::kInf;
        d.diag_case = DiagCase::Wave;
        return d;
    }
    auto opt_depth = optimal_excursion_depth(model, h, s, opt);
    d.v = opt_depth.v;
    d.l_star = opt_depth.l_star;
    d.diag_case = opt_depth.l_star > 0.0 ? DiagCase::DeepStop : DiagCase::StopNow;
    return d;
}

/// Appendix-style smooth-fit value phi(s) [(F(s) - F(x)) gamma(x) + eta(x)], x = s - l.
inline double smooth_fit_value(const Model& model, const EffectiveReward& h, double s, double l) {
    if (l == 0.0) return h(s, s);
    double x = s - l;
    if (!model.contains(x)) throw DomainError("smooth_fit_value: s - l outside (l, r)");
    if (h.is_kink(x)) throw DomainError("smooth_fit_value: reward has a kink at s - l");
    TransformedReward H(model, h, s);
    return model.phi(s) * ((model.F(s) - model.F(x)) * H.slope(x) + H.eta(x));
}

/// Depth policy u -> l_D(u) >= 0; +inf means "never stop at this level" (ride to the next).
using DepthPolicy = std::function<double(double)>;

struct Prop1Result {
    double value;
    double survival;      // exp(-Lambda) where integration ended
    double truncated_at;  // level where the outer integral was cut (or absorbed)
    int panels;
};

namespace detail {

enum class PolicyKind { Absorb, Finite, Ride };

inline PolicyKind policy_kind(const Model& m, double u, double l) {
    if (!(l > 0.0)) return PolicyKind::Absorb;
    if (std::isinf(l) || !m.contains(u - l)) return PolicyKind::Ride;
    return PolicyKind::Finite;
}

}  // namespace detail

/// V(s, s) of the threshold strategy with depth policy l_D, by integrating
/// V/phi(s) = int exp(-Lambda) eta dLambda over levels m >= s, where
/// dLambda = F'(m) / (F(m) - F(m - l_D(m))) dm and eta = h(m - l_D, m) / phi(m - l_D).
inline Prop1Result prop1_integral(const Model& model, const EffectiveReward& h, const DepthPolicy& policy, double s,
                                  const SolverOptions& opt = {}) {
    if (!model.contains(s)) throw DomainError("prop1_value: s outside (l, r)");
    if (model.scale_only()) throw ModelError("value solving requires q > 0");
    using detail::PolicyKind;

    struct Node {
        double u;
        double l;
        PolicyKind kind;
        double P;
        double eta;
    };
    auto xi_l = [&](double u) { return boundary_limits(model, h, u).xi_l; };
    auto node = [&](double u) {
        double l = policy(u);
        if (l < 0.0 || std::isnan(l)) throw DomainError("depth policy returned a negative depth");
        auto k = detail::policy_kind(model, u, l);
        Node n{u, l, k, 0.0, 0.0};
        if (k == PolicyKind::Ride) {
            n.P = model.dF(u) / model.F(u);
            n.eta = xi_l(u);
        } else if (k == PolicyKind::Finite) {
            double x = u - l;
            n.P = model.dF(u) / (model.F(u) - model.F(x));
            n.eta = h(x, u) / model.phi(x);
        }
        return n;
    };
    auto P_at = [&](double u) {
        double l = policy(u);
        if (!(l > 0.0)) return numerics::kInf;
        if (std::isinf(l) || !model.contains(u - l)) return model.dF(u) / model.F(u);
        return model.dF(u) / (model.F(u) - model.F(u - l));
    };
    // First level in (a, b] whose policy kind differs from `kind`.
    auto split = [&](double a, double b, PolicyKind kind) {
        for (int it = 0; it < 60 && b - a > 1e-14 * (1.0 + std::abs(b)); ++it) {
            double m = 0.5 * (a + b);
            if (detail::policy_kind(model, m, policy(m)) == kind) a = m;
            else b = m;
        }
        return b;
    };

    // int_0^dL exp(-t) eta(t) dt with eta log-linear in t when both ends share a sign
    // (exact for power-law payoffs under proportional policies), linear otherwise.
    auto panel = [](double e0, double e1, double dL) {
        if (!(dL > 0.0)) return 0.0;
        if (e0 * e1 > 0.0) {
            double c = std::log(e1 / e0) / dL - 1.0;
            double f = std::abs(c * dL) < 1e-12 ? dL : std::expm1(c * dL) / c;
            return e0 * f;
        }
        double e = std::exp(-dL);
        double lin = (1.0 - e - dL * e) / dL;
        return e0 * (1.0 - e) + (e1 - e0) * lin;
    };

    double phi_s = model.phi(s);
    double Fs = model.F(s);
    Node cur = node(s);
    if (cur.kind == PolicyKind::Absorb) return {h(s, s), 1.0, s, 0};

    double Lambda = 0.0;
    double acc = 0.0;
    int panels = 0;
    double growth = std::isfinite(model.lower()) ? 0.25 : numerics::kInf;
    while (true) {
        double surv = std::exp(-Lambda);
        // Stop once both the survival and the discounted payoff still on offer are negligible;
        // payoffs growing with the level make survival alone a poor criterion.
        if (surv < opt.survival_floor && surv * std::abs(cur.eta) <= opt.prop1_rtol * std::abs(acc)) {
            return {phi_s * acc, surv, cur.u, panels};
        }
        if (!std::isfinite(model.F(cur.u)) || std::log10(model.F(cur.u) / Fs) > opt.prop1_max_decades ||
            !model.contains(cur.u)) {
            throw TruncationError("survival factor " + std::to_string(surv) + " has not decayed below " +
                                  std::to_string(opt.survival_floor) + " by level " + std::to_string(cur.u));
        }
        double du = opt.prop1_dlambda / cur.P;
        if (std::isfinite(growth)) du = std::min(du, growth * (cur.u - model.lower()));
        else du = std::min(du, model.length_scale());
        if (std::isfinite(model.upper())) du = std::min(du, 0.5 * (model.upper() - cur.u));

        Node nxt{};
        double dL = 0.0;
        for (int attempt = 0;; ++attempt) {
            double b = cur.u + du;
            nxt = node(b);
            if (nxt.kind != cur.kind) {
                b = split(cur.u, b, cur.kind);
                Node edge = node(b);
                if (edge.kind == PolicyKind::Absorb) {
                    // Close the panel just below the switch, then stop at level b.
                    double bm = std::nextafter(b, cur.u);
                    Node last = bm > cur.u ? node(bm) : cur;
                    if (last.kind != cur.kind) last = cur;
                    double dLa = bm > cur.u
                                     ? numerics::adaptive_simpson(P_at, cur.u, bm, cur.P, last.P, opt.prop1_rtol, 20)
                                     : 0.0;
                    acc += surv * panel(cur.eta, last.eta, dLa);
                    Lambda += dLa;
                    acc += std::exp(-Lambda) * h(b, b) / model.phi(b);
                    return {phi_s * acc, std::exp(-Lambda), b, panels + 1};
                }
                // Integrate this panel up to the switch; the next one starts on the other side.
                double bm = std::nextafter(b, cur.u);
                nxt = bm > cur.u ? node(bm) : cur;
                if (nxt.kind != cur.kind) nxt = cur;
                dL = bm > cur.u ? numerics::adaptive_simpson(P_at, cur.u, bm, cur.P, nxt.P, opt.prop1_rtol, 20) : 0.0;
                acc += surv * panel(cur.eta, nxt.eta, dL);
                Lambda += dL;
                cur = edge;
                ++panels;
                dL = -1.0;
                break;
            }
            dL = numerics::adaptive_simpson(P_at, cur.u, b, cur.P, nxt.P, opt.prop1_rtol, 20);
            if (dL <= 2.0 * opt.prop1_dlambda || attempt >= 30) break;
            du *= 0.5;
        }
        if (dL < 0.0) continue;
        acc += surv * panel(cur.eta, nxt.eta, dL);
        Lambda += dL;
        cur = nxt;
        ++panels;
    }
}

inline double prop1_value(const Model& model, const EffectiveReward& h, const DepthPolicy& policy, double s,
                          const SolverOptions& opt = {}) {
    return prop1_integral(model, h, policy, s, opt).value;
}

/// The solver's depth policy: the optimal excursion depth at each level, except that
/// levels below the fixed point s_hat ride (+inf) when they lie in a left-sided
/// continuation set. The fixed point is computed once.
inline DepthPolicy optimal_depth_policy(const Model& model, const EffectiveReward& h, const SolverOptions& opt = {}) {
    auto sh = find_s_hat(model, h, opt);
    double cut = sh ? *sh : -numerics::kInf;
    // s - x*(s) keeps its sign below its smallest root, so one probe decides riding.
    bool ride_below = false;
    if (sh) {
        double u0 = std::isfinite(model.lower()) ? model.lower() + (cut - model.lower()) * (1.0 - 1e-3)
                                                 : cut - 1e-3 * model.length_scale();
        ride_below = model.contains(u0) &&
                     analyze_level(model, h, u0, opt).side_of_s == ContinuationSide::Left;
    }
    auto depth = [&model, &h, opt](double u) { return optimal_excursion_depth(model, h, u, opt).l_star; };
    // A level-free reward stops at the fixed threshold x* = s_hat from every level above
    // it; the closed form avoids re-maximizing at each level.
    bool fixed = sh && !h.spec().depends_on_s;
    return [cut, ride_below, fixed, depth](double u) {
        if (u < cut) return ride_below ? numerics::kInf : depth(u);
        return fixed ? u - cut : depth(u);
    };
}

enum class Region { Stop, C1, C2, C3 };

inline const char* to_string(Region r) {
    switch (r) {
        case Region::Stop: return "Gamma";
        case Region::C1: return "C1";
        case Region::C2: return "C2";
        case Region::C3: return "C3";
    }
    return "?";
}

/// Value function on the column {(x, s) : l < x <= s} for a fixed level s.
class ColumnSolution {
public:
    const DiagonalSolution& diagonal() const noexcept { return diag_; }
    double s() const noexcept { return diag_.s; }
    double xi_l() const noexcept { return xi_l_; }
    bool wave() const noexcept { return diag_.diag_case == DiagCase::Wave; }

    /// Tangency abscissa (state space) and slope of the bridge adjoining F(s), if any.
    std::optional<std::pair<double, double>> c1_bridge() const {
        if (!c1_) return std::nullopt;
        return std::make_pair(x_c1_, slope_c1_);
    }
    /// Tangency abscissa and slope of the bridge adjoining the origin, if any.
    std::optional<std::pair<double, double>> c2_bridge() const {
        if (!c2_) return std::nullopt;
        return std::make_pair(x_c2_, slope_c2_);
    }
    const PiecewiseMajorant& envelope() const noexcept { return env_; }

    /// W_s(y) = V(F^-1(y), s) / phi(F^-1(y)).
    double W(double y) const {
        if (wave()) throw DomainError("W is not defined on a C3 column");
        if (c1_ && y >= y_c1_) return pin_w_ + slope_c1_ * (y - y_s_);
        if (c2_ && y <= y_c2_) return xi_l_ + slope_c2_ * y;
        if (in_contact(y)) return H_->H(y);
        return env_(y);
    }

    std::pair<double, Region> evaluate(double x) const {
        const Model& m = *model_;
        if (!m.contains(x) || x > diag_.s + 1e-15 * std::abs(diag_.s) + 1e-300) {
            throw DomainError("v_surface: x = " + std::to_string(x) + " outside (l, s]");
        }
        if (wave()) return {m.psi(x) / m.psi(diag_.s_hat) * (*h_)(diag_.s_hat, diag_.s_hat), Region::C3};
        double y = m.F(x);
        if (c1_ && y >= y_c1_) return {m.phi(x) * (pin_w_ + slope_c1_ * (y - y_s_)), Region::C1};
        if (c2_ && y <= y_c2_) return {m.phi(x) * (xi_l_ + slope_c2_ * y), Region::C2};
        if (in_contact(y)) return {(*h_)(x, diag_.s), Region::Stop};
        return {m.phi(x) * env_(y), Region::C1};
    }

private:
    friend ColumnSolution build_column(const Model&, const EffectiveReward&, double, const SolverOptions&,
                                       std::optional<DiagonalSolution>);

    bool in_contact(double y) const {
        for (const auto& [a, b] : contact_) {
            if (y >= a && y <= b) return true;
        }
        // Between samples the envelope is a chord, which can dip below a concave H next
        // to a contact run; there H itself is the majorant.
        double w = env_(y);
        double hy = H_->H(y);
        double ph = model_->phi(model_->Finv(y));
        return (w - hy) * ph <= rtol_ * (1.0 + std::abs(w) * ph);
    }

    const Model* model_ = nullptr;
    const EffectiveReward* h_ = nullptr;
    std::optional<TransformedReward> H_;
    DiagonalSolution diag_;
    double xi_l_ = 0.0;
    double y_s_ = 0.0;
    double pin_w_ = 0.0;
    bool c1_ = false;
    double y_c1_ = 0.0, x_c1_ = 0.0, slope_c1_ = 0.0;
    bool c2_ = false;
    double y_c2_ = 0.0, x_c2_ = 0.0, slope_c2_ = 0.0;
    double rtol_ = 1e-9;
    std::vector<std::pair<double, double>> contact_;
    PiecewiseMajorant env_;
};

/// Pinned envelope W_s on [0, F(s)] with W(0) = xi_l and W(F(s)) = V(s, s) / phi(s).
/// The model and reward must outlive the returned column.
inline ColumnSolution build_column(const Model& model, const EffectiveReward& h, double s,
                                   const SolverOptions& opt = {},
                                   std::optional<DiagonalSolution> diag = std::nullopt) {
    ColumnSolution c;
    c.model_ = &model;
    c.h_ = &h;
    c.rtol_ = opt.contact_rtol;
    c.diag_ = diag ? *diag : v_diag(model, h, s, opt);
    c.H_.emplace(model, h, s);
    if (c.wave()) return c;
    const TransformedReward& H = *c.H_;

    auto lim = boundary_limits(model, h, s);
    c.xi_l_ = lim.xi_l;
    c.y_s_ = model.F(s);
    c.pin_w_ = c.diag_.v / model.phi(s);
    auto xs = detail::f_log_grid(model, s, s, opt.envelope_points, opt, {s});
    std::vector<double> phis;
    auto pts = detail::sample_transformed(H, xs, &phis);
    std::vector<Point> pins{{0.0, c.xi_l_}, {c.y_s_, c.pin_w_}};
    c.env_ = detail::payoff_scaled_envelope(pts, phis, pins, std::nullopt, opt.contact_rtol);

    auto runs = c.env_.runs();
    std::size_t n = pts.size();
    const auto& contact = c.env_.contact();
    auto y_at = [&](std::size_t i) { return pts[i].y; };
    Point pin_s{c.y_s_, c.pin_w_};
    Point pin_0{0.0, c.xi_l_};

    if (!contact[n - 1]) {
        const auto& r = runs.back();
        c.c1_ = true;
        if (r.first == 0) {
            // No contact anywhere: one chord between the pins.
            c.y_c1_ = 0.0;
            c.x_c1_ = model.lower();
            c.slope_c1_ = (c.pin_w_ - c.xi_l_) / c.y_s_;
        } else {
            std::size_t a = r.first >= 2 ? r.first - 2 : 0;
            std::size_t b = std::min(r.first + 1, n - 1);
            auto t = try_tangent_from_point(H, pin_s, Side::Left, y_at(a), y_at(b), 32, 1e-13);
            c.y_c1_ = t && !t->degenerate ? t->y : y_at(r.first - 1);
            c.x_c1_ = model.Finv(c.y_c1_);
            c.slope_c1_ = t ? t->slope : (c.pin_w_ - pts[r.first - 1].w) / (c.y_s_ - c.y_c1_);
        }
    }
    if (!contact[0] && !(c.c1_ && c.y_c1_ == 0.0)) {
        const auto& r = runs.front();
        std::size_t a = r.last > 0 ? r.last - 1 : 0;
        std::size_t b = std::min(r.last + 2, n - 1);
        auto t = try_tangent_from_point(H, pin_0, Side::Right, y_at(a), y_at(b), 32, 1e-13);
        c.c2_ = true;
        c.y_c2_ = t && !t->degenerate ? t->y : y_at(r.last + 1);
        c.x_c2_ = model.Finv(c.y_c2_);
        c.slope_c2_ = t ? t->slope : (pts[r.last + 1].w - c.xi_l_) / c.y_c2_;
    }
    c.contact_ = c.env_.contact_intervals();
    return c;
}

/// V(x, s) and its region label.
inline std::pair<double, Region> v_surface(const Model& model, const EffectiveReward& h, double s, double x,
                                           const SolverOptions& opt = {}) {
    return build_column(model, h, s, opt).evaluate(x);
}

struct ValueSurface {
    std::vector<double> s_grid;
    std::vector<std::vector<double>> x_grid;  // per column, ascending, last point = s
    std::vector<std::vector<double>> values;
    std::vector<std::vector<Region>> regions;
    std::vector<DiagonalSolution> diagonal;
    std::vector<double> s_minus_lstar;  // NaN on C3 columns
    std::vector<double> x_star;         // NaN where undefined
    std::optional<double> s_hat;
    std::optional<double> s_lower;
    std::optional<double> s_upper;
};

/// x_per_s points on (l, s]: uniform for a finite left end, otherwise over
/// [s - 10 (length scale), s].
inline std::vector<double> column_x_grid(const Model& model, double s, int n) {
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(n));
    double lo = std::isfinite(model.lower()) ? model.lower() : s - 10.0 * model.length_scale();
    for (int j = 1; j <= n; ++j) xs.push_back(lo + (s - lo) * j / n);
    xs.back() = s;
    return xs;
}

inline ValueSurface phase_diagram(const Model& model, const EffectiveReward& h, const std::vector<double>& s_grid,
                                  int x_per_s, const SolverOptions& opt_in = {}) {
    if (s_grid.empty()) throw DomainError("phase_diagram: empty s grid");
    if (x_per_s < 1) throw DomainError("phase_diagram: x_per_s must be positive");
    for (std::size_t i = 0; i < s_grid.size(); ++i) {
        if (!model.contains(s_grid[i])) throw DomainError("phase_diagram: level outside (l, r)");
        if (i > 0 && !(s_grid[i] > s_grid[i - 1])) throw DomainError("phase_diagram: s grid must be ascending");
    }
    SolverOptions opt = opt_in;
    if (!opt.s_hat_hint) opt.s_hat_hint = find_s_hat(model, h, opt);

    ValueSurface vs;
    std::size_t n = s_grid.size();
    vs.s_grid = s_grid;
    vs.s_hat = *opt.s_hat_hint;
    vs.x_grid.resize(n);
    vs.values.resize(n);
    vs.regions.resize(n);
    vs.diagonal.resize(n);
    vs.s_minus_lstar.assign(n, numerics::kNaN);
    vs.x_star.assign(n, numerics::kNaN);
    std::vector<char> no_c2(n, 0);

    SolverOptions inner = opt;
    inner.threads = 1;
    numerics::parallel_for(n, opt.threads, [&](std::size_t i) {
        double s = s_grid[i];
        auto col = build_column(model, h, s, inner);
        const auto& d = col.diagonal();
        vs.diagonal[i] = d;
        vs.x_star[i] = d.x_star;
        if (d.diag_case != DiagCase::Wave) vs.s_minus_lstar[i] = s - d.l_star;
        no_c2[i] = !col.wave() && !col.c2_bridge();
        auto xs = column_x_grid(model, s, x_per_s);
        std::vector<double> v(xs.size());
        std::vector<Region> r(xs.size());
        for (std::size_t j = 0; j < xs.size(); ++j) std::tie(v[j], r[j]) = col.evaluate(xs[j]);
        vs.x_grid[i] = std::move(xs);
        vs.values[i] = std::move(v);
        vs.regions[i] = std::move(r);
    });

    // Diagonal immediate-stopping band: s_upper = sup{StopNow}; s_lower = the level where
    // the origin-tangent (C2) band vanishes. The band can shrink to a single level, so
    // s_lower is bracketed by the C2 columns rather than by band columns on the grid.
    auto is_stop_now = [&](double s) { return v_diag(model, h, s, inner).diag_case == DiagCase::StopNow; };
    auto is_band = [&](double s) {
        auto col = build_column(model, h, s, inner);
        return col.diagonal().diag_case == DiagCase::StopNow && !col.c2_bridge();
    };
    auto has_c2 = [&](double s) {
        auto col = build_column(model, h, s, inner);
        return !col.wave() && col.c2_bridge().has_value();
    };
    // pred(a) holds, pred(b) does not; a and b may come in either order.
    auto bisect = [&](double a, double b, const std::function<bool(double)>& pred) {
        while (std::abs(b - a) > opt.boundary_rtol * std::max(std::abs(a), std::abs(b))) {
            double m = 0.5 * (a + b);
            bool p = false;
            try {
                p = pred(m);
            } catch (const Error&) {
                p = false;
            }
            if (p) a = m;
            else b = m;
        }
        return 0.5 * (a + b);
    };

    std::optional<std::size_t> last_stop;
    std::optional<std::size_t> first_band;
    std::optional<std::size_t> last_c2;
    for (std::size_t i = 0; i < n; ++i) {
        if (vs.diagonal[i].diag_case != DiagCase::Wave && !no_c2[i]) last_c2 = i;
        if (vs.diagonal[i].diag_case == DiagCase::StopNow) {
            last_stop = i;
            if (!first_band && no_c2[i]) first_band = i;
        }
    }
    if (last_stop) {
        std::size_t i = *last_stop;
        vs.s_upper = i + 1 < n ? bisect(s_grid[i], s_grid[i + 1], is_stop_now) : s_grid[i];
    }
    if (last_c2) {
        std::size_t i = *last_c2;
        if (i + 1 < n) vs.s_lower = bisect(s_grid[i], s_grid[i + 1], has_c2);
    } else if (first_band) {
        std::size_t i = *first_band;
        vs.s_lower = i > 0 ? bisect(s_grid[i], s_grid[i - 1], is_band) : s_grid[i];
    }
    return vs;
}

}  // namespace maxstop
