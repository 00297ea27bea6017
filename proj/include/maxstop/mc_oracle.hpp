#pragma once

// Monte Carlo estimates of threshold strategies for (X, S): stop the first time the
// excursion depth S - X enters a band D(S) = [lo(S), hi(S)].
//
// GBM (in log space) and BM are simulated exactly between step times. The running
// maximum is sampled from the Brownian-bridge law and lower barriers are tested with the
// bridge crossing probability, so steps may be long away from the stopping boundary and
// shrink to `dt` near it. Custom models use Euler-Maruyama with the fixed step `dt`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxstop/diffusion.hpp"
#include "maxstop/errors.hpp"
#include "maxstop/numerics.hpp"
#include "maxstop/philox.hpp"
#include "maxstop/reward.hpp"
#include "maxstop/solver.hpp"

namespace maxstop {

struct MCConfig {
    std::size_t n_paths = 100000;
    double dt = 1e-4;      // smallest step, used next to stopping boundaries
    double dt_max = 10.0;  // largest step, used far from them
    double kappa = 4.0;    // required boundary distance in local standard deviations
    double t_max = numerics::kNaN;  // horizon cap; NaN means 50 / q
    std::uint64_t seed = 12345;
    bool antithetic = false;
    // false: fixed step dt, maximum and barriers checked at grid times only
    bool bridge = true;
    int threads = 1;
    int table_nodes = 1024;
};

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;   // 95% normal interval
    double ci_high = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_stopped = 0;
    std::size_t n_censored = 0;
    bool coarse = false;  // stopped fraction below 99% at t_max
};

/// Stop when lo <= S - X <= hi. lo = +inf never stops.
struct DepthBand {
    double lo = numerics::kInf;
    double hi = numerics::kInf;
    bool contains(double d) const noexcept { return d >= lo && d <= hi; }
};

using BandPolicy = std::function<DepthBand(double)>;
using Payoff = std::function<double(double, double)>;

inline BandPolicy threshold_policy(DepthPolicy l) {
    return [l = std::move(l)](double s) { return DepthBand{l(s), numerics::kInf}; };
}

inline BandPolicy immediate_stop_policy() {
    return [](double) { return DepthBand{0.0, numerics::kInf}; };
}

/// Multiplies the lower edge of every band by `factor`.
inline BandPolicy scaled_policy(BandPolicy p, double factor) {
    return [p = std::move(p), factor](double s) {
        DepthBand b = p(s);
        if (std::isfinite(b.lo)) b.lo *= factor;
        return b;
    };
}

/// The solver's optimal strategy as a band policy: ride at levels below the fixed point
/// s_hat that lie in a left-sided continuation set; elsewhere stop at depth l*(S), and also stop while X is at or above x*(S) when the
/// continuation set of the level problem is left-sided.
inline BandPolicy solver_band_policy(const Model& model, const EffectiveReward& h, const SolverOptions& opt = {}) {
    auto sh = find_s_hat(model, h, opt);
    SolverOptions o = opt;
    o.s_hat_hint = sh;
    return [&model, &h, o, sh](double S) {
        auto L = analyze_level(model, h, S, o);
        if (sh && S < *sh && L.side_of_s == ContinuationSide::Left) return DepthBand{};
        auto d = optimal_excursion_depth(model, h, S, o);
        DepthBand b{d.l_star, numerics::kInf};
        if (L.threshold_side == ContinuationSide::Left && L.x_star <= S - d.l_star) b.hi = S - L.x_star;
        return b;
    };
}

/// A band policy tabulated on levels [s_lo, s_hi]; class changes between nodes (ride,
/// finite depth, stop at the maximum) are located by bisection on the exact policy,
/// which is also used above the table.
class PolicyTable {
public:
    enum class Kind { Ride, Finite, Absorb };

    PolicyTable(BandPolicy policy, double s_lo, double s_hi, bool log_spaced, int nodes)
        : policy_(std::move(policy)) {
        nodes = std::max(nodes, 2);
        if (!(s_hi > s_lo)) s_hi = s_lo + std::max(1.0, std::abs(s_lo));
        s_.resize(static_cast<std::size_t>(nodes));
        for (int i = 0; i < nodes; ++i) {
            double t = static_cast<double>(i) / (nodes - 1);
            s_[static_cast<std::size_t>(i)] = log_spaced ? s_lo * std::pow(s_hi / s_lo, t) : s_lo + (s_hi - s_lo) * t;
        }
        s_.front() = s_lo;
        s_.back() = s_hi;
        band_.resize(s_.size());
        kind_.resize(s_.size());
        for (std::size_t i = 0; i < s_.size(); ++i) {
            band_[i] = policy_(s_[i]);
            kind_[i] = kind_of(band_[i]);
        }
        jump_.assign(s_.size() - 1, numerics::kNaN);
        for (std::size_t i = 0; i + 1 < s_.size(); ++i) {
            if (kind_[i] == kind_[i + 1]) continue;
            double a = s_[i];
            double b = s_[i + 1];
            for (int it = 0; it < 60 && b - a > 1e-13 * std::abs(b); ++it) {
                double m = 0.5 * (a + b);
                if (kind_of(policy_(m)) == kind_[i]) a = m;
                else b = m;
            }
            jump_[i] = b;
            jumps_.push_back(b);
        }
        // Sparse table for range maxima of the lower barrier S - lo(S).
        std::size_t n = s_.size();
        std::vector<double> bar(n);
        for (std::size_t i = 0; i < n; ++i) bar[i] = barrier_of(s_[i], band_[i]);
        sparse_.push_back(bar);
        for (std::size_t w = 1; 2 * w <= n; w *= 2) {
            const auto& prev = sparse_.back();
            std::vector<double> next(n - 2 * w + 1);
            for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::max(prev[i], prev[i + w]);
            sparse_.push_back(std::move(next));
        }
    }

    static Kind kind_of(const DepthBand& b) {
        if (!std::isfinite(b.lo)) return Kind::Ride;
        if (b.lo <= 0.0 && b.hi >= 0.0) return Kind::Absorb;
        return Kind::Finite;
    }

    double lo_level() const noexcept { return s_.front(); }
    double hi_level() const noexcept { return s_.back(); }

    DepthBand at(double S) const {
        if (S < s_.front() || S > s_.back()) return policy_(S);
        std::size_t i = interval(S);
        if (!std::isnan(jump_[i])) return S < jump_[i] ? band_[i] : band_[i + 1];
        const DepthBand& a = band_[i];
        const DepthBand& b = band_[i + 1];
        double t = (S - s_[i]) / (s_[i + 1] - s_[i]);
        DepthBand out;
        out.lo = (std::isfinite(a.lo) && std::isfinite(b.lo)) ? a.lo + t * (b.lo - a.lo) : (t < 0.5 ? a.lo : b.lo);
        out.hi = (std::isfinite(a.hi) && std::isfinite(b.hi)) ? a.hi + t * (b.hi - a.hi) : (t < 0.5 ? a.hi : b.hi);
        return out;
    }

    /// Smallest level in (a, b] whose band contains depth 0, if any.
    std::optional<double> first_absorbing(double a, double b) const {
        if (b > s_.back() || a < s_.front()) {
            if (kind_of(at(b)) != Kind::Absorb) return std::nullopt;
            double lo = a;
            double hi = b;
            for (int it = 0; it < 60 && hi - lo > 1e-13 * std::abs(hi); ++it) {
                double m = 0.5 * (lo + hi);
                if (kind_of(at(m)) == Kind::Absorb) hi = m;
                else lo = m;
            }
            return hi;
        }
        for (std::size_t i = interval(a); i + 1 < s_.size() && s_[i] <= b; ++i) {
            if (!std::isnan(jump_[i]) && jump_[i] > a && jump_[i] <= b && kind_[i + 1] == Kind::Absorb) return jump_[i];
            if (std::isnan(jump_[i]) && kind_[i] == Kind::Absorb && s_[i + 1] > a) return std::max(a, s_[i]);
        }
        return std::nullopt;
    }

    /// Next class change strictly above S (inf if none is tabulated).
    double next_change(double S) const {
        auto it = std::upper_bound(jumps_.begin(), jumps_.end(), S);
        return it == jumps_.end() ? numerics::kInf : *it;
    }

    /// Upper bound on S' - lo(S') for S' in [a, b] (-inf if no finite depth applies).
    double max_barrier(double a, double b) const {
        double m = std::max(barrier_of(a, at(a)), barrier_of(b, at(b)));
        double ca = std::clamp(a, s_.front(), s_.back());
        double cb = std::clamp(b, s_.front(), s_.back());
        if (cb < ca) return m;
        std::size_t i = interval(ca);
        std::size_t j = std::min(interval(cb) + 1, s_.size() - 1);
        std::size_t len = j - i + 1;
        std::size_t lvl = 0;
        while ((std::size_t{2} << lvl) <= len) ++lvl;
        std::size_t w = std::size_t{1} << lvl;
        return std::max({m, sparse_[lvl][i], sparse_[lvl][j + 1 - w]});
    }

private:
    static double barrier_of(double S, const DepthBand& b) {
        return kind_of(b) == Kind::Finite ? S - b.lo : -numerics::kInf;
    }

    std::size_t interval(double S) const {
        auto it = std::upper_bound(s_.begin(), s_.end(), S);
        std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
        return std::min(i, s_.size() - 2);
    }

    BandPolicy policy_;
    std::vector<double> s_;
    std::vector<DepthBand> band_;
    std::vector<Kind> kind_;
    std::vector<double> jump_;
    std::vector<double> jumps_;
    std::vector<std::vector<double>> sparse_;
};

namespace detail {

struct PathModel {
    bool exact = true;     // GBM / BM: exact increments and bridge extremes
    bool log_space = false;
    double nu = 0.0;       // drift of the simulated coordinate
    double sig = 1.0;      // volatility of the simulated coordinate
    const Model* model = nullptr;

    double to_z(double x) const { return log_space ? std::log(x) : x; }
    double from_z(double z) const { return log_space ? std::exp(z) : z; }
};

inline PathModel path_model(const Model& m) {
    PathModel p;
    p.model = &m;
    const auto& sp = m.spec();
    switch (m.kind()) {
        case ModelKind::GBM:
            p.log_space = true;
            p.nu = sp.mu - 0.5 * sp.sigma * sp.sigma;
            p.sig = sp.sigma;
            break;
        case ModelKind::ABM:
        case ModelKind::BM:
            p.nu = sp.mu;
            p.sig = sp.sigma;
            break;
        case ModelKind::Custom:
            if (!m.has_dynamics()) throw ModelError("custom model needs drift and volatility callables to simulate");
            p.exact = false;
            break;
    }
    return p;
}

struct PathOutcome {
    double payoff;
    bool stopped;
};

// One path shared by every policy in `tables` (common random numbers).
inline void simulate_path(const PathModel& pm, const Payoff& payoff, const std::vector<const PolicyTable*>& tables,
                          double x0, double s0, const MCConfig& cfg, double t_max, const rng::Key& key,
                          std::uint64_t stream, bool negate, PathOutcome* out) {
    const Model& m = *pm.model;
    const double q = m.q();
    std::size_t k_n = tables.size();
    std::vector<char> active(k_n, 1);
    std::size_t n_active = k_n;
    double t = 0.0;
    double X = x0;
    double Z = pm.to_z(x0);
    double S = s0;
    std::vector<DepthBand> band(k_n);
    const bool bridge = pm.exact && cfg.bridge;
    auto finish = [&](std::size_t k, double x, double s, double tau) {
        out[k] = {std::exp(-q * tau) * payoff(x, s), true};
        active[k] = 0;
        --n_active;
    };
    for (std::uint64_t step = 0;; ++step) {
        double d = S - X;
        for (std::size_t k = 0; k < k_n; ++k) {
            if (!active[k]) continue;
            band[k] = tables[k]->at(S);
            if (band[k].contains(d)) finish(k, X, S, t);
        }
        if (n_active == 0) return;
        if (t >= t_max) {
            for (std::size_t k = 0; k < k_n; ++k) {
                if (active[k]) out[k] = {0.0, false};
            }
            return;
        }

        double delta = cfg.dt;
        double sig_loc = pm.sig;
        if (bridge) {
            auto bound = [&](double dist) {
                if (!(dist > 0.0)) return cfg.dt;
                double r = dist / (cfg.kappa * pm.sig);
                return std::max(cfg.dt, r * r);
            };
            delta = cfg.dt_max;
            double zS = pm.to_z(S);
            for (std::size_t k = 0; k < k_n; ++k) {
                if (!active[k]) continue;
                const DepthBand& b = band[k];
                if (d > b.hi) {
                    delta = std::min(delta, bound(pm.to_z(S - b.hi) - Z));
                    continue;
                }
                double J = tables[k]->next_change(S);
                if (std::isfinite(J)) delta = std::min(delta, bound(pm.to_z(J) - Z));
                if (std::isfinite(b.lo)) {
                    // Largest step whose reachable levels keep their barrier kappa local
                    // deviations away. S only moves once X climbs back to it. The condition is
                    // monotone in the step, so bisect in log.
                    auto fits = [&](double dl) {
                        double reach = pm.from_z(std::max(zS, Z + cfg.kappa * pm.sig * std::sqrt(dl)));
                        double bar = tables[k]->max_barrier(S, reach);
                        if (!std::isfinite(bar)) return true;
                        double gap = pm.log_space ? Z - pm.to_z(std::max(bar, 1e-300)) : Z - bar;
                        return gap > 0.0 && bound(gap) >= dl;
                    };
                    // Steps that cannot lift S only see the current barrier. When that
                    // barrier is nearer than S, no longer step can fit.
                    double g_now = pm.log_space ? (S - b.lo > 0.0 ? Z - pm.to_z(S - b.lo) : numerics::kInf)
                                                : Z - (S - b.lo);
                    double d_now = bound(std::min(g_now, zS - Z));
                    if (d_now >= delta) continue;
                    if (g_now <= zS - Z) {
                        delta = d_now;
                        continue;
                    }
                    if (delta > cfg.dt && !fits(delta)) {
                        double good = std::max(cfg.dt, d_now);
                        double bad = delta;
                        for (int it = 0; it < 12 && bad > 1.5 * good; ++it) {
                            double mid = std::sqrt(good * bad);
                            (fits(mid) ? good : bad) = mid;
                        }
                        delta = good;
                    }
                }
            }
        } else if (!pm.exact) {
            sig_loc = m.volatility(X);
        }
        delta = std::max(std::min(delta, t_max - t), 1e-300);

        auto u = rng::uniforms(key, stream, step);
        double n = std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
        if (negate) n = -n;
        double e;
        double Mz;
        if (pm.exact) {
            e = Z + pm.nu * delta + pm.sig * std::sqrt(delta) * n;
            double de = e - Z;
            Mz = bridge ? 0.5 * (Z + e + std::sqrt(de * de - 2.0 * pm.sig * pm.sig * delta * std::log(u[2])))
                        : std::max(Z, e);
        } else {
            e = X + m.drift(X) * delta + sig_loc * std::sqrt(delta) * n;
            if (!m.contains(e)) e = std::clamp(e, std::nextafter(m.lower(), m.upper()), std::nextafter(m.upper(), m.lower()));
            Mz = std::max(Z, e);
        }
        double M = pm.from_z(Mz);
        double S_new = std::max(S, M);
        double t_new = t + delta;

        for (std::size_t k = 0; k < k_n; ++k) {
            if (!active[k]) continue;
            const DepthBand& b = band[k];
            if (d > b.hi) {
                double A = S - b.hi;
                if (M >= A) finish(k, A, S, t_new);
                continue;
            }
            if (S_new > S) {
                if (auto J = tables[k]->first_absorbing(S, S_new)) {
                    finish(k, *J, *J, t_new);
                    continue;
                }
            }
            DepthBand nb = S_new > S ? tables[k]->at(S_new) : b;
            if (!std::isfinite(nb.lo)) continue;
            double bar = S_new - nb.lo;
            if (pm.log_space && !(bar > 0.0)) continue;
            double gb = pm.to_z(bar);
            bool hit = e <= gb;
            if (!hit && bridge) {
                double from = Z > gb ? Z : Mz;
                double p = std::exp(-2.0 * (from - gb) * (e - gb) / (pm.sig * pm.sig * delta));
                hit = u[3] < p;
            }
            if (hit) finish(k, bar, S_new, t_new);
        }
        Z = e;
        X = pm.from_z(e);
        S = S_new;
        t = t_new;
    }
}

struct MultiRun {
    std::vector<std::vector<double>> payoffs;  // per policy, per sample (antithetic pairs averaged)
    std::vector<std::size_t> stopped;
    std::size_t n_paths = 0;
};

inline double default_t_max(const Model& m, const MCConfig& cfg) {
    if (!std::isnan(cfg.t_max)) return cfg.t_max;
    if (!(m.q() > 0.0)) throw ModelError("t_max must be given when q = 0");
    return 50.0 / m.q();
}

inline void validate(const MCConfig& cfg) {
    if (cfg.n_paths < 1) throw DomainError("MC: n_paths must be >= 1");
    if (!(cfg.dt > 0.0)) throw DomainError("MC: dt must be > 0");
    if (!(cfg.dt_max >= cfg.dt)) throw DomainError("MC: dt_max must be >= dt");
    if (!std::isnan(cfg.t_max) && !(cfg.t_max >= cfg.dt)) throw DomainError("MC: t_max must be >= dt");
}

inline MultiRun run_policies(const Model& model, const Payoff& payoff, const std::vector<BandPolicy>& policies,
                             double x0, double s0, const MCConfig& cfg) {
    validate(cfg);
    if (!model.contains(x0) || !model.contains(s0)) throw DomainError("MC: start outside (l, r)");
    if (x0 > s0) throw DomainError("MC: x0 must not exceed s0");
    PathModel pm = path_model(model);
    double t_max = default_t_max(model, cfg);

    // Level table up to where the maximum is unlikely to reach before the horizon.
    double reach = std::abs(pm.nu) * t_max + cfg.kappa * 2.0 * (pm.exact ? pm.sig : 1.0) * std::sqrt(t_max);
    bool log_levels = pm.log_space && s0 > 0.0;
    double s_hi = log_levels ? s0 * std::exp(std::min(reach, std::log(1e12))) : s0 + std::max(reach, 1.0);
    if (std::isfinite(model.upper())) s_hi = std::min(s_hi, model.upper() - 1e-9 * (model.upper() - s0));
    std::vector<PolicyTable> tables;
    tables.reserve(policies.size());
    for (const auto& p : policies) tables.emplace_back(p, s0, s_hi, log_levels, cfg.table_nodes);
    std::vector<const PolicyTable*> tp;
    for (const auto& t : tables) tp.push_back(&t);

    std::size_t K = policies.size();
    std::size_t n = cfg.n_paths;
    std::vector<std::vector<PathOutcome>> outs(K, std::vector<PathOutcome>(n));
    auto key = rng::make_key(cfg.seed);

    constexpr std::size_t block = 2048;
    std::size_t n_blocks = (n + block - 1) / block;
    numerics::parallel_for(n_blocks, cfg.threads, [&](std::size_t bi) {
        std::vector<PathOutcome> buf(K);
        std::size_t end = std::min(n, (bi + 1) * block);
        for (std::size_t i = bi * block; i < end; ++i) {
            std::uint64_t stream = cfg.antithetic ? i / 2 : i;
            bool neg = cfg.antithetic && (i % 2 == 1);
            simulate_path(pm, payoff, tp, x0, s0, cfg, t_max, key, stream, neg, buf.data());
            for (std::size_t k = 0; k < K; ++k) outs[k][i] = buf[k];
        }
    });

    MultiRun r;
    r.n_paths = n;
    r.payoffs.resize(K);
    r.stopped.assign(K, 0);
    for (std::size_t k = 0; k < K; ++k) {
        auto& v = r.payoffs[k];
        for (std::size_t i = 0; i < n; ++i) r.stopped[k] += outs[k][i].stopped ? 1 : 0;
        if (cfg.antithetic) {
            for (std::size_t i = 0; i + 1 < n; i += 2) v.push_back(0.5 * (outs[k][i].payoff + outs[k][i + 1].payoff));
            if (n % 2 == 1) v.push_back(outs[k][n - 1].payoff);
        } else {
            v.resize(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = outs[k][i].payoff;
        }
    }
    return r;
}

inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
    std::size_t n = v.size();
    // Shift by the first sample so constant samples give their value and zero error exactly.
    double ref = v[0];
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = v[i] - ref;
    double mean = ref + numerics::pairwise_sum(d) / static_cast<double>(n);
    if (n < 2) return {mean, 0.0};
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
    double var = numerics::pairwise_sum(sq) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

inline MCEstimate summarize(const std::vector<double>& v, std::size_t n_paths, std::size_t stopped) {
    auto [mean, se] = mean_and_se(v);
    MCEstimate e;
    e.mean = mean;
    e.std_error = se;
    e.ci_low = mean - 1.959963984540054 * se;
    e.ci_high = mean + 1.959963984540054 * se;
    e.n_paths = n_paths;
    e.n_stopped = stopped;
    e.n_censored = n_paths - stopped;
    e.coarse = static_cast<double>(stopped) < 0.99 * static_cast<double>(n_paths);
    return e;
}

}  // namespace detail

/// Discounted payoff E[e^{-q tau} payoff(X_tau, S_tau)] of the band strategy from (x0, s0).
/// Censored paths (tau > t_max) pay zero.
inline MCEstimate simulate_policy(const Model& model, const Payoff& payoff, const BandPolicy& policy, double x0,
                                  double s0, const MCConfig& cfg) {
    auto r = detail::run_policies(model, payoff, {policy}, x0, s0, cfg);
    return detail::summarize(r.payoffs[0], r.n_paths, r.stopped[0]);
}

inline MCEstimate simulate_policy(const Model& model, const EffectiveReward& h, const BandPolicy& policy, double x0,
                                  double s0, const MCConfig& cfg) {
    return simulate_policy(model, Payoff([&h](double x, double s) { return h(x, s); }), policy, x0, s0, cfg);
}

/// E^x[e^{-q T_z}], to be compared with psi(x)/psi(z) (x <= z) or phi(x)/phi(z) (x >= z).
inline MCEstimate hitting_time_check(const Model& model, double x, double z, const MCConfig& cfg) {
    if (!model.contains(x) || !model.contains(z)) throw DomainError("hitting_time_check: point outside (l, r)");
    BandPolicy p;
    if (x <= z) {
        p = [z](double S) { return S < z ? DepthBand{} : DepthBand{0.0, numerics::kInf}; };
    } else {
        p = [z](double S) { return DepthBand{S - z, numerics::kInf}; };
    }
    return simulate_policy(model, Payoff([](double, double) { return 1.0; }), p, x, x, cfg);
}

struct DominanceEntry {
    std::size_t policy;
    MCEstimate estimate;
    double z_vs_first;  // paired z-score of (policy - first policy); > 0 means better
    std::size_t rank;   // 1 = highest mean
};

struct DominanceReport {
    std::vector<DominanceEntry> entries;  // in input order
    bool first_undominated;               // no policy beats the first one at the 3 sigma level
    bool conclusive;                      // first policy separated from every other at 3 sigma
};

/// Paired (common random numbers) comparison of policies; the first is the reference.
inline DominanceReport policy_dominance_test(const Model& model, const EffectiveReward& h,
                                             const std::vector<BandPolicy>& policies, double x0, double s0,
                                             const MCConfig& cfg) {
    if (policies.size() < 2) throw DomainError("policy_dominance_test needs at least two policies");
    auto r = detail::run_policies(model, Payoff([&h](double x, double s) { return h(x, s); }), policies, x0, s0, cfg);
    DominanceReport rep;
    std::size_t K = policies.size();
    rep.first_undominated = true;
    rep.conclusive = true;
    for (std::size_t k = 0; k < K; ++k) {
        DominanceEntry e;
        e.policy = k;
        e.estimate = detail::summarize(r.payoffs[k], r.n_paths, r.stopped[k]);
        std::vector<double> diff(r.payoffs[k].size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = r.payoffs[k][i] - r.payoffs[0][i];
        auto [md, sd] = detail::mean_and_se(diff);
        e.z_vs_first = sd > 0.0 ? md / sd : (md == 0.0 ? 0.0 : std::copysign(numerics::kInf, md));
        if (k > 0) {
            if (e.z_vs_first > 3.0) rep.first_undominated = false;
            if (e.z_vs_first > -3.0) rep.conclusive = false;
        }
        rep.entries.push_back(e);
    }
    std::vector<std::size_t> order(K);
    for (std::size_t k = 0; k < K; ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rep.entries[a].estimate.mean > rep.entries[b].estimate.mean;
    });
    for (std::size_t i = 0; i < K; ++i) rep.entries[order[i]].rank = i + 1;
    return rep;
}

}  // namespace maxstop
