#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

namespace maxstop::numerics {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Bracketing root of f on [a, b]; f(a) and f(b) must differ in sign (or one be zero).
/// Terminates when the bracket width is below rel_tol * max(|a|, |b|, abs_floor).
template <class F>
double find_root(F&& f, double a, double b, double rel_tol = 1e-12, double abs_floor = 1e-300,
                 std::uintmax_t max_iter = 200) {
    double fa = f(a);
    double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0) == (fb > 0)) return kNaN;
    auto tol = [rel_tol, abs_floor](double lo, double hi) {
        return std::abs(hi - lo) <= rel_tol * std::max({std::abs(lo), std::abs(hi), abs_floor});
    };
    auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, max_iter);
    return 0.5 * (r.first + r.second);
}

/// Maximizer of f on [a, b] by Brent's method (golden section with parabolic steps).
template <class F>
std::pair<double, double> maximize(F&& f, double a, double b, int bits = 40) {
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::brent_find_minima([&f](double x) { return -f(x); }, a, b, bits, iters);
    return {r.first, -r.second};
}

namespace detail {

template <class F>
double simpson_step(F& f, double a, double b, double fa, double fm, double fb, double whole,
                    double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m);
    double rm = 0.5 * (m + b);
    double flm = f(lm);
    double frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol || !std::isfinite(delta)) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature with Richardson correction; endpoint values supplied
/// by the caller so adjacent panels can share them.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double fa, double fb, double rel_tol = 1e-8,
                        int max_depth = 30) {
    double fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double tol = rel_tol * std::max(std::abs(whole), 1e-300);
    return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

template <class F>
double adaptive_simpson(F&& f, double a, double b, double rel_tol = 1e-8) {
    return adaptive_simpson(f, a, b, f(a), f(b), rel_tol);
}

/// Pairwise (tree) summation; result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    auto half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Points in (0, 1]: log-spaced from 10^-decades up to 1, plus points 1 - t log-spaced
/// down to 10^-near_one_decades, giving resolution at both ends of a unit interval.
inline std::vector<double> two_sided_unit_grid(int decades, int per_decade, int near_one_decades) {
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>((decades + near_one_decades) * per_decade + 2));
    int n = decades * per_decade;
    for (int j = 0; j <= n; ++j) {
        t.push_back(std::pow(10.0, -decades + static_cast<double>(j) / per_decade));
    }
    int m = near_one_decades * per_decade;
    for (int j = 0; j < m; ++j) {
        double gap = std::pow(10.0, -near_one_decades + static_cast<double>(j) / per_decade);
        if (gap < 0.5) t.push_back(1.0 - gap);
    }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    while (!t.empty() && t.back() > 1.0) t.pop_back();
    if (t.empty() || t.back() != 1.0) t.push_back(1.0);
    return t;
}

/// n points on [a, b], geometrically clustered toward both ends.
inline std::vector<double> clustered_grid(double a, double b, int n, double min_rel_gap = 1e-8) {
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(n) + 2);
    g.push_back(a);
    int half = std::max(1, n / 2);
    double lmin = std::log10(min_rel_gap);
    for (int j = 0; j < half; ++j) {
        double u = std::pow(10.0, lmin + (std::log10(0.5) - lmin) * j / std::max(1, half - 1));
        g.push_back(a + (b - a) * u);
        g.push_back(b - (b - a) * u);
    }
    g.push_back(b);
    std::sort(g.begin(), g.end());
    // The two halves meet at the midpoint up to rounding; keep one copy.
    double tol = 1e-12 * (b - a);
    g.erase(std::unique(g.begin(), g.end(), [tol](double x, double y) { return y - x <= tol; }), g.end());
    g.back() = b;
    return g;
}

/// Runs fn(i) for i in [0, n) on up to `threads` threads; each index is visited once.
/// Exceptions are rethrown on the calling thread (first by index).
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::size_t t = static_cast<std::size_t>(std::max(1, threads));
    t = std::min(t, n);
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t k = 0; k < t; ++k) {
        pool.emplace_back([&, k] {
            for (std::size_t i = k; i < n; i += t) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace maxstop::numerics
