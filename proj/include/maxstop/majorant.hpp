#pragma once

// Smallest concave majorants of sampled curves in transformed coordinates (y = F(x),
// w = value / phi) and tangent lines from a point.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxstop/errors.hpp"
#include "maxstop/numerics.hpp"

namespace maxstop {

struct Point {
    double y;
    double w;
};

struct EnvelopeOptions {
    double contact_rtol = 1e-9;       // |W - H| <= rtol * (1 + |W|) counts as contact
    std::optional<double> tail_slope;  // continue right of the last sample with this slope
};

/// Maximal run of samples with the same contact status.
struct SampleRun {
    std::size_t first;
    std::size_t last;
    bool contact;
};

class PiecewiseMajorant {
public:
    PiecewiseMajorant() = default;

    /// Hull vertices in ascending y.
    const std::vector<Point>& knots() const noexcept { return knots_; }
    /// Underlying samples (pins excluded) with the majorant value and contact flag.
    const std::vector<Point>& samples() const noexcept { return samples_; }
    const std::vector<double>& majorant_at_samples() const noexcept { return w_; }
    const std::vector<char>& contact() const noexcept { return contact_; }
    std::optional<double> tail_slope() const noexcept { return tail_; }

    double y_min() const noexcept { return knots_.front().y; }
    double y_max() const noexcept { return tail_ ? numerics::kInf : knots_.back().y; }

    /// Index of the segment [knots[i], knots[i+1]] containing y; knots.size() - 1 on the tail.
    std::size_t segment(double y) const {
        if (y < knots_.front().y || y > y_max()) {
            throw DomainError("majorant evaluated outside its domain at y = " + std::to_string(y));
        }
        auto it = std::upper_bound(knots_.begin(), knots_.end(), y,
                                   [](double v, const Point& p) { return v < p.y; });
        std::size_t i = static_cast<std::size_t>(it - knots_.begin());
        if (i == 0) return 0;
        if (i >= knots_.size()) return (tail_ && y > knots_.back().y) ? knots_.size() - 1 : knots_.size() - 2;
        return i - 1;
    }

    double slope(std::size_t seg) const {
        if (seg + 1 >= knots_.size()) return tail_.value_or(0.0);
        const Point& a = knots_[seg];
        const Point& b = knots_[seg + 1];
        return (b.w - a.w) / (b.y - a.y);
    }

    double operator()(double y) const {
        if (knots_.size() == 1) {
            if (y == knots_[0].y) return knots_[0].w;
        }
        std::size_t i = segment(y);
        const Point& a = knots_[i];
        if (y == a.y) return a.w;
        return a.w + slope(i) * (y - a.y);
    }

    /// Replace the contact flags (callers judging contact on a different scale).
    void set_contact(std::vector<char> c) {
        if (c.size() != samples_.size()) throw DomainError("set_contact: size mismatch");
        contact_ = std::move(c);
    }

    /// Runs of consecutive samples sharing the contact flag.
    std::vector<SampleRun> runs() const {
        std::vector<SampleRun> out;
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            bool c = contact_[i] != 0;
            if (out.empty() || out.back().contact != c) out.push_back({i, i, c});
            else out.back().last = i;
        }
        return out;
    }

    /// Contact intervals [y_first, y_last] of maximal contact runs.
    std::vector<std::pair<double, double>> contact_intervals() const {
        std::vector<std::pair<double, double>> out;
        for (const auto& r : runs()) {
            if (r.contact) out.emplace_back(samples_[r.first].y, samples_[r.last].y);
        }
        return out;
    }

private:
    friend PiecewiseMajorant upper_concave_envelope(const std::vector<Point>&, const std::vector<Point>&,
                                                    const EnvelopeOptions&);
    std::vector<Point> knots_;
    std::vector<Point> samples_;
    std::vector<double> w_;
    std::vector<char> contact_;
    std::optional<double> tail_;
};

namespace detail {

// > 0 when b lies strictly above the chord o -> c (turning right in the (y, w) plane).
inline double turn(const Point& o, const Point& b, const Point& c) {
    return (b.y - o.y) * (c.w - o.w) - (b.w - o.w) * (c.y - o.y);
}

}  // namespace detail

/// Upper concave hull (monotone chain) of samples and pins. With two or more pins the
/// domain is restricted to [first pin, last pin]; with a tail slope the envelope extends
/// to +inf as a ray, dropping trailing vertices that the ray dominates.
inline PiecewiseMajorant upper_concave_envelope(const std::vector<Point>& samples, const std::vector<Point>& pins,
                                                const EnvelopeOptions& opt = {}) {
    if (samples.empty() && pins.empty()) throw DomainError("upper_concave_envelope: no points");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(samples[i].y) || !std::isfinite(samples[i].w)) {
            throw DomainError("upper_concave_envelope: non-finite sample");
        }
        if (i > 0 && !(samples[i].y > samples[i - 1].y)) {
            throw DomainError("upper_concave_envelope: samples must be strictly ascending");
        }
    }
    std::vector<Point> sorted_pins = pins;
    std::sort(sorted_pins.begin(), sorted_pins.end(), [](const Point& a, const Point& b) { return a.y < b.y; });

    double lo = -numerics::kInf;
    double hi = numerics::kInf;
    if (sorted_pins.size() >= 2) {
        lo = sorted_pins.front().y;
        hi = sorted_pins.back().y;
    }

    // Merge pins and in-domain samples; a pin replaces a sample at the same abscissa.
    std::vector<Point> pts;
    std::vector<Point> kept;
    pts.reserve(samples.size() + pins.size());
    std::size_t j = 0;
    for (const Point& s : samples) {
        if (s.y < lo || s.y > hi) continue;
        while (j < sorted_pins.size() && sorted_pins[j].y < s.y) pts.push_back(sorted_pins[j++]);
        kept.push_back(s);
        if (j < sorted_pins.size() && sorted_pins[j].y == s.y) {
            const Point& p = sorted_pins[j++];
            if (p.w < s.w - opt.contact_rtol * (1.0 + std::abs(s.w))) {
                throw InconsistentPin("pin (" + std::to_string(p.y) + ", " + std::to_string(p.w) +
                                      ") lies below the function value " + std::to_string(s.w));
            }
            pts.push_back(p);
            continue;
        }
        pts.push_back(s);
    }
    while (j < sorted_pins.size()) pts.push_back(sorted_pins[j++]);

    std::vector<Point> hull;
    hull.reserve(pts.size());
    for (const Point& p : pts) {
        while (hull.size() >= 2 && detail::turn(hull[hull.size() - 2], hull.back(), p) >= 0.0) hull.pop_back();
        hull.push_back(p);
    }

    PiecewiseMajorant m;
    if (opt.tail_slope) {
        double t = *opt.tail_slope;
        while (hull.size() >= 2) {
            const Point& a = hull[hull.size() - 2];
            const Point& b = hull.back();
            if ((b.w - a.w) / (b.y - a.y) < t) hull.pop_back();
            else break;
        }
        m.tail_ = t;
    }
    m.knots_ = std::move(hull);
    m.samples_ = std::move(kept);
    m.w_.resize(m.samples_.size());
    m.contact_.resize(m.samples_.size());
    for (std::size_t i = 0; i < m.samples_.size(); ++i) {
        double w = m(m.samples_[i].y);
        m.w_[i] = w;
        m.contact_[i] = std::abs(w - m.samples_[i].w) <= opt.contact_rtol * (1.0 + std::abs(w)) ? 1 : 0;
    }
    return m;
}

enum class Side { Left, Right };

struct Tangency {
    double y;
    double slope;
    bool degenerate;  // residual vanishes on the whole bracket (curve linear through p)
};

/// Tangent line from p = (y0, w0) to a curve with value(y) and derivative(y): the root
/// of H(y) + H'(y)(y0 - y) - w0 in [lo, hi], which must lie on the requested side of y0.
/// The residual is scanned on `scan` points; with several sign changes the largest
/// root wins. Returns nullopt if there is no sign change.
template <class Curve>
std::optional<Tangency> try_tangent_from_point(const Curve& H, Point p, Side side, double lo, double hi,
                                               int scan = 256, double xtol = 1e-10) {
    if (side == Side::Left) hi = std::min(hi, p.y);
    else lo = std::max(lo, p.y);
    if (!(lo < hi)) return std::nullopt;
    auto res = [&](double y) { return H.value(y) + H.derivative(y) * (p.y - y) - p.w; };
    bool logscale = lo > 0.0 && hi / lo > 100.0;
    std::vector<double> ys(static_cast<std::size_t>(scan) + 1);
    for (int i = 0; i <= scan; ++i) {
        double t = static_cast<double>(i) / scan;
        ys[static_cast<std::size_t>(i)] = logscale ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
    }
    ys.front() = lo;
    ys.back() = hi;
    std::vector<double> rs(ys.size());
    double rmax = 0.0;
    double wscale = std::abs(p.w);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        rs[i] = res(ys[i]);
        rmax = std::max(rmax, std::abs(rs[i]));
        wscale = std::max(wscale, std::abs(H.value(ys[i])));
    }
    if (rmax <= 1e-12 * (1.0 + wscale)) {
        double mid = 0.5 * (lo + hi);
        return Tangency{mid, H.derivative(mid), true};
    }
    for (std::size_t i = ys.size() - 1; i > 0; --i) {
        double a = ys[i - 1];
        double b = ys[i];
        if (rs[i] == 0.0) return Tangency{b, H.derivative(b), false};
        if ((rs[i - 1] > 0.0) != (rs[i] > 0.0) && rs[i - 1] != 0.0) {
            double y = numerics::find_root(res, a, b, xtol);
            return Tangency{y, H.derivative(y), false};
        }
    }
    if (rs.front() == 0.0) return Tangency{ys.front(), H.derivative(ys.front()), false};
    return std::nullopt;
}

template <class Curve>
Tangency tangent_from_point(const Curve& H, Point p, Side side, double lo, double hi, int scan = 256,
                            double xtol = 1e-10) {
    auto t = try_tangent_from_point(H, p, side, lo, hi, scan, xtol);
    if (!t) {
        throw NoTangency("no tangency from (" + std::to_string(p.y) + ", " + std::to_string(p.w) +
                         ") in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return *t;
}

}  // namespace maxstop
