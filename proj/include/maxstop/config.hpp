#pragma once

// Problem configuration: a flat TOML subset.
//
//   file    := { line }
//   line    := ws [ section | pair ] ws [ "#" comment ]
//   section := "[" name "]"
//   pair    := key ws "=" ws value
//   value   := number | "true" | "false" | '"' chars '"' | "[" [ number { "," number } ] "]"
//
// Sections: [model], [reward], [grid], [solver], [mc], [output]. Unknown sections or keys
// are errors so typos do not silently fall back to defaults.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "maxstop/diffusion.hpp"
#include "maxstop/errors.hpp"
#include "maxstop/mc_oracle.hpp"
#include "maxstop/reward.hpp"
#include "maxstop/solver.hpp"

namespace maxstop {

struct ModelConfig {
    std::string kind = "gbm";  // gbm | abm | bm
    double mu = 0.05;
    double sigma = 0.25;
    double q = 0.15;
    std::optional<double> lower;
    std::optional<double> upper;
    std::optional<double> anchor;
    bool operator==(const ModelConfig&) const = default;
};

struct RewardConfig {
    std::string family = "put";  // power_sum | lookback | put | russian
    double a = 0.5;
    double b = 1.0;
    double k = 0.5;
    double K = 5.0;
    bool operator==(const RewardConfig&) const = default;
};

struct GridConfig {
    double s = 5.0;          // level for `solve`
    double s_min = 1.0;      // diagram levels: s_count points on [s_min, s_max]
    double s_max = 40.0;
    int s_count = 200;
    int x_count = 400;       // abscissae per column
    bool operator==(const GridConfig&) const = default;
};

struct SolverConfig {
    int envelope_points = 2048;
    int depth_grid = 256;
    double contact_rtol = 1e-9;
    bool operator==(const SolverConfig&) const = default;
};

struct MCSection {
    std::int64_t n_paths = 100000;
    double dt = 1e-4;
    double dt_max = 10.0;
    std::optional<double> t_max;
    std::uint64_t seed = 12345;
    bool antithetic = false;
    bool bridge = true;
    std::vector<double> x0 = {5.0};
    std::vector<double> s0 = {5.0};
    bool lower_level = false;               // also verify at (s_lower, s_lower)
    std::vector<double> perturbations;      // dominance test: l* scaled by each factor
    bool operator==(const MCSection&) const = default;
};

struct OutputConfig {
    std::string dir = "out";
    bool debug_envelope = false;
    bool operator==(const OutputConfig&) const = default;
};

struct ProblemConfig {
    ModelConfig model;
    RewardConfig reward;
    GridConfig grid;
    SolverConfig solver;
    MCSection mc;
    OutputConfig output;
    bool operator==(const ProblemConfig&) const = default;
};

namespace detail {

using ConfigValue = std::variant<double, bool, std::string, std::vector<double>>;

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_number(const std::string& t, int line) {
    std::string s = t;
    if (s == "inf" || s == "+inf") return numerics::kInf;
    if (s == "-inf") return -numerics::kInf;
    if (!s.empty() && s[0] == '+') s.erase(0, 1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw ConfigError("not a number: '" + t + "'", line);
    }
    return v;
}

// Strips a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        else if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

inline ConfigValue parse_value(const std::string& raw, int line) {
    std::string v = trim(raw);
    if (v.empty()) throw ConfigError("missing value", line);
    if (v == "true") return true;
    if (v == "false") return false;
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw ConfigError("unterminated string", line);
        std::string s = v.substr(1, v.size() - 2);
        if (s.find('"') != std::string::npos) throw ConfigError("quote inside string", line);
        return s;
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw ConfigError("unterminated array", line);
        std::vector<double> out;
        std::string body = trim(v.substr(1, v.size() - 2));
        if (body.empty()) return out;
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_number(trim(item), line));
        return out;
    }
    return parse_number(v, line);
}

struct Entry {
    ConfigValue value;
    int line;
};

using Document = std::map<std::string, std::map<std::string, Entry>>;

inline Document parse_document(std::istream& in) {
    static const std::vector<std::string> sections{"model", "reward", "grid", "solver", "mc", "output"};
    Document doc;
    std::string current;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("malformed section header", line);
            current = trim(s.substr(1, s.size() - 2));
            if (std::find(sections.begin(), sections.end(), current) == sections.end()) {
                throw ConfigError("unknown section [" + current + "]", line);
            }
            if (doc.count(current)) throw ConfigError("duplicate section [" + current + "]", line);
            doc[current];
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", line);
        if (current.empty()) throw ConfigError("key outside any section", line);
        std::string key = trim(s.substr(0, eq));
        if (key.empty()) throw ConfigError("empty key", line);
        auto& sec = doc[current];
        if (sec.count(key)) throw ConfigError("duplicate key '" + key + "'", line);
        sec.emplace(key, Entry{parse_value(s.substr(eq + 1), line), line});
    }
    return doc;
}

// Typed reads that consume keys; leftovers are reported as unknown.
class SectionReader {
public:
    SectionReader(Document& doc, const std::string& name) : name_(name) {
        auto it = doc.find(name);
        if (it != doc.end()) {
            sec_ = &it->second;
            present_ = true;
        }
    }

    bool present() const noexcept { return present_; }

    template <class T>
    void read(const std::string& key, T& out) {
        auto* e = take(key);
        if (!e) return;
        assign(*e, key, out);
    }

    template <class T>
    void read(const std::string& key, std::optional<T>& out) {
        auto* e = take(key);
        if (!e) return;
        T v{};
        assign(*e, key, v);
        out = v;
    }

    void finish() const {
        if (!sec_) return;
        for (const auto& [k, e] : *sec_) {
            if (!used_.count(k)) throw ConfigError("unknown key '" + k + "' in [" + name_ + "]", e.line);
        }
    }

private:
    const Entry* take(const std::string& key) {
        if (!sec_) return nullptr;
        auto it = sec_->find(key);
        if (it == sec_->end()) return nullptr;
        used_[key] = true;
        return &it->second;
    }

    void type_error(const Entry& e, const std::string& key, const char* want) const {
        throw ConfigError("[" + name_ + "] " + key + ": expected " + want, e.line);
    }

    void assign(const Entry& e, const std::string& key, double& out) const {
        if (!std::holds_alternative<double>(e.value)) type_error(e, key, "a number");
        out = std::get<double>(e.value);
    }
    void assign(const Entry& e, const std::string& key, int& out) const {
        double v = 0;
        assign(e, key, v);
        if (v != std::floor(v) || std::abs(v) > 2e9) type_error(e, key, "an integer");
        out = static_cast<int>(v);
    }
    void assign(const Entry& e, const std::string& key, std::int64_t& out) const {
        double v = 0;
        assign(e, key, v);
        if (v != std::floor(v) || std::abs(v) > 9e15) type_error(e, key, "an integer");
        out = static_cast<std::int64_t>(v);
    }
    void assign(const Entry& e, const std::string& key, std::uint64_t& out) const {
        // Seeds may exceed 2^53: accept them as strings of digits too.
        if (std::holds_alternative<std::string>(e.value)) {
            const auto& s = std::get<std::string>(e.value);
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc() || p != s.data() + s.size()) type_error(e, key, "an unsigned integer");
            return;
        }
        double v = 0;
        assign(e, key, v);
        if (v < 0 || v != std::floor(v) || v > 9e15) type_error(e, key, "an unsigned integer");
        out = static_cast<std::uint64_t>(v);
    }
    void assign(const Entry& e, const std::string& key, bool& out) const {
        if (!std::holds_alternative<bool>(e.value)) type_error(e, key, "true or false");
        out = std::get<bool>(e.value);
    }
    void assign(const Entry& e, const std::string& key, std::string& out) const {
        if (!std::holds_alternative<std::string>(e.value)) type_error(e, key, "a quoted string");
        out = std::get<std::string>(e.value);
    }
    void assign(const Entry& e, const std::string& key, std::vector<double>& out) const {
        if (std::holds_alternative<double>(e.value)) {
            out = {std::get<double>(e.value)};
            return;
        }
        if (!std::holds_alternative<std::vector<double>>(e.value)) type_error(e, key, "an array of numbers");
        out = std::get<std::vector<double>>(e.value);
    }

    std::string name_;
    std::map<std::string, Entry>* sec_ = nullptr;
    std::map<std::string, bool> used_;
    bool present_ = false;
};

inline std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string fmt(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s + "]";
}

}  // namespace detail

/// Semantic checks beyond syntax; throws ConfigError.
inline void validate(const ProblemConfig& c) {
    const auto& m = c.model;
    if (m.kind != "gbm" && m.kind != "abm" && m.kind != "bm") {
        throw ConfigError("[model] kind must be \"gbm\", \"abm\" or \"bm\"");
    }
    if (!(m.sigma > 0.0)) throw ConfigError("[model] sigma must be > 0");
    if (!(m.q > 0.0)) throw ConfigError("[model] q must be > 0");
    const auto& r = c.reward.family;
    if (r != "power_sum" && r != "lookback" && r != "put" && r != "russian") {
        throw ConfigError("[reward] family must be power_sum, lookback, put or russian");
    }
    const auto& g = c.grid;
    if (g.s_count < 1) throw ConfigError("[grid] s_count must be >= 1");
    if (g.x_count < 2) throw ConfigError("[grid] x_count must be >= 2");
    if (g.s_count > 1 && !(g.s_max > g.s_min)) throw ConfigError("[grid] s_max must exceed s_min");
    if (c.solver.envelope_points < 16) throw ConfigError("[solver] envelope_points must be >= 16");
    if (c.solver.depth_grid < 8) throw ConfigError("[solver] depth_grid must be >= 8");
    const auto& mc = c.mc;
    if (mc.n_paths < 1) throw ConfigError("[mc] n_paths must be >= 1");
    if (!(mc.dt > 0.0)) throw ConfigError("[mc] dt must be > 0");
    if (!(mc.dt_max >= mc.dt)) throw ConfigError("[mc] dt_max must be >= dt");
    if (mc.t_max && !(*mc.t_max >= mc.dt)) throw ConfigError("[mc] t_max must be >= dt");
    if (mc.x0.size() != mc.s0.size()) throw ConfigError("[mc] x0 and s0 must have equal length");
    for (std::size_t i = 0; i < mc.x0.size(); ++i) {
        if (mc.x0[i] > mc.s0[i]) throw ConfigError("[mc] x0 must not exceed s0");
    }
    if (c.output.dir.empty()) throw ConfigError("[output] dir must not be empty");
}

inline ProblemConfig parse_config(std::istream& in) {
    auto doc = detail::parse_document(in);
    ProblemConfig c;
    {
        detail::SectionReader r(doc, "model");
        if (!r.present()) throw ConfigError("missing [model] section");
        r.read("kind", c.model.kind);
        r.read("mu", c.model.mu);
        r.read("sigma", c.model.sigma);
        r.read("q", c.model.q);
        r.read("lower", c.model.lower);
        r.read("upper", c.model.upper);
        r.read("anchor", c.model.anchor);
        r.finish();
    }
    {
        detail::SectionReader r(doc, "reward");
        if (!r.present()) throw ConfigError("missing [reward] section");
        r.read("family", c.reward.family);
        r.read("a", c.reward.a);
        r.read("b", c.reward.b);
        r.read("k", c.reward.k);
        r.read("K", c.reward.K);
        r.finish();
    }
    {
        detail::SectionReader r(doc, "grid");
        r.read("s", c.grid.s);
        r.read("s_min", c.grid.s_min);
        r.read("s_max", c.grid.s_max);
        r.read("s_count", c.grid.s_count);
        r.read("x_count", c.grid.x_count);
        r.finish();
    }
    {
        detail::SectionReader r(doc, "solver");
        r.read("envelope_points", c.solver.envelope_points);
        r.read("depth_grid", c.solver.depth_grid);
        r.read("contact_rtol", c.solver.contact_rtol);
        r.finish();
    }
    {
        detail::SectionReader r(doc, "mc");
        r.read("n_paths", c.mc.n_paths);
        r.read("dt", c.mc.dt);
        r.read("dt_max", c.mc.dt_max);
        r.read("t_max", c.mc.t_max);
        r.read("seed", c.mc.seed);
        r.read("antithetic", c.mc.antithetic);
        r.read("bridge", c.mc.bridge);
        r.read("x0", c.mc.x0);
        r.read("s0", c.mc.s0);
        r.read("lower_level", c.mc.lower_level);
        r.read("perturbations", c.mc.perturbations);
        r.finish();
    }
    {
        detail::SectionReader r(doc, "output");
        r.read("dir", c.output.dir);
        r.read("debug_envelope", c.output.debug_envelope);
        r.finish();
    }
    validate(c);
    return c;
}

inline ProblemConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline ProblemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Canonical text of a config; parse_config(dump_config(c)) == c.
inline std::string dump_config(const ProblemConfig& c) {
    using detail::fmt;
    auto b = [](bool v) { return v ? "true" : "false"; };
    std::ostringstream o;
    o << "[model]\n";
    o << "kind = \"" << c.model.kind << "\"\n";
    o << "mu = " << fmt(c.model.mu) << "\n";
    o << "sigma = " << fmt(c.model.sigma) << "\n";
    o << "q = " << fmt(c.model.q) << "\n";
    if (c.model.lower) o << "lower = " << fmt(*c.model.lower) << "\n";
    if (c.model.upper) o << "upper = " << fmt(*c.model.upper) << "\n";
    if (c.model.anchor) o << "anchor = " << fmt(*c.model.anchor) << "\n";
    o << "\n[reward]\n";
    o << "family = \"" << c.reward.family << "\"\n";
    o << "a = " << fmt(c.reward.a) << "\n";
    o << "b = " << fmt(c.reward.b) << "\n";
    o << "k = " << fmt(c.reward.k) << "\n";
    o << "K = " << fmt(c.reward.K) << "\n";
    o << "\n[grid]\n";
    o << "s = " << fmt(c.grid.s) << "\n";
    o << "s_min = " << fmt(c.grid.s_min) << "\n";
    o << "s_max = " << fmt(c.grid.s_max) << "\n";
    o << "s_count = " << c.grid.s_count << "\n";
    o << "x_count = " << c.grid.x_count << "\n";
    o << "\n[solver]\n";
    o << "envelope_points = " << c.solver.envelope_points << "\n";
    o << "depth_grid = " << c.solver.depth_grid << "\n";
    o << "contact_rtol = " << fmt(c.solver.contact_rtol) << "\n";
    o << "\n[mc]\n";
    o << "n_paths = " << c.mc.n_paths << "\n";
    o << "dt = " << fmt(c.mc.dt) << "\n";
    o << "dt_max = " << fmt(c.mc.dt_max) << "\n";
    if (c.mc.t_max) o << "t_max = " << fmt(*c.mc.t_max) << "\n";
    o << "seed = \"" << c.mc.seed << "\"\n";
    o << "antithetic = " << b(c.mc.antithetic) << "\n";
    o << "bridge = " << b(c.mc.bridge) << "\n";
    o << "x0 = " << fmt(c.mc.x0) << "\n";
    o << "s0 = " << fmt(c.mc.s0) << "\n";
    o << "lower_level = " << b(c.mc.lower_level) << "\n";
    o << "perturbations = " << fmt(c.mc.perturbations) << "\n";
    o << "\n[output]\n";
    o << "dir = \"" << c.output.dir << "\"\n";
    o << "debug_envelope = " << b(c.output.debug_envelope) << "\n";
    return o.str();
}

// Builders from a parsed config.

inline ModelSpec model_spec(const ModelConfig& m) {
    ModelSpec s;
    s.kind = m.kind == "gbm" ? ModelKind::GBM : (m.kind == "abm" ? ModelKind::ABM : ModelKind::BM);
    s.mu = m.mu;
    s.sigma = m.sigma;
    s.q = m.q;
    if (s.kind == ModelKind::GBM) s.l = 0.0;
    else s.l = -numerics::kInf;
    if (m.lower) s.l = *m.lower;
    if (m.upper) s.r = *m.upper;
    s.anchor = m.anchor;
    return s;
}

inline RewardSpec reward_spec(const RewardConfig& r) {
    if (r.family == "power_sum") return rewards::power_sum(r.a, r.k, r.b, r.K);
    if (r.family == "lookback") return rewards::lookback(r.k);
    if (r.family == "put") return rewards::put(r.K);
    if (r.family == "russian") return rewards::russian();
    throw ConfigError("unknown reward family '" + r.family + "'");
}

inline SolverOptions solver_options(const ProblemConfig& c, int threads = 1) {
    SolverOptions o;
    o.envelope_points = c.solver.envelope_points;
    o.depth_grid = c.solver.depth_grid;
    o.contact_rtol = c.solver.contact_rtol;
    o.threads = threads;
    return o;
}

inline MCConfig mc_config(const MCSection& m, int threads = 1) {
    MCConfig c;
    c.n_paths = static_cast<std::size_t>(m.n_paths);
    c.dt = m.dt;
    c.dt_max = m.dt_max;
    c.t_max = m.t_max.value_or(numerics::kNaN);
    c.seed = m.seed;
    c.antithetic = m.antithetic;
    c.bridge = m.bridge;
    c.threads = threads;
    return c;
}

/// Levels of the diagram: s_count points, uniform on [s_min, s_max] (just s_min if one).
inline std::vector<double> s_grid(const GridConfig& g) {
    std::vector<double> s(static_cast<std::size_t>(g.s_count));
    for (int i = 0; i < g.s_count; ++i) {
        s[static_cast<std::size_t>(i)] =
            g.s_count == 1 ? g.s_min : g.s_min + (g.s_max - g.s_min) * i / (g.s_count - 1);
    }
    return s;
}

}  // namespace maxstop
