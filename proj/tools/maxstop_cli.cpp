// maxstop: value functions, threshold strategies and phase diagrams for optimal stopping
// of a diffusion together with its running maximum.
//
// Exit codes: 0 ok, 1 configuration or usage error, 2 solver error, 3 verification failure.

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "maxstop/config.hpp"
#include "maxstop/mc_oracle.hpp"
#include "maxstop/solver.hpp"

namespace fs = std::filesystem;
using namespace maxstop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSolver = 2;
constexpr int kExitVerify = 3;

struct Globals {
    std::string out;
    int threads = 1;
    bool debug_envelope = false;
};

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// Level formatted for file names: shortest text that round-trips.
std::string level_tag(double s) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, s);
    return std::string(buf, r.ptr);
}

fs::path output_dir(const ProblemConfig& cfg, const Globals& g) {
    fs::path dir = g.out.empty() ? fs::path(cfg.output.dir) : fs::path(g.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output directory '" + dir.string() + "' is not writable");
    return dir;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(p, mode);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    return f;
}

struct Problem {
    ProblemConfig cfg;
    Model model;
    EffectiveReward h;
    SolverOptions opt;
};

Problem make_problem(const ProblemConfig& cfg, const Globals& g) {
    try {
        return Problem{cfg, make_model(model_spec(cfg.model)), effective_reward(reward_spec(cfg.reward)),
                       solver_options(cfg, g.threads)};
    } catch (const ModelError& e) {
        throw ConfigError(std::string("[model] ") + e.what());
    } catch (const RewardError& e) {
        throw ConfigError(std::string("[reward] ") + e.what());
    }
}

void write_envelope(const fs::path& dir, const ColumnSolution& col, double s) {
    auto f = open_out(dir / ("envelope_s=" + level_tag(s) + ".csv"));
    f << "kind,y,H,W,contact\n";
    const auto& env = col.envelope();
    for (std::size_t i = 0; i < env.samples().size(); ++i) {
        f << "sample," << num(env.samples()[i].y) << "," << num(env.samples()[i].w) << ","
          << num(env.majorant_at_samples()[i]) << "," << int(env.contact()[i]) << "\n";
    }
    for (const auto& k : env.knots()) f << "knot," << num(k.y) << ",," << num(k.w) << ",\n";
}

int cmd_solve(const ProblemConfig& cfg, const Globals& g, std::optional<double> s_arg) {
    Problem p = make_problem(cfg, g);
    double s = s_arg.value_or(cfg.grid.s);
    if (!p.model.contains(s)) throw ConfigError("level s = " + num(s) + " outside the state space");
    fs::path dir = output_dir(cfg, g);
    auto col = build_column(p.model, p.h, s, p.opt);
    const auto& d = col.diagonal();
    TransformedReward H(p.model, p.h, s);

    auto f = open_out(dir / ("diag_s=" + level_tag(s) + ".csv"));
    f << "x,V,region,H,W\n";
    for (double x : column_x_grid(p.model, s, cfg.grid.x_count)) {
        auto [v, r] = col.evaluate(x);
        double W = col.wave() ? v / p.model.phi(x) : col.W(p.model.F(x));
        f << num(x) << "," << num(v) << "," << to_string(r) << "," << num(H.eta(x)) << "," << num(W) << "\n";
    }
    if (g.debug_envelope && !col.wave()) write_envelope(dir, col, s);

    std::cout << "s = " << num(s) << "\n";
    std::cout << "V(s,s) = " << num(d.v) << "\n";
    std::cout << "l* = " << num(d.l_star) << "\n";
    std::cout << "s - l* = " << num(s - d.l_star) << "\n";
    std::cout << "case = " << to_string(d.diag_case) << "\n";
    std::cout << "x*(s) = " << num(d.x_star) << "\n";
    if (d.diag_case == DiagCase::Wave) std::cout << "s_hat = " << num(d.s_hat) << "\n";
    return kExitOk;
}

void write_summary_header(std::ostream& f, const ProblemConfig& cfg) {
    f << "# maxstop summary\n";
    f << "[problem]\n";
    f << "model = \"" << cfg.model.kind << "\"\n";
    f << "reward = \"" << cfg.reward.family << "\"\n";
    f << "mu = " << num(cfg.model.mu) << "\n";
    f << "sigma = " << num(cfg.model.sigma) << "\n";
    f << "q = " << num(cfg.model.q) << "\n";
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "nan"; }

int cmd_diagram(const ProblemConfig& cfg, const Globals& g) {
    Problem p = make_problem(cfg, g);
    fs::path dir = output_dir(cfg, g);
    auto levels = s_grid(cfg.grid);
    auto vs = phase_diagram(p.model, p.h, levels, cfg.grid.x_count, p.opt);

    auto surf = open_out(dir / "surface.csv");
    surf << "s,x,V,region\n";
    for (std::size_t i = 0; i < vs.s_grid.size(); ++i) {
        for (std::size_t j = 0; j < vs.x_grid[i].size(); ++j) {
            surf << num(vs.s_grid[i]) << "," << num(vs.x_grid[i][j]) << "," << num(vs.values[i][j]) << ","
                 << to_string(vs.regions[i][j]) << "\n";
        }
    }
    auto bnd = open_out(dir / "boundaries.csv");
    bnd << "s,s_minus_lstar,x_star\n";
    for (std::size_t i = 0; i < vs.s_grid.size(); ++i) {
        bnd << num(vs.s_grid[i]) << "," << num(vs.s_minus_lstar[i]) << "," << num(vs.x_star[i]) << "\n";
    }
    if (g.debug_envelope) {
        for (double s : levels) {
            auto col = build_column(p.model, p.h, s, p.opt);
            if (!col.wave()) write_envelope(dir, col, s);
        }
    }
    auto sum = open_out(dir / "summary.toml");
    write_summary_header(sum, cfg);
    sum << "\n[diagram]\n";
    sum << "s_count = " << vs.s_grid.size() << "\n";
    sum << "x_count = " << cfg.grid.x_count << "\n";
    sum << "s_hat = " << opt_num(vs.s_hat) << "\n";
    sum << "s_lower = " << opt_num(vs.s_lower) << "\n";
    sum << "s_upper = " << opt_num(vs.s_upper) << "\n";

    std::cout << "s_hat = " << opt_num(vs.s_hat) << "\n";
    std::cout << "s_lower = " << opt_num(vs.s_lower) << "\n";
    std::cout << "s_upper = " << opt_num(vs.s_upper) << "\n";
    return kExitOk;
}

int cmd_verify(const ProblemConfig& cfg, const Globals& g) {
    Problem p = make_problem(cfg, g);
    fs::path dir = output_dir(cfg, g);
    MCConfig mc = mc_config(cfg.mc, g.threads);

    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < cfg.mc.x0.size(); ++i) points.emplace_back(cfg.mc.x0[i], cfg.mc.s0[i]);
    if (cfg.mc.lower_level) {
        auto vs = phase_diagram(p.model, p.h, s_grid(cfg.grid), 2, p.opt);
        if (!vs.s_lower) throw ConfigError("[mc] lower_level requested but the diagram has no s_lower");
        points.emplace_back(*vs.s_lower, *vs.s_lower);
    }

    auto policy = solver_band_policy(p.model, p.h, p.opt);
    bool failed = false;
    std::ostringstream rep;
    rep << "\n[verify]\n";
    rep << "n_paths = " << mc.n_paths << "\n";
    rep << "dt = " << num(mc.dt) << "\n";
    rep << "seed = \"" << mc.seed << "\"\n";
    std::cout << std::left << std::setw(12) << "x0" << std::setw(12) << "s0" << std::setw(22) << "analytic"
              << std::setw(22) << "mc_mean" << std::setw(16) << "stderr" << std::setw(10) << "z"
              << "censored\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto [x0, s0] = points[i];
        double v = build_column(p.model, p.h, s0, p.opt).evaluate(x0).first;
        auto e = simulate_policy(p.model, p.h, policy, x0, s0, mc);
        double diff = e.mean - v;
        double z = e.std_error > 0.0 ? diff / e.std_error : (diff == 0.0 ? 0.0 : std::copysign(numerics::kInf, diff));
        if (!(std::abs(z) <= 4.0)) failed = true;
        std::cout << std::setw(12) << num(x0).substr(0, 11) << std::setw(12) << num(s0).substr(0, 11)
                  << std::setw(22) << num(v) << std::setw(22) << num(e.mean) << std::setw(16)
                  << num(e.std_error).substr(0, 15) << std::setw(10) << num(z).substr(0, 9) << e.n_censored
                  << (e.coarse ? "  (warning: stopped fraction below 99%)" : "") << "\n";
        rep << "point" << i << " = [" << num(x0) << ", " << num(s0) << "]\n";
        rep << "point" << i << "_analytic = " << num(v) << "\n";
        rep << "point" << i << "_mc_mean = " << num(e.mean) << "\n";
        rep << "point" << i << "_stderr = " << num(e.std_error) << "\n";
        rep << "point" << i << "_z = " << num(z) << "\n";
        rep << "point" << i << "_censored = " << e.n_censored << "\n";
        rep << "point" << i << "_coarse = " << (e.coarse ? "true" : "false") << "\n";
    }

    if (!cfg.mc.perturbations.empty() && !points.empty()) {
        auto [x0, s0] = points.front();
        std::vector<BandPolicy> pols{policy};
        for (double f : cfg.mc.perturbations) pols.push_back(scaled_policy(policy, f));
        auto d = policy_dominance_test(p.model, p.h, pols, x0, s0, mc);
        std::cout << "dominance at (" << num(x0) << ", " << num(s0) << "):\n";
        for (const auto& en : d.entries) {
            std::string name = en.policy == 0 ? "l*" : "l* x " + num(cfg.mc.perturbations[en.policy - 1]);
            std::cout << "  " << std::setw(14) << name << " mean " << num(en.estimate.mean) << "  rank " << en.rank
                      << "  z vs l* " << num(en.z_vs_first) << "\n";
            rep << "dominance" << en.policy << "_rank = " << en.rank << "\n";
            rep << "dominance" << en.policy << "_z = " << num(en.z_vs_first) << "\n";
        }
        std::cout << "  l* undominated: " << (d.first_undominated ? "yes" : "no")
                  << (d.conclusive ? "" : " (inconclusive: confidence intervals overlap)") << "\n";
        rep << "dominance_undominated = " << (d.first_undominated ? "true" : "false") << "\n";
        rep << "dominance_conclusive = " << (d.conclusive ? "true" : "false") << "\n";
    }
    rep << "passed = " << (failed ? "false" : "true") << "\n";

    fs::path sp = dir / "summary.toml";
    bool exists = fs::exists(sp);
    auto sum = open_out(sp, std::ios::app);
    if (!exists) write_summary_header(sum, cfg);
    sum << rep.str();
    return failed ? kExitVerify : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maxstop: optimal stopping of a diffusion and its running maximum"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--out", g.out, "Output directory (overrides [output] dir)");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--debug-envelope", g.debug_envelope, "Also write envelope_s=<s>.csv files");

    std::string config_path;
    std::optional<double> s_level;
    auto* solve = app.add_subcommand("solve", "Diagonal value and one column of the value function");
    solve->add_option("config", config_path, "Problem config file")->required();
    solve->add_option("--s", s_level, "Level s (default: [grid] s)");
    auto* diagram = app.add_subcommand("diagram", "Phase diagram over the [grid] levels");
    diagram->add_option("config", config_path, "Problem config file")->required();
    auto* verify = app.add_subcommand("verify", "Monte Carlo check of the solver's strategy");
    verify->add_option("config", config_path, "Problem config file")->required();
    auto* dump = app.add_subcommand("dump-config", "Print the config in canonical form");
    dump->add_option("config", config_path, "Problem config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        ProblemConfig cfg = load_config(config_path);
        if (g.debug_envelope) cfg.output.debug_envelope = true;
        g.debug_envelope = cfg.output.debug_envelope;
        if (*dump) {
            std::cout << dump_config(cfg);
            return kExitOk;
        }
        if (*solve) return cmd_solve(cfg, g, s_level);
        if (*diagram) return cmd_diagram(cfg, g);
        if (*verify) return cmd_verify(cfg, g);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitOk;
}
