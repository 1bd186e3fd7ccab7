#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sce/errors.hpp"
#include "sce/harness.hpp"

namespace {

// Flag values; only flags given on the command line override the config file.
struct Flags {
    std::string config;
    std::string manifold, out, kind, preset, rho0, F, psi, eps_ladder;
    int resolution = 0, paths = 0, levels = 0, threads = 0;
    double dt = 0.0, T = 0.0, cfl = 0.0, margin = 0.0;
    std::uint64_t seed = 0;
    bool kink = false, uniqueness = false;
};

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "key = value config file; flags override it");
    app->add_option("--manifold", f.manifold, "built-in fixture name or fixture file");
    app->add_option("--resolution", f.resolution, "nodes per axis");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--threads", f.threads, "worker threads");
}

void add_sim(CLI::App* app, Flags& f) {
    app->add_option("--dt", f.dt, "time step (model time); automatic when omitted");
    app->add_option("--T,--t-final", f.T, "final time (model time)");
    app->add_option("--paths", f.paths, "Monte Carlo paths");
    app->add_option("--seed", f.seed, "run seed (required)");
    app->add_option("--coeff-preset", f.preset, "coefficient preset");
    app->add_option("--rho0", f.rho0, "initial density: wave, bump or zero");
    app->add_option("--cfl", f.cfl, "fraction of dt_max used by the automatic step");
}

std::vector<double> split_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw sce::ConfigInvalid("--eps-ladder: cannot parse '" + tok + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

sce::RunConfig build_config(const std::string& command, CLI::App* app, const Flags& f) {
    sce::RunConfig c = f.config.empty() ? sce::RunConfig{} : sce::load_config(f.config);
    c.command = command;
    auto given = [&](const char* name) {
        const auto* opt = app->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--manifold")) c.manifold = f.manifold;
    if (given("--resolution")) c.resolution = f.resolution;
    if (given("--out")) c.out = f.out;
    if (given("--threads")) c.threads = f.threads;
    if (given("--margin")) c.margin = f.margin;
    if (given("--kind")) c.kind = f.kind;
    if (given("--kink")) c.kink = f.kink;
    if (given("--eps-ladder")) c.eps_ladder = split_list(f.eps_ladder);
    if (given("--dt")) c.dt = f.dt;
    if (given("--T")) c.T = f.T;
    if (given("--paths")) c.paths = f.paths;
    if (given("--seed")) c.seed = f.seed;
    if (given("--coeff-preset")) c.coeff_preset = f.preset;
    if (given("--rho0")) c.rho0 = f.rho0;
    if (given("--cfl")) c.cfl = f.cfl;
    if (given("--F")) c.F = f.F;
    if (given("--psi")) c.psi = f.psi;
    if (given("--levels")) c.levels = f.levels;
    if (given("--uniqueness")) c.uniqueness = f.uniqueness;
    return c;
}

int run(const sce::RunConfig& c) {
    const sce::RunManifest m = sce::run_experiment(c);
    for (const auto& k : m.checks)
        std::printf("%s %-28s value=%s tol=%s %s\n", k.passed ? "PASS" : "FAIL", k.name.c_str(),
                    sce::format_double(k.value).c_str(), sce::format_double(k.tolerance).c_str(), k.detail.c_str());
    std::printf("manifest: %s\n", (c.out / "manifest.json").string().c_str());
    return sce::exit_code(m);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic continuity equations on chart-based manifolds"};
    app.require_subcommand(1);
    Flags f;

    auto* atlas = app.add_subcommand("atlas-check", "partition of unity, unit-volume and geometry identity checks");
    add_common(atlas, f);
    atlas->add_option("--margin", f.margin, "partition margin in chart coordinates");

    auto* comm = app.add_subcommand("commutator-rate", "commutator norms along the eps ladder");
    add_common(comm, f);
    comm->add_option("--kind", f.kind, "r, rt, rb, rstar, ru, c2 or R");
    comm->add_option("--eps-ladder", f.eps_ladder, "comma-separated eps values");
    comm->add_flag("--kink", f.kink, "use the kink density fixture");

    auto* sim = app.add_subcommand("simulate", "integrate the Ito equation and write per-path trajectories");
    add_common(sim, f);
    add_sim(sim, f);

    auto* ren = app.add_subcommand("renorm-check", "renormalized weak-form residual under joint refinement");
    add_common(ren, f);
    add_sim(ren, f);
    ren->add_option("--F", f.F, "linear, quadratic-trunc:mu or custom-spline:file[:mu]");
    ren->add_option("--psi", f.psi, "one or fourier:k");
    ren->add_option("--levels", f.levels, "refinement levels");

    auto* apr = app.add_subcommand("apriori", "E sup ||rho||^2 against the a-priori bound");
    add_common(apr, f);
    add_sim(apr, f);
    apr->add_flag("--uniqueness", f.uniqueness, "also run the uniqueness surrogate");

    std::string plot_dir;
    auto* plots = app.add_subcommand("emit-plots", "write matplotlib scripts for the CSVs in a report directory");
    plots->add_option("dir", plot_dir, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (plots->parsed()) {
            for (const auto& p : sce::emit_plots(plot_dir)) std::printf("%s\n", p.string().c_str());
            return 0;
        }
        for (auto* sub : {atlas, comm, sim, ren, apr})
            if (sub->parsed()) return run(build_config(sub->get_name(), sub, f));
    } catch (const sce::MissingArtifacts& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return sce::exit_code(e);
    }
    return 2;
}
