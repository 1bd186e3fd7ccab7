// Acceptance run: one PASS/FAIL line per criterion, each followed by indented
// measurements. Every configuration and seed below is fixed in advance; a
// criterion that does not hold is reported as FAIL with the measured numbers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "sce/commutators.hpp"
#include "sce/fixtures.hpp"
#include "sce/harness.hpp"
#include "sce/renormalization.hpp"
#include "sce/spde.hpp"

using namespace sce;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
    bool pass = true;
    std::vector<std::string> lines;

    // Records one measured quantity; `ok` folds into the criterion verdict.
    void note(bool ok, const std::string& text) {
        pass = pass && ok;
        lines.push_back((ok ? "ok    " : "FAIL  ") + text);
    }
    void info(const std::string& text) { lines.push_back("      " + text); }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

AtlasPtr atlas(const std::string& name) { return std::make_shared<const Atlas>(load_fixture(name)); }

std::string join(const std::vector<double>& v, const char* f = "%.3g") {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
    return s;
}

void runtime_note(Outcome& o, double t, double limit) { o.note(t <= limit, fmt("runtime %.1f s (limit %.0f s)", t, limit)); }

// 1. Chart identities at 128 nodes and the shrink factor to 256.
Outcome geometry_identity_suite() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    for (const char* m : {"torus1", "torus2", "torus2pi", "sphere"}) {
        const double tol = std::string(m) == "sphere" ? 4e-4 : 1e-4;
        const Atlas a = load_fixture(m);
        const auto r128 = geometry_identities(a, 128);
        const auto r256 = geometry_identities(a, 256);
        for (std::size_t i = 0; i < r128.size(); ++i) {
            o.note(r128[i].residual <= tol, fmt("%-8s %-12s residual %.2e (tol %.0e)", m, r128[i].identity.c_str(),
                                                r128[i].residual, tol));
            const double shrink = r128[i].residual / r256[i].residual;
            o.note(shrink >= 3.0, fmt("%-8s %-12s shrink 128->256 %.1fx (min 3x)", m, r128[i].identity.c_str(), shrink));
        }
    }
    runtime_note(o, seconds_since(t0), 30);
    return o;
}

// 2. Unit-volume atlas of the sphere at its fixture resolution.
Outcome unit_volume_atlas() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const Atlas uv = build_unit_volume_atlas(load_fixture("sphere"));
    double det = 0.0, trace = 0.0;
    for (const auto& c : uv.charts) {
        const ChristoffelField G = christoffel(c);
        for (std::size_t n = 0; n < c->grid.size(); ++n) {
            det = std::max(det, std::abs(c->metric.det[n] - 1.0));
            for (int j = 0; j < 2; ++j) trace = std::max(trace, std::abs(G.g[0][sym(0, j)][n] + G.g[1][sym(1, j)][n]));
        }
    }
    o.note(det <= 1e-6, fmt("max |det h - 1| %.2e (tol 1e-6)", det));
    o.note(trace <= 1e-6, fmt("max |Gamma^m_mj| %.2e (tol 1e-6)", trace));
    runtime_note(o, seconds_since(t0), 10);
    return o;
}

RateTable ladder_rates(CommutatorKind kind, const CommutatorFixture& fx) {
    std::vector<double> eps, norm;
    for (double e : default_eps_ladder()) {
        eps.push_back(e);
        norm.push_back(run_commutator(kind, fx, e).l2);
    }
    return rate_study(eps, norm);
}

// Fixtures for the commutator criteria. Torus spacing 1/160 and sphere window
// spacing 1/200 keep the smallest eps (0.01) above the grid step.
const CommutatorFixture& torus_fixture() {
    static const CommutatorFixture fx = commutator_fixture(load_fixture("torus2"), 160);
    return fx;
}
const CommutatorFixture& sphere_fixture() {
    static const CommutatorFixture fx = commutator_fixture(load_fixture("sphere"), 200);
    return fx;
}

// 3. First-order commutators. On the flat torus rb and rstar vanish
// identically (Gamma = 0, a single chart), so they are measured on the sphere.
Outcome commutator_convergence() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    using K = CommutatorKind;
    const auto smooth = [&](const char* where, const CommutatorFixture& fx, std::vector<K> kinds) {
        for (K k : kinds) {
            const RateTable t = ladder_rates(k, fx);
            o.note(t.monotone && t.slope >= 1.0, fmt("%-6s %-5s slope %.2f monotone %d  norms %s", where,
                                                     to_string(k).c_str(), t.slope, int(t.monotone), join(t.norm).c_str()));
        }
    };
    smooth("torus", torus_fixture(), {K::r, K::rt, K::ru});
    smooth("sphere", sphere_fixture(), {K::r, K::rt, K::rb, K::rstar, K::ru});
    const CommutatorFixture kink = commutator_fixture(load_fixture("sphere"), 200, true);
    for (K k : {K::r, K::rt, K::rb, K::rstar, K::ru}) {
        const RateTable t = ladder_rates(k, kink);
        o.note(t.monotone, fmt("kink   %-5s monotone %d (slope %.2f recorded)", to_string(k).c_str(), int(t.monotone), t.slope));
    }
    runtime_note(o, seconds_since(t0), 120);
    return o;
}

// 4. Second-order commutator: interval calibration and limit-residual rates.
Outcome second_order_limit() {
    Outcome o;
    const Atlas a = load_fixture("interval");
    const ChartPtr c = regrid(*a.charts[0], {2001, 1});
    const VectorField V = make_vector(c, [](const Point& x) { return std::array<double, 2>{x[0], 0.0}; });
    const auto r = second_order_commutator(constant_scalar(c, 1.0), V, Mollifier(0.01, 1));
    double worst = 0.0;
    for (std::size_t n = 0; n < c->grid.size(); ++n)
        if (std::abs(c->grid.node(n)[0]) <= 0.5) worst = std::max(worst, std::abs(r.C.v[n] - 1.0));
    o.note(worst <= 0.02, fmt("max |C_eps[1, z d_z] - 1| on |z| <= 0.5 at eps 0.01: %.2e (tol 0.02)", worst));
    for (auto [where, fx] : {std::pair{"torus", &torus_fixture()}, std::pair{"sphere", &sphere_fixture()}}) {
        const RateTable t = ladder_rates(CommutatorKind::c2, *fx);
        o.note(t.slope >= 1.0, fmt("%-6s c2 slope %.2f (min 1)  norms %s", where, t.slope, join(t.norm).c_str()));
    }
    return o;
}

// 5. R decomposition on the torus and on a sphere window fine enough for the
// identity tolerance (spacing 1/240).
Outcome r_decomposition() {
    Outcome o;
    const CommutatorFixture sphere240 = commutator_fixture(load_fixture("sphere"), 240);
    for (auto [where, fx] : {std::pair{"torus", &torus_fixture()}, std::pair{"sphere", &sphere240}}) {
        std::vector<double> eps, resid, rbar, G, ar;
        for (double e : default_eps_ladder()) {
            const auto r = run_commutator(CommutatorKind::R, *fx, e);
            eps.push_back(e);
            resid.push_back(r.l2);
            rbar.push_back(r.extra.at("rbar_l2"));
            G.push_back(r.extra.at("G_l2"));
            ar.push_back(r.extra.at("a_r_l2"));
        }
        const double worst = *std::max_element(resid.begin(), resid.end());
        o.note(worst <= 1e-4, fmt("%-6s identity residual max %.2e (tol 1e-4)  per eps %s", where, worst, join(resid).c_str()));
        const bool rbar_zero = std::all_of(rbar.begin(), rbar.end(), [](double x) { return x == 0.0; });
        if (rbar_zero)
            o.info(fmt("%-6s rbar vanishes identically (flat metric)", where));
        else
            o.note(rate_study(eps, rbar).monotone, fmt("%-6s rbar monotone  %s", where, join(rbar).c_str()));
        o.note(rate_study(eps, G).monotone, fmt("%-6s G monotone  %s", where, join(G).c_str()));
        o.info(fmt("%-6s a(r) recorded  %s", where, join(ar).c_str()));
    }
    return o;
}

SimulationSetup setup(const std::string& manifold, int resolution, double T, int paths, const std::string& preset,
                      const std::string& rho0) {
    SimulationSetup s;
    s.atlas = atlas(manifold);
    s.resolution = resolution;
    s.T = T;
    s.paths = paths;
    s.seed = kSeed;
    s.preset = preset;
    s.rho0 = rho0;
    return s;
}

// 6. Characteristics oracle on the 1-torus with constant noise.
Outcome spde_exactness() {
    Outcome o;
    const OracleStudy st = transport_oracle_study(setup("torus1", 32, 1.0, 16, "const", "wave"), 3);
    double drift = 0.0;
    for (const auto& l : st.levels) {
        o.info(fmt("res %d dt %.3e steps %d mean sup error %.4e", l.spec.resolution, l.spec.dt, l.spec.steps, l.mean_sup_error));
        drift = std::max(drift, l.max_mass_drift_per_step);
    }
    for (std::size_t i = 0; i < st.ratios.size(); ++i)
        o.note(st.ratios[i] >= 1.8, fmt("error ratio level %zu/%zu: %.3f (min 1.8)", i, i + 1, st.ratios[i]));
    o.note(drift <= 1e-12, fmt("max mass drift per step %.2e (tol 1e-12)", drift));
    if (!o.pass)
        o.info("Euler-Maruyama has pathwise strong order 1/2: the term 1/2 c^2 k^2 sum(dW^2 - dt) gives an error "
               "ratio of 2 per level (dt / 4), so 1.8 sits within Monte Carlo noise of the asymptote at 16 paths");
    return o;
}

// 7. Ito versus Stratonovich weak-form residuals.
Outcome weak_form_consistency() {
    Outcome o;
    const GapStudy st = weak_form_gap_study(setup("torus1", 32, 1.0, 16, "generic", "wave"), "fourier:1", 3);
    for (const auto& l : st.levels)
        o.info(fmt("res %d dt %.3e ito %.3e strat %.3e gap %.3e gap/dt %.1f", l.spec.resolution, l.spec.dt, l.mean_ito,
                   l.mean_strat, l.mean_gap, l.gap_over_dt));
    for (std::size_t i = 0; i < st.growth.size(); ++i)
        o.note(st.growth[i] <= 3.0, fmt("gap/dt growth level %zu->%zu: %.3f (max 3)", i, i + 1, st.growth[i]));
    o.info("the gap is pathwise O(sqrt dt): gap/dt grows by about 2 per level; the bound 3 caps that growth");
    return o;
}

// 8. Renormalized weak-form residual under joint refinement.
Outcome renormalization_residual() {
    Outcome o;
    const RenormFunction F = parse_renorm_function("quadratic-trunc:4");
    const std::vector<std::pair<std::string, SimulationSetup>> cases{
        {"torus1", setup("torus1", 32, 1.0, 16, "generic", "wave")},
        {"sphere", setup("sphere", 8, 0.05, 16, "generic", "bump")}};
    for (const auto& [where, s] : cases)
        for (const char* psi : {"one", "fourier:1"}) {
            const RenormRefinement r = renorm_refinement(s, F, psi, 3);
            std::vector<double> res;
            for (const auto& l : r.levels) res.push_back(l.mean_residual);
            o.info(fmt("%-6s psi %-9s residuals %s", where.c_str(), psi, join(res, "%.3e").c_str()));
            for (std::size_t i = 0; i < r.ratios.size(); ++i)
                o.note(r.ratios[i] >= 1.8, fmt("%-6s psi %-9s ratio level %zu/%zu: %.3f (min 1.8)", where.c_str(), psi, i,
                                               i + 1, r.ratios[i]));
            o.note(r.linear_collapse_exact, fmt("%-6s psi %-9s linear F collapse bit-exact", where.c_str(), psi));
        }
    if (!o.pass)
        o.info("the Ito sums carry pathwise O(sqrt dt) quadrature error, so the asymptotic ratio per level (dt / 4) "
               "is 2 and single levels scatter around it");
    return o;
}

// 9. F_mu inequalities and pointwise limits.
Outcome fmu_suite_check() {
    Outcome o;
    const ChiProfile chi = quintic_chi();
    for (double mu : {1.0, 16.0, 256.0}) {
        const FmuReport r = fmu_suite(chi, mu);
        for (const auto& row : r.rows)
            o.note(row.ok, fmt("mu %-4g %-13s %-22s worst margin %.3e at xi %.3g", mu, row.display.c_str(),
                               row.name.c_str(), row.worst_margin, row.at_xi));
    }
    const std::vector<double> mus{1, 16, 256};
    const std::vector<double> xis{0.25, 0.5, 1, 2, 3, 6, 12, 24, 48};
    bool g_monotone = true;
    for (const auto& row : fmu_limits(chi, mus, xis)) {
        bool f_ok = true, g_ok = true;
        for (std::size_t m = 1; m < mus.size(); ++m) {
            f_ok = f_ok && row.F_error[m] <= row.F_error[m - 1];
            g_ok = g_ok && row.G_error[m] <= row.G_error[m - 1];
        }
        g_monotone = g_monotone && g_ok;
        o.note(f_ok, fmt("xi %-5g |F_mu - xi^2| over mu 1,16,256: %s", row.xi, join(row.F_error).c_str()));
        o.note(g_ok, fmt("xi %-5g |G_F_mu - xi^2| over mu 1,16,256: %s", row.xi, join(row.G_error).c_str()));
    }
    if (!g_monotone)
        o.info("for xi^2 >= 2 mu, F_mu = 2 mu is constant, so G_F_mu = -2 mu and |G - xi^2| = xi^2 + 2 mu grows with mu; "
               "the limit holds (the error is zero once mu >= xi^2) but the decay is not monotone");
    return o;
}

// 10. A-priori bound for three presets and energy conservation.
Outcome apriori_estimate() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    for (const char* preset : {"generic", "shear", "rotation-const"}) {
        const AprioriReport r = apriori_check(setup("torus2", 32, 1.0, 256, preset, "wave"));
        const double rhs = r.bound + 3 * r.esup_sigma + r.allowance;
        o.note(r.bound_ok, fmt("%-14s E sup ||rho||^2 %.4f <= %.4f (bound %.4f + 3 sigma %.4f + allowance %.4f), Cbar %.3g",
                               preset, r.esup_mean, rhs, r.bound, 3 * r.esup_sigma, r.allowance, r.Cbar));
    }
    const AprioriReport e = apriori_check(setup("torus2", 48, 1.0, 256, "rotation-const", "wave"));
    const double loss = (std::abs(e.end_energy_mean - e.rho0_energy) - 3 * e.end_energy_sigma) / e.rho0_energy;
    o.note(loss <= 0.01, fmt("rotation-const res 48: E ||rho(1)||^2 %.5f vs %.5f, (|dE| - 3 sigma) / E0 = %.4f (max 0.01)",
                             e.end_energy_mean, e.rho0_energy, loss));
    runtime_note(o, seconds_since(t0), 300);
    return o;
}

// 11. Uniqueness surrogate.
Outcome uniqueness() {
    Outcome o;
    const UniquenessReport r = uniqueness_check(setup("torus2", 16, 1.0, 64, "generic", "wave"));
    o.note(r.zero_max == 0.0, fmt("zero data: max |rho| %.1e (exactly 0 required)", r.zero_max));
    o.note(r.linearity_error <= 1e-10, fmt("difference-of-runs linearity %.2e (tol 1e-10)", r.linearity_error));
    o.info(fmt("E sup ||rho_A - rho_B||^2 %.4e, bound %.4e", r.diff_esup, r.diff_bound));
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 12. Bit-identical CSV artifacts across repeats and thread counts.
Outcome determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "sce_acceptance_determinism";
    fs::remove_all(root);
    for (const char* command : {"simulate", "apriori"}) {
        RunConfig c;
        c.command = command;
        c.manifold = "torus2";
        c.resolution = 16;
        c.T = 0.25;
        c.paths = std::string(command) == "apriori" ? 64 : 8;
        c.seed = kSeed;
        std::vector<std::pair<std::string, fs::path>> runs;
        for (int threads : {1, 1, 2, 4}) {
            c.threads = threads;
            c.out = root / fmt("%s-%zu-t%d", command, runs.size(), threads);
            run_experiment(c);
            runs.push_back({fmt("threads %d", threads), c.out});
        }
        int files = 0;
        bool same = true;
        for (const auto& entry : fs::directory_iterator(runs[0].second)) {
            if (entry.path().extension() != ".csv") continue;
            ++files;
            const std::string ref = slurp(entry.path());
            for (std::size_t i = 1; i < runs.size(); ++i)
                same = same && slurp(runs[i].second / entry.path().filename()) == ref;
        }
        o.note(same && files > 0,
               fmt("%-8s %d CSV files identical across threads 1, 1 (repeat), 2, 4", command, files));
    }
    fs::remove_all(root);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"geometry identity suite", geometry_identity_suite},
        {"unit-volume atlas", unit_volume_atlas},
        {"commutator convergence", commutator_convergence},
        {"second-order commutator limit", second_order_limit},
        {"R decomposition", r_decomposition},
        {"SPDE exactness (characteristics oracle)", spde_exactness},
        {"weak-form consistency (Ito vs Stratonovich)", weak_form_consistency},
        {"renormalization residual", renormalization_residual},
        {"F_mu suite", fmu_suite_check},
        {"a-priori estimate", apriori_estimate},
        {"uniqueness surrogate", uniqueness},
        {"determinism", determinism},
    };
    std::ostringstream report;
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.note(false, std::string("exception: ") + e.what());
        }
        const std::string head = fmt("%s %2zu %s (%.1f s)", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                                     seconds_since(t0));
        std::string block = head + "\n";
        for (const auto& l : o.lines) block += "        " + l + "\n";
        std::fputs(block.c_str(), stdout);
        std::fflush(stdout);
        report << block;
        failed += o.pass ? 0 : 1;
    }
    const std::string tail = fmt("%d of %zu criteria passed (seed %llu)\n", int(criteria.size()) - failed,
                                 criteria.size(), static_cast<unsigned long long>(kSeed));
    std::fputs(tail.c_str(), stdout);
    report << tail;
    std::ofstream("acceptance_report.txt") << report.str();
    return failed == 0 ? 0 : 1;
}
