#include "sce/renormalization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sce/errors.hpp"

namespace sce {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Standard error of the sample mean.
double std_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Sup of |f| over [lo, hi] by dense sampling.
double dense_sup(const std::function<double(double)>& f, double lo, double hi, int n = 20001) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m = std::max(m, std::abs(f(lo + (hi - lo) * i / (n - 1))));
    return m;
}

void finish_profile(ChiProfile& p) {
    p.A0 = std::max(1.0, dense_sup(p.d1, 1.0, 2.0));
    p.A1 = dense_sup(p.d2, 1.0, 2.0);
}

struct Cubic {
    std::vector<double> x, y, M;  // knots, values, second derivatives

    // Clamped spline with end slopes s0 and s1.
    Cubic(std::vector<double> xs, std::vector<double> ys, double s0, double s1) : x(std::move(xs)), y(std::move(ys)) {
        const std::size_t n = x.size();
        M.assign(n, 0.0);
        std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == 0) {
                const double h = x[1] - x[0];
                b[i] = h / 3.0;
                c[i] = h / 6.0;
                d[i] = (y[1] - y[0]) / h - s0;
            } else if (i + 1 == n) {
                const double h = x[i] - x[i - 1];
                a[i] = h / 6.0;
                b[i] = h / 3.0;
                d[i] = s1 - (y[i] - y[i - 1]) / h;
            } else {
                const double hl = x[i] - x[i - 1], hr = x[i + 1] - x[i];
                a[i] = hl / 6.0;
                b[i] = (hl + hr) / 3.0;
                c[i] = hr / 6.0;
                d[i] = (y[i + 1] - y[i]) / hr - (y[i] - y[i - 1]) / hl;
            }
        }
        for (std::size_t i = 1; i < n; ++i) {  // Thomas algorithm
            const double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        M[n - 1] = d[n - 1] / b[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) M[i] = (d[i] - c[i] * M[i + 1]) / b[i];
    }

    std::size_t seg(double s) const {
        std::size_t i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), s) - x.begin());
        return std::clamp<std::size_t>(i == 0 ? 0 : i - 1, 0, x.size() - 2);
    }
    double value(double s) const {
        const std::size_t i = seg(s);
        const double h = x[i + 1] - x[i], A = (x[i + 1] - s) / h, B = (s - x[i]) / h;
        return A * y[i] + B * y[i + 1] + ((A * A * A - A) * M[i] + (B * B * B - B) * M[i + 1]) * h * h / 6.0;
    }
    double d1(double s) const {
        const std::size_t i = seg(s);
        const double h = x[i + 1] - x[i], A = (x[i + 1] - s) / h, B = (s - x[i]) / h;
        return (y[i + 1] - y[i]) / h + (-(3.0 * A * A - 1.0) * M[i] + (3.0 * B * B - 1.0) * M[i + 1]) * h / 6.0;
    }
    double d2(double s) const {
        const std::size_t i = seg(s);
        const double h = x[i + 1] - x[i], A = (x[i + 1] - s) / h, B = (s - x[i]) / h;
        return A * M[i] + B * M[i + 1];
    }
};

}  // namespace

// ---- profiles and functions ------------------------------------------------

ChiProfile quintic_chi() {
    ChiProfile p;
    p.name = "quintic";
    p.chi = [](double s) {
        if (s <= 1.0) return s;
        if (s >= 2.0) return 2.0;
        const double t = s - 1.0;
        return 1.0 + t + t * t * t * (4.0 + t * (-7.0 + 3.0 * t));
    };
    p.d1 = [](double s) {
        if (s <= 1.0) return 1.0;
        if (s >= 2.0) return 0.0;
        const double t = s - 1.0;
        return 1.0 + t * t * (12.0 + t * (-28.0 + 15.0 * t));
    };
    p.d2 = [](double s) {
        if (s <= 1.0 || s >= 2.0) return 0.0;
        const double t = s - 1.0;
        return t * (24.0 + t * (-84.0 + 60.0 * t));
    };
    p.breakpoints = {1.0, 2.0};
    finish_profile(p);
    return p;
}

ChiProfile spline_chi(std::vector<std::pair<double, double>> knots) {
    std::sort(knots.begin(), knots.end());
    std::vector<double> xs{1.0}, ys{1.0};
    for (const auto& [s, v] : knots) {
        if (!(s > 1.0 && s < 2.0) || !(v > 1.0 && v < 2.0))
            throw ConfigInvalid("spline knots must lie in (1, 2) x (1, 2)");
        if (s <= xs.back() + 1e-9) throw ConfigInvalid("spline knots must be distinct");
        xs.push_back(s);
        ys.push_back(v);
    }
    xs.push_back(2.0);
    ys.push_back(2.0);
    auto sp = std::make_shared<const Cubic>(xs, ys, 1.0, 0.0);
    ChiProfile p;
    p.name = "custom-spline";
    p.chi = [sp](double s) { return s <= 1.0 ? s : (s >= 2.0 ? 2.0 : sp->value(s)); };
    p.d1 = [sp](double s) { return s <= 1.0 ? 1.0 : (s >= 2.0 ? 0.0 : sp->d1(s)); };
    p.d2 = [sp](double s) { return (s <= 1.0 || s >= 2.0) ? 0.0 : sp->d2(s); };
    p.breakpoints = xs;
    for (int i = 1; i < 2000; ++i) {
        const double s = 1.0 + i / 2000.0;
        if (p.d1(s) < 0.0) throw ConfigInvalid("spline profile is not increasing near s = " + std::to_string(s));
        const double v = p.chi(s);
        if (!(v > 1.0 && v < 2.0)) throw ConfigInvalid("spline profile leaves (1, 2) near s = " + std::to_string(s));
    }
    finish_profile(p);
    return p;
}

ChiProfile load_spline_chi(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigInvalid("cannot read spline file " + file.string());
    std::vector<std::pair<double, double>> knots;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ss(line);
        double s = 0.0, v = 0.0;
        if (!(ss >> s)) continue;
        if (!(ss >> v)) throw ConfigInvalid(file.string() + ":" + std::to_string(lineno) + ": expected 's chi'");
        knots.emplace_back(s, v);
    }
    return spline_chi(std::move(knots));
}

RenormFunction fmu_function(const ChiProfile& chi, double mu) {
    if (!(mu > 0.0)) throw ConfigInvalid("mu must be positive");
    RenormFunction f;
    std::ostringstream name;
    name << "F_mu[" << chi.name << ", mu=" << mu << "]";
    f.name = name.str();
    f.F = [c = chi.chi, mu](double x) { return mu * c(x * x / mu); };
    f.dF = [c = chi.d1, mu](double x) { return 2.0 * x * c(x * x / mu); };
    f.d2F = [c1 = chi.d1, c2 = chi.d2, mu](double x) {
        const double s = x * x / mu;
        return 2.0 * c1(s) + 4.0 * s * c2(s);
    };
    f.certificate = BoundednessCertificate{-kInf, kInf, 2.0 * mu, 2.0 * std::sqrt(2.0) * chi.A0 * std::sqrt(mu),
                                           8.0 * chi.A1 + 2.0 * chi.A0};
    for (double b : chi.breakpoints) f.breakpoints.push_back(std::sqrt(b * mu));
    return f;
}

RenormFunction quadratic_function() {
    RenormFunction f;
    f.name = "quadratic";
    f.F = [](double x) { return x * x; };
    f.dF = [](double x) { return 2.0 * x; };
    f.d2F = [](double) { return 2.0; };
    return f;
}

RenormFunction constant_function(double c) {
    RenormFunction f;
    f.name = "constant";
    f.F = [c](double) { return c; };
    f.dF = [](double) { return 0.0; };
    f.d2F = [](double) { return 0.0; };
    f.certificate = BoundednessCertificate{-kInf, kInf, std::abs(c), 0.0, 0.0};
    return f;
}

RenormFunction parse_renorm_function(const std::string& spec, double default_mu) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty()) throw ConfigInvalid("bad number '" + s + "' in F spec '" + spec + "'");
        return v;
    };
    if (spec == "linear") return linear_function();
    if (spec == "quadratic") return quadratic_function();
    const std::string trunc = "quadratic-trunc", custom = "custom-spline:";
    if (spec == trunc) return fmu_function(quintic_chi(), default_mu);
    if (spec.rfind(trunc + ":", 0) == 0) return fmu_function(quintic_chi(), number(spec.substr(trunc.size() + 1)));
    if (spec.rfind(custom, 0) == 0) {
        std::string rest = spec.substr(custom.size());
        double mu = default_mu;
        if (auto colon = rest.rfind(':'); colon != std::string::npos) {
            const std::string tail = rest.substr(colon + 1);
            std::size_t used = 0;
            try {
                mu = std::stod(tail, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == tail.size() && !tail.empty()) rest = rest.substr(0, colon);
            else mu = default_mu;
        }
        return fmu_function(load_spline_chi(rest), mu);
    }
    throw ConfigInvalid("unknown F '" + spec + "' (linear, quadratic-trunc:mu, custom-spline:file[:mu])");
}

std::vector<double> gf_eval(const RenormFunction& F, const std::vector<double>& xi) {
    std::vector<double> out(xi.size());
    for (std::size_t k = 0; k < xi.size(); ++k) out[k] = gf(F, xi[k]);
    return out;
}

DerivativeCheck check_derivatives(const RenormFunction& F, double lo, double hi, int probes, double tol) {
    DerivativeCheck r;
    const double eta = 1e-5 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)) / 16.0);
    for (int j = 0; j < probes; ++j) {
        const double x = lo + (j + 0.5) * (hi - lo) / probes;
        bool near = false;
        for (double b : F.breakpoints) near = near || std::abs(std::abs(x) - b) < 2.0 * eta;
        if (near) continue;
        const double fd1 = (F.F(x + eta) - F.F(x - eta)) / (2.0 * eta);
        const double fd2 = (F.dF(x + eta) - F.dF(x - eta)) / (2.0 * eta);
        r.max_dF_error = std::max(r.max_dF_error, std::abs(fd1 - F.dF(x)) / std::max(1.0, std::abs(F.dF(x))));
        r.max_d2F_error = std::max(r.max_d2F_error, std::abs(fd2 - F.d2F(x)) / std::max(1.0, std::abs(F.d2F(x))));
    }
    r.ok = r.max_dF_error <= tol && r.max_d2F_error <= tol;
    return r;
}

// ---- F_mu inequalities -----------------------------------------------------

FmuReport fmu_suite(const ChiProfile& chi, double mu, bool throw_on_violation, int probes) {
    if (!(mu > 0.0)) throw ConfigInvalid("mu must be positive");
    const RenormFunction F = fmu_function(chi, mu);
    FmuReport rep;
    rep.mu = mu;
    rep.A0 = chi.A0;
    rep.A1 = chi.A1;
    const double r2 = std::sqrt(2.0), smu = std::sqrt(mu), s2mu = std::sqrt(2.0 * mu);
    std::vector<double> xs;
    for (int j = 0; j < probes; ++j) xs.push_back(-3.0 * smu + 6.0 * smu * j / (probes - 1));
    for (double x : {0.0, smu, -smu, s2mu, -s2mu}) xs.push_back(x);

    // C_chi: the smallest constant for both Fmu-Gmu-prop bounds.
    double cg = 0.0, cf = 0.0;
    for (double x : xs) {
        const double f = F.F(x), g = std::abs(gf(F, x)), q = std::abs(x * x * F.d2F(x));
        if (f > 0.0) cg = std::max(cg, g / f);
        const double ax = std::abs(x);
        if (ax <= smu) {
            if (f > 0.0) cf = std::max(cf, q / f);
        } else if (ax <= s2mu) {
            cf = std::max(cf, q / (x * x));
        }
    }
    rep.C_chi = std::max(cg, cf);

    struct Check {
        const char* display;
        const char* name;
        std::function<std::pair<double, double>(double)> value_bound;
    };
    const double A0 = chi.A0, A1 = chi.A1, C = rep.C_chi;
    const std::vector<Check> checks = {
        {"Fmu-bounds", "F <= 2 mu", [&](double x) { return std::pair{F.F(x), 2.0 * mu}; }},
        {"Fmu-bounds", "F <= 2 xi^2", [&](double x) { return std::pair{F.F(x), 2.0 * x * x}; }},
        {"Fmu-bounds", "|F'| <= 2 sqrt2 A0 sqrt(mu)",
         [&](double x) { return std::pair{std::abs(F.dF(x)), 2.0 * r2 * A0 * smu}; }},
        {"Fmu-bounds", "|F'| <= 2 sqrt2 A0 |xi|",
         [&](double x) { return std::pair{std::abs(F.dF(x)), 2.0 * r2 * A0 * std::abs(x)}; }},
        {"Fmu-bounds", "|F''| <= 8 A1 + 2 A0", [&](double x) { return std::pair{std::abs(F.d2F(x)), 8.0 * A1 + 2.0 * A0}; }},
        {"Gmu-bounds", "|G| <= (4 A0 + 2) mu", [&](double x) { return std::pair{std::abs(gf(F, x)), (4.0 * A0 + 2.0) * mu}; }},
        {"Gmu-bounds", "|G| <= 2 (sqrt2 A0 + 1) xi^2",
         [&](double x) { return std::pair{std::abs(gf(F, x)), 2.0 * (r2 * A0 + 1.0) * x * x}; }},
        {"Fmu-Gmu-prop", "|G| <= C_chi F", [&](double x) { return std::pair{std::abs(gf(F, x)), C * F.F(x)}; }},
        {"Fmu-Gmu-prop", "|xi^2 F''| <= C_chi case bound",
         [&](double x) {
             const double ax = std::abs(x);
             const double b = ax <= smu ? C * F.F(x) : (ax <= s2mu ? C * x * x : 0.0);
             return std::pair{std::abs(x * x * F.d2F(x)), b};
         }},
    };
    rep.ok = std::isfinite(rep.C_chi);
    for (const auto& c : checks) {
        InequalityRow row{c.display, c.name, kInf, 0.0, true};
        for (double x : xs) {
            const auto [v, b] = c.value_bound(x);
            const double margin = b - v;
            if (margin < row.worst_margin) {
                row.worst_margin = margin;
                row.at_xi = x;
            }
            if (margin < -1e-12 * std::max(1.0, std::abs(b))) row.ok = false;
        }
        if (!row.ok && throw_on_violation) {
            std::ostringstream msg;
            msg << c.display << ": " << c.name << " fails at xi = " << row.at_xi << " (mu = " << mu << ")";
            throw InequalityViolation(msg.str());
        }
        rep.ok = rep.ok && row.ok;
        rep.rows.push_back(row);
    }
    return rep;
}

std::vector<FmuLimitRow> fmu_limits(const ChiProfile& chi, const std::vector<double>& mus, const std::vector<double>& xis) {
    std::vector<FmuLimitRow> out;
    for (double x : xis) {
        FmuLimitRow row;
        row.xi = x;
        for (double mu : mus) {
            const RenormFunction F = fmu_function(chi, mu);
            row.F_error.push_back(std::abs(F.F(x) - x * x));
            row.G_error.push_back(std::abs(gf(F, x) - x * x));
        }
        row.monotone = true;
        for (std::size_t k = 1; k < mus.size(); ++k)
            row.monotone = row.monotone && row.F_error[k] <= row.F_error[k - 1] + 1e-12 &&
                           row.G_error[k] <= row.G_error[k - 1] + 1e-12;
        out.push_back(row);
    }
    return out;
}

// ---- identities ------------------------------------------------------------

CancellationResult cancellation_checks(const ScalarField& rho, const VectorField& a, const RenormFunction& F,
                                       const ChristoffelField& G) {
    require_same_chart(rho.chart, a.chart);
    const ScalarField Fr = map_values(rho, F.F), dFr = map_values(rho, F.dF), d2Fr = map_values(rho, F.d2F);
    const ScalarField Gr = map_values(rho, [&](double x) { return gf(F, x); });
    const ScalarField arho = apply(a, rho);
    const ScalarField diva = div_h(a, G);
    const Samples mask = interior_mask(rho.chart->grid, 6);

    const ScalarField lhs1 = dFr * lambda_op(rho, a, G, LambdaMode::direct) - lambda_op(Fr, a, G, LambdaMode::direct);
    const ScalarField lambda1 = div_h(diva * a, G);
    const ScalarField rhs1 = Gr * lambda1 - d2Fr * (arho * arho);

    const ScalarField dra = div_h(rho * a, G);
    const ScalarField lhs2 = dra * dra - arho * arho;
    const ScalarField rd = rho * diva;
    const ScalarField rhs2 = rd * rd + 2.0 * (rho * apply(diva * a, rho));

    return {l2_norm(lhs1 - rhs1, mask), l2_norm(lhs2 - rhs2, mask)};
}

WeakFormAccumulator renorm_accumulator(const CoefficientSet& c, const ScalarField& psi, const RenormFunction& F) {
    if (!F.certificate) throw UnboundedRenormFunction("F '" + F.name + "' carries no boundedness certificate");
    return WeakFormAccumulator(c, psi, F, WeakForm::ito);
}

RenormReport renorm_residual(const Trajectory& traj, const RenormFunction& F, const ScalarField& psi,
                             const CoefficientSet& c, const BrownianDriver& driver) {
    WeakFormAccumulator acc = renorm_accumulator(c, psi, F);
    if (traj.empty()) throw ConfigInvalid("empty trajectory");
    if (static_cast<int>(traj.size()) != driver.steps() + 1) throw ConfigInvalid("trajectory does not match driver");
    acc.start(traj.front());
    for (std::size_t k = 0; k + 1 < traj.size(); ++k)
        acc.step(traj[k], traj[k + 1], driver.increments(static_cast<int>(k)), driver.dt());
    const WeakFormTerms t = acc.current();
    return {t.terms, t.lhs, t.rhs, t.residual};
}

RenormRefinement renorm_refinement(const SimulationSetup& s, const RenormFunction& F, const std::string& psi_spec,
                                   int levels) {
    if (!F.certificate) throw UnboundedRenormFunction("F '" + F.name + "' carries no boundedness certificate");
    const auto ladder = refinement_ladder(s, levels);
    std::vector<PreparedRun> runs;
    std::vector<ScalarField> psis;
    for (const auto& l : ladder) {
        runs.push_back(prepare_run(s, l.resolution, l.dt));
        psis.push_back(test_function(psi_spec, runs.back().coeffs.chart));
    }
    const int P = s.paths;
    const int N = runs[0].coeffs.noises();
    const std::size_t L = ladder.size();
    std::vector<std::vector<double>> res(L, std::vector<double>(P));
    std::vector<std::vector<std::map<std::string, double>>> terms(L, std::vector<std::map<std::string, double>>(P));
    auto coarsen_factor = [&](std::size_t l) { return 1 << (2 * static_cast<int>(L - 1 - l)); };
    run_paths(P, s.threads, [&](int p) {
        const BrownianDriver fine(N, ladder.back().dt, s.T, s.seed, static_cast<std::uint64_t>(p));
        for (std::size_t l = 0; l < L; ++l) {
            const BrownianDriver drv = fine.coarsen(coarsen_factor(l));
            WeakFormAccumulator acc = renorm_accumulator(runs[l].coeffs, psis[l], F);
            acc.start(initial_state(runs[l].rho0, static_cast<std::uint64_t>(p)));
            simulate_stream(runs[l].rho0, runs[l].coeffs, drv,
                            [&](const SolutionState& b, const SolutionState& a, std::span<const double> dW, double dt) {
                                acc.step(b, a, dW, dt);
                            });
            const WeakFormTerms t = acc.current();
            res[l][p] = t.residual;
            terms[l][p] = t.terms;
        }
    });
    RenormRefinement out;
    for (std::size_t l = 0; l < L; ++l) {
        RenormLevel lv{ladder[l], mean_of(res[l]), std_error(res[l]), {}};
        for (int p = 0; p < P; ++p)
            for (const auto& [k, v] : terms[l][p]) lv.mean_abs_terms[k] += std::abs(v) / P;
        out.levels.push_back(lv);
    }
    for (std::size_t l = 0; l + 1 < L; ++l) out.ratios.push_back(out.levels[l].mean_residual / out.levels[l + 1].mean_residual);

    const BrownianDriver drv0 =
        BrownianDriver(N, ladder.back().dt, s.T, s.seed, 0).coarsen(coarsen_factor(0));
    const Trajectory traj = simulate(runs[0].rho0, runs[0].coeffs, drv0);
    const double lin = renorm_residual(traj, linear_function(), psis[0], runs[0].coeffs, drv0).residual;
    const double weak = weak_form_residual(traj, psis[0], runs[0].coeffs, drv0, WeakForm::ito);
    out.linear_collapse_exact = lin == weak;
    return out;
}

// ---- a priori estimate and uniqueness --------------------------------------

double cbar(const CoefficientSet& c, double T) {
    double C = 0.0;
    for (int i = 0; i < c.noises(); ++i) {
        C += 0.5 * max_abs(c.lambda1[i].v);
        double d2 = 0.0;
        for (double d : c.div_a[i].v) d2 = std::max(d2, d * d);
        C += d2;
    }
    return C + T * c.div_u_sup;
}

AprioriReport apriori_check(const SimulationSetup& s, double mu_allowance) {
    if (s.paths < 64) throw MCBudgetTooSmall("the a priori check needs at least 64 paths, got " + std::to_string(s.paths));
    const PreparedRun run = prepare_run(s);
    const CoefficientSet& c = run.coeffs;
    AprioriReport rep;
    rep.preset = s.preset;
    rep.paths = s.paths;
    rep.T = s.T;
    rep.dt = run.dt;
    rep.rho0_energy = energy_of(run.rho0);
    rep.Cbar = cbar(c, s.T);
    rep.bound = std::exp(rep.Cbar * s.T) * rep.rho0_energy;

    const int stride = std::max(1, run.steps / 100);
    for (int k = 0; k <= run.steps; k += stride) rep.times.push_back(k * run.dt);
    const std::size_t samples = rep.times.size();
    const RenormFunction F = fmu_function(quintic_chi(), mu_allowance);
    const ScalarField one = constant_scalar(c.chart, 1.0);
    const int P = s.paths;
    std::vector<double> esup(P), allow(P), eend(P);
    std::vector<std::vector<double>> traj(P, std::vector<double>(samples, 0.0));
    run_paths(P, s.threads, [&](int p) {
        const BrownianDriver drv(c.noises(), run.dt, s.T, s.seed, static_cast<std::uint64_t>(p));
        WeakFormAccumulator acc = renorm_accumulator(c, one, F);
        acc.start(initial_state(run.rho0, static_cast<std::uint64_t>(p)));
        double sup = rep.rho0_energy, dev = 0.0, last = rep.rho0_energy;
        traj[p][0] = rep.rho0_energy;
        simulate_stream(run.rho0, c, drv,
                        [&](const SolutionState& b, const SolutionState& a, std::span<const double> dW, double dt) {
                            acc.step(b, a, dW, dt);
                            last = energy_of(a.rho);
                            sup = std::max(sup, last);
                            dev = std::max(dev, acc.current().residual);
                            if (a.step % stride == 0 && static_cast<std::size_t>(a.step / stride) < samples)
                                traj[p][static_cast<std::size_t>(a.step / stride)] = last;
                        });
        esup[p] = sup;
        allow[p] = dev;
        eend[p] = last;
    });
    rep.esup_mean = mean_of(esup);
    rep.esup_sigma = std_error(esup);
    rep.allowance = mean_of(allow);
    rep.end_energy_mean = mean_of(eend);
    rep.end_energy_sigma = std_error(eend);
    rep.energy_mean.assign(samples, 0.0);
    for (int p = 0; p < P; ++p)
        for (std::size_t j = 0; j < samples; ++j) rep.energy_mean[j] += traj[p][j] / P;
    rep.bound_ok = rep.esup_mean <= rep.bound + 3.0 * rep.esup_sigma + rep.allowance;
    return rep;
}

UniquenessReport uniqueness_check(const SimulationSetup& s, const std::string& delta_name) {
    const PreparedRun run = prepare_run(s);
    const CoefficientSet& c = run.coeffs;
    const ScalarField delta = sample_scalar(c.chart, initial_density(delta_name, *s.atlas));
    const ScalarField zero = constant_scalar(c.chart, 0.0);
    const ScalarField one = constant_scalar(c.chart, 1.0);
    const RenormFunction F = fmu_function(quintic_chi(), 1e6);
    const int P = s.paths;
    std::vector<double> zmax(P), lin(P), esup(P), allow(P);
    run_paths(P, s.threads, [&](int p) {
        const BrownianDriver drv(c.noises(), run.dt, s.T, s.seed, static_cast<std::uint64_t>(p));
        const auto path = static_cast<std::uint64_t>(p);
        SolutionState z = initial_state(zero, path), A = initial_state(run.rho0 + delta, path),
                      B = initial_state(run.rho0, path), D = initial_state(delta, path);
        WeakFormAccumulator acc = renorm_accumulator(c, one, F);
        acc.start(D);
        double zm = 0.0, le = 0.0, sup = energy_of(delta), dev = 0.0;
        for (int k = 0; k < drv.steps(); ++k) {
            const auto dW = drv.increments(k);
            z = ito_step(z, c, dW, run.dt);
            A = ito_step(A, c, dW, run.dt);
            B = ito_step(B, c, dW, run.dt);
            SolutionState Dn = ito_step(D, c, dW, run.dt);
            acc.step(D, Dn, dW, run.dt);
            D = std::move(Dn);
            zm = std::max(zm, max_abs(z.rho.v));
            const ScalarField diff = A.rho - B.rho;
            le = std::max(le, max_abs((diff - D.rho).v));
            sup = std::max(sup, energy_of(diff));
            dev = std::max(dev, acc.current().residual);
        }
        zmax[p] = zm;
        lin[p] = le;
        esup[p] = sup;
        allow[p] = dev;
    });
    UniquenessReport rep;
    rep.zero_max = *std::max_element(zmax.begin(), zmax.end());
    rep.linearity_error = *std::max_element(lin.begin(), lin.end());
    rep.diff_esup = mean_of(esup);
    rep.diff_bound = std::exp(cbar(c, s.T) * s.T) * energy_of(delta) + 3.0 * std_error(esup) + mean_of(allow);
    rep.ok = rep.zero_max == 0.0 && rep.linearity_error <= 1e-10 && rep.diff_esup <= rep.diff_bound;
    return rep;
}

}  // namespace sce
