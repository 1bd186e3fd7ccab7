#include "sce/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "sce/coefficients.hpp"
#include "sce/commutators.hpp"
#include "sce/errors.hpp"
#include "sce/fixtures.hpp"
#include "sce/geometry.hpp"
#include "sce/regularization.hpp"
#include "sce/renormalization.hpp"
#include "sce/spde.hpp"

#ifndef SCE_VERSION
#define SCE_VERSION "0.0.0"
#endif

namespace sce {

namespace {

using json = nlohmann::ordered_json;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const std::set<std::string>& commands() {
    static const std::set<std::string> c{"atlas-check", "commutator-rate", "simulate", "renorm-check", "apriori"};
    return c;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigInvalid("key '" + key + "': cannot parse '" + v + "' as a number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigInvalid("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_num<double>(key, trim(tok)));
    return out;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigInvalid("cannot read '" + p.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fixture_text(const std::string& manifold) {
    const auto names = builtin_fixture_names();
    if (std::find(names.begin(), names.end(), manifold) != names.end()) return builtin_fixture_text(manifold);
    return read_file(manifold);
}

std::string default_rho0(const RunConfig& c, const Atlas& atlas) {
    if (!c.rho0.empty()) return c.rho0;
    return is_sphere(atlas) ? "bump" : "wave";
}

SimulationSetup setup_of(const RunConfig& c, const AtlasPtr& atlas) {
    SimulationSetup s;
    s.atlas = atlas;
    s.resolution = c.resolution;
    s.dt = c.dt.value_or(0.0);
    s.cfl = c.cfl;
    s.T = c.T;
    s.paths = c.paths;
    s.seed = c.seed.value_or(0);
    s.preset = c.coeff_preset;
    s.rho0 = default_rho0(c, *atlas);
    s.threads = c.threads;
    return s;
}

CheckResult check_le(std::string name, double value, double tol, std::string detail = {}) {
    return {std::move(name), value <= tol, value, tol, std::move(detail)};
}

CheckResult check_ge(std::string name, double value, double tol, std::string detail = {}) {
    return {std::move(name), value >= tol, value, tol, std::move(detail)};
}

CheckResult check_flag(std::string name, bool ok, std::string detail = {}) {
    return {std::move(name), ok, ok ? 1.0 : 0.0, 1.0, std::move(detail)};
}

std::string csv_row(std::initializer_list<std::string> cells) {
    std::string out;
    bool first = true;
    for (const auto& c : cells) {
        if (!first) out += ',';
        out += c;
        first = false;
    }
    return out + '\n';
}

std::string f(double x) { return format_double(x); }

// ---- geometry identity fields ------------------------------------------

struct IdentityFields {
    ScalarField psi, psi_c, phi, f;
    VectorField X;
    SymTensor2Field S;
};

// Product of plateaus over the non-periodic axes: compact support in the chart.
double cutoff(const Chart& c, const Point& x) {
    double w = 1.0;
    for (int a = 0; a < c.dim(); ++a) {
        if (c.grid.periodic[a]) continue;
        const double L = c.grid.extent(a);
        w *= plateau(x[a], c.grid.lo[a] + 0.15 * L, c.grid.hi[a] - 0.15 * L);
    }
    return w;
}

IdentityFields identity_fields(const ChartPtr& chart) {
    IdentityFields fl;
    const Chart& c = *chart;
    const int d = c.dim();
    if (c.map) {
        fl.psi = sample_scalar(chart, from_ambient([](const Vec3& q) { return std::exp(0.5 * q[0]) * (1.0 + 0.3 * q[1] * q[2]); }));
        fl.phi = sample_scalar(chart, from_ambient([](const Vec3& q) { return std::cos(2.0 * q[2]) + 0.5 * q[0] * q[1]; }));
        fl.f = sample_scalar(chart, from_ambient([](const Vec3& q) { return 0.4 + 0.5 * q[0] - 0.3 * q[1] * q[2]; }));
        fl.X = sample_vector(chart, from_ambient_vector([](const Vec3& q) {
            return Vec3{-0.6 * q[1] + 0.4 * (1.0 - q[0] * q[0]) - 0.2 * q[2] * q[1] * q[0],
                        0.6 * q[0] - 0.4 * q[0] * q[1] + 0.2 * q[2] * (1.0 - q[1] * q[1]),
                        -0.4 * q[0] * q[2] - 0.2 * q[2] * q[1] * q[2]};
        }));
    } else {
        // Coordinate fields, scaled so that X(psi) is O(1) whatever the box size.
        const double L0 = c.grid.extent(0), L1 = d == 2 ? c.grid.extent(1) : 1.0;
        const double k0 = kTwoPi / L0, k1 = kTwoPi / L1;
        const double lo0 = c.grid.lo[0], lo1 = d == 2 ? c.grid.lo[1] : 0.0;
        auto s0 = [=](const Point& x) { return k0 * (x[0] - lo0); };
        auto s1 = [=](const Point& x) { return d == 2 ? k1 * (x[1] - lo1) : 0.0; };
        fl.psi = make_scalar(chart, [=](const Point& x) { return std::exp(0.5 * std::sin(s0(x))) * (1.0 + 0.3 * std::cos(s1(x))); });
        fl.phi = make_scalar(chart, [=](const Point& x) { return std::cos(s0(x) + s1(x)) + 0.5 * std::sin(s0(x)); });
        fl.f = make_scalar(chart, [=](const Point& x) { return 0.4 + 0.5 * std::cos(s0(x)) * std::sin(s1(x) + 0.7); });
        fl.X = make_vector(chart, [=](const Point& x) {
            return std::array<double, 2>{(0.4 + 0.3 * std::sin(s0(x)) * std::cos(s1(x))) / k0,
                                         d == 2 ? (0.2 * std::cos(s0(x)) + 0.1 * std::sin(s1(x))) / k1 : 0.0};
        });
    }
    fl.psi_c = make_scalar(chart, [&](const Point& x) { return cutoff(c, x); }) * fl.psi;
    // S = X X + (1 + f^2) h^{-1}: symmetric and positive definite.
    fl.S = hat(fl.X);
    for (int k = 0; k < 3; ++k) {
        if (d == 1 && k != 0) continue;
        for (std::size_t n = 0; n < c.grid.size(); ++n)
            fl.S.s[k][n] += (1.0 + fl.f.v[n] * fl.f.v[n]) * c.metric.hinv[k][n];
    }
    return fl;
}

// max |sum_l U_l - 1| over the nodes of chart k.
double chart_partition_error(const Atlas& atlas, const PartitionOfUnity& pou, std::size_t k) {
    const Chart& c = *atlas.charts[k];
    double worst = 0.0;
    for (std::size_t n = 0; n < c.grid.size(); ++n) {
        double s = pou.weight[k][n];
        for (std::size_t l = 0; l < atlas.charts.size(); ++l) {
            if (l == k) continue;
            if (auto y = atlas.transition(static_cast<int>(k), static_cast<int>(l), c.grid.node(n)))
                s += partition_weight(pou, static_cast<int>(l), *y);
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

// ---- commands ----------------------------------------------------------

void atlas_check(const RunConfig& cfg, const AtlasPtr& atlas, ArtifactWriter& w, std::vector<CheckResult>& checks) {
    json report;
    report["manifold"] = atlas->name;
    const auto pou = make_partition(atlas, cfg.margin);
    json charts = json::array();
    double worst = 0.0;
    for (std::size_t k = 0; k < atlas->charts.size(); ++k) {
        const double e = chart_partition_error(*atlas, pou, k);
        worst = std::max(worst, e);
        charts.push_back({{"chart", atlas->charts[k]->id}, {"max_partition_error", e}, {"eps_chart", pou.eps_chart[k]},
                          {"eps0", pou.eps0}});
    }
    report["charts"] = charts;
    checks.push_back(check_le("partition-sum", worst, 1e-12, "max |sum U - 1| over chart nodes"));

    if (atlas->unit_volume) {
        double det = 0.0, trace = 0.0;
        for (const auto& c : atlas->charts) {
            const ChristoffelField G = christoffel(c);
            for (std::size_t n = 0; n < c->grid.size(); ++n) {
                det = std::max(det, std::abs(c->metric.det[n] - 1.0));
                for (int j = 0; j < c->dim(); ++j) {
                    double s = 0.0;
                    for (int m = 0; m < c->dim(); ++m) s += G.g[m][sym(m, j)][n];
                    trace = std::max(trace, std::abs(s));
                }
            }
        }
        report["unit_volume"] = {{"max_det_error", det}, {"max_gamma_trace", trace}};
        checks.push_back(check_le("unit-volume-det", det, 1e-6));
        checks.push_back(check_le("unit-volume-gamma-trace", trace, 1e-6));
    }

    // Tolerances are pinned at 128 nodes per axis and scaled as h^2 elsewhere.
    const double tol = (is_sphere(*atlas) ? 4e-4 : 1e-4) * std::pow(128.0 / cfg.resolution, 2);
    json ids = json::array();
    for (const auto& row : geometry_identities(*atlas, cfg.resolution)) {
        ids.push_back({{"identity", row.identity}, {"residual", row.residual}, {"tolerance", tol}});
        checks.push_back(check_le("identity-" + row.identity, row.residual, tol));
    }
    report["identities"] = ids;
    w.write("atlas_check.json", report.dump(2) + "\n");
}

void commutator_rate(const RunConfig& cfg, const AtlasPtr& atlas, ArtifactWriter& w, std::vector<CheckResult>& checks) {
    const CommutatorKind kind = parse_commutator_kind(cfg.kind);
    const auto fx = commutator_fixture(*atlas, cfg.resolution, cfg.kink);
    const std::vector<double> ladder = cfg.eps_ladder.empty() ? default_eps_ladder() : cfg.eps_ladder;
    std::vector<CommutatorResult> rows;
    for (double e : ladder) rows.push_back(run_commutator(kind, fx, e));
    std::vector<double> eps, l2, l1;
    for (const auto& r : rows) {
        eps.push_back(r.eps);
        l2.push_back(r.l2);
        l1.push_back(r.l1);
    }
    const std::string k = to_string(kind);

    if (kind == CommutatorKind::R) {
        std::vector<double> rb, G;
        for (const auto& r : rows) {
            rb.push_back(r.extra.at("rbar_l2"));
            G.push_back(r.extra.at("G_l2"));
        }
        const RateTable trb = rate_study(eps, rb), tG = rate_study(eps, G);
        std::string csv = "kind,eps,l2_norm,slope_so_far,rbar_l2,G_l2,a_r_l2\n";
        const RateTable t = rate_study(eps, l2);
        double worst = 0.0;
        for (std::size_t i = 0; i < t.eps.size(); ++i) {
            const auto it = std::find(eps.begin(), eps.end(), t.eps[i]);
            const auto& r = rows[static_cast<std::size_t>(it - eps.begin())];
            worst = std::max(worst, r.l2);
            csv += csv_row({k, f(r.eps), f(r.l2), f(trb.slope_so_far[i]), f(r.extra.at("rbar_l2")), f(r.extra.at("G_l2")),
                            f(r.extra.at("a_r_l2"))});
        }
        w.write("commutator_R.csv", csv);
        checks.push_back(check_le("R-identity", worst, 1e-4, "max identity residual over the ladder"));
        checks.push_back(check_flag("R-rbar-monotone", trb.monotone));
        checks.push_back(check_flag("R-G-monotone", tG.monotone));
        return;
    }

    const RateTable t = rate_study(eps, l2);
    const RateTable t1 = rate_study(eps, l1);
    std::string csv = "kind,eps,l2_norm,slope_so_far,l1_norm,l1_slope_so_far\n";
    for (std::size_t i = 0; i < t.eps.size(); ++i)
        csv += csv_row({k, f(t.eps[i]), f(t.norm[i]), f(t.slope_so_far[i]), f(t1.norm[i]), f(t1.slope_so_far[i])});
    w.write("commutator_" + k + ".csv", csv);

    checks.push_back(check_flag(k + "-monotone", t.monotone, "L2 norms non-increasing as eps decreases"));
    if (!cfg.kink) {
        checks.push_back(check_ge(k + "-slope", t.slope, 1.0, "least-squares log-log slope of the L2 norm"));
        if (kind != CommutatorKind::c2)
            checks.push_back(check_le(k + "-halving", t.norm.back() / t.norm.front(), 0.5, "final over initial L2 norm"));
    }
    if (kind == CommutatorKind::ru)
        checks.push_back(check_flag("ru-l1-surrogate-monotone", t1.monotone, "L1-in-space surrogate"));
}

void write_path_csv(ArtifactWriter& w, int path, const std::vector<std::array<double, 3>>& rows) {
    std::string csv = "t,mass,l2_energy\n";
    for (const auto& r : rows) csv += csv_row({f(r[0]), f(r[1]), f(r[2])});
    char name[32];
    std::snprintf(name, sizeof name, "path_%04d.csv", path);
    w.write(name, csv);
}

void simulate_cmd(const RunConfig& cfg, const AtlasPtr& atlas, ArtifactWriter& w, std::vector<CheckResult>& checks,
                  json& resolved) {
    const SimulationSetup s = setup_of(cfg, atlas);
    const PreparedRun run = prepare_run(s);
    resolved["dt_model"] = run.dt;
    resolved["steps"] = run.steps;
    resolved["rho0"] = s.rho0;
    const int stride = std::max(1, run.steps / 1000);

    struct PathOut {
        std::vector<std::array<double, 3>> rows;
        double max_drift = 0.0;
        double final_mass = 0.0, final_energy = 0.0;
    };
    std::vector<PathOut> out(static_cast<std::size_t>(s.paths));
    run_paths(s.paths, s.threads, [&](int p) {
        const BrownianDriver drv(run.coeffs.noises(), run.dt, s.T, s.seed, static_cast<std::uint64_t>(p));
        PathOut& po = out[static_cast<std::size_t>(p)];
        po.rows.push_back({0.0, mass_of(run.rho0), energy_of(run.rho0)});
        const auto last = simulate_stream(run.rho0, run.coeffs, drv,
                                          [&](const SolutionState& a, const SolutionState& b, std::span<const double>, double) {
                                              po.max_drift = std::max(po.max_drift, std::abs(b.mass - a.mass));
                                              if (b.step % stride == 0 || b.step == run.steps)
                                                  po.rows.push_back({b.t, b.mass, energy_of(b.rho)});
                                          });
        po.final_mass = last.mass;
        po.final_energy = energy_of(last.rho);
    });

    std::string summary = "path,final_mass,final_l2_energy,max_mass_drift_per_step\n";
    double drift = 0.0;
    for (int p = 0; p < s.paths; ++p) {
        const auto& po = out[static_cast<std::size_t>(p)];
        write_path_csv(w, p, po.rows);
        summary += csv_row({std::to_string(p), f(po.final_mass), f(po.final_energy), f(po.max_drift)});
        drift = std::max(drift, po.max_drift);
    }
    w.write("simulate_summary.csv", summary);
    const double scale = std::max(1.0, std::abs(mass_of(run.rho0)));
    checks.push_back(check_le("mass-drift-per-step", drift / scale, 1e-12, "max over paths, relative to max(1, |mass|)"));
}

json renorm_json(const RenormRefinement& r) {
    json j;
    const auto& fine = r.levels.back();
    j["terms"] = json::object();
    for (const auto& [k, v] : fine.mean_abs_terms) j["terms"][k] = v;
    j["residual"] = fine.mean_residual;
    j["refinement"] = json::array();
    for (std::size_t l = 0; l < r.levels.size(); ++l) {
        const auto& L = r.levels[l];
        json row{{"resolution", L.spec.resolution}, {"dt_model", L.spec.dt}, {"steps", L.spec.steps},
                 {"mean_residual", L.mean_residual}, {"sigma", L.sigma}};
        if (l > 0) row["ratio"] = r.ratios[l - 1];
        j["refinement"].push_back(row);
    }
    j["linear_collapse_exact"] = r.linear_collapse_exact;
    j["bound"] = nullptr;
    return j;
}

void renorm_cmd(const RunConfig& cfg, const AtlasPtr& atlas, ArtifactWriter& w, std::vector<CheckResult>& checks) {
    const SimulationSetup s = setup_of(cfg, atlas);
    const RenormFunction F = parse_renorm_function(cfg.F);
    const RenormRefinement r = renorm_refinement(s, F, cfg.psi, cfg.levels);
    std::string csv = "level,resolution,dt_model,steps,mean_residual,sigma,ratio\n";
    for (std::size_t l = 0; l < r.levels.size(); ++l) {
        const auto& L = r.levels[l];
        csv += csv_row({std::to_string(l), std::to_string(L.spec.resolution), f(L.spec.dt), std::to_string(L.spec.steps),
                        f(L.mean_residual), f(L.sigma), l == 0 ? std::string() : f(r.ratios[l - 1])});
    }
    w.write("renorm_refinement.csv", csv);
    w.write("renorm_report.json", renorm_json(r).dump(2) + "\n");
    for (std::size_t l = 0; l < r.ratios.size(); ++l)
        checks.push_back(check_ge("residual-ratio-" + std::to_string(l), r.ratios[l], 1.8,
                                  "mean |residual| ratio under dx / 2, dt / 4"));
    checks.push_back(check_flag("linear-collapse-exact", r.linear_collapse_exact));
}

void apriori_cmd(const RunConfig& cfg, const AtlasPtr& atlas, ArtifactWriter& w, std::vector<CheckResult>& checks) {
    const SimulationSetup s = setup_of(cfg, atlas);
    const AprioriReport r = apriori_check(s);
    std::string csv = "t,energy_mean,bound\n";
    for (std::size_t i = 0; i < r.times.size(); ++i)
        csv += csv_row({f(r.times[i]), f(r.energy_mean[i]), f(std::exp(r.Cbar * r.times[i]) * r.rho0_energy)});
    w.write("energy.csv", csv);

    json j;
    j["terms"] = json::object();
    j["residual"] = r.allowance;
    j["refinement"] = json::array();
    j["bound"] = {{"Cbar", r.Cbar},           {"rhs", r.bound},           {"lhs", r.esup_mean},
                  {"sigma", r.esup_sigma},    {"allowance", r.allowance}, {"end_energy_mean", r.end_energy_mean},
                  {"end_energy_sigma", r.end_energy_sigma}, {"rho0_energy", r.rho0_energy}, {"dt_model", r.dt},
                  {"paths", r.paths}};
    checks.push_back(check_flag("apriori-bound", r.bound_ok, "E sup ||rho||^2 <= exp(Cbar T) ||rho0||^2 + 3 sigma + allowance"));
    if (s.preset == "rotation-const") {
        const double rel = (std::abs(r.end_energy_mean - r.rho0_energy) - 3.0 * r.end_energy_sigma) / r.rho0_energy;
        checks.push_back(check_le("energy-conservation", rel, 0.01, "(|E||rho(T)||^2 - ||rho0||^2| - 3 sigma) / ||rho0||^2"));
    }
    if (cfg.uniqueness) {
        const UniquenessReport u = uniqueness_check(s);
        j["uniqueness"] = {{"zero_max", u.zero_max}, {"linearity_error", u.linearity_error}, {"diff_esup", u.diff_esup},
                           {"diff_bound", u.diff_bound}};
        checks.push_back(check_le("zero-data", u.zero_max, 0.0));
        checks.push_back(check_le("linearity", u.linearity_error, 1e-10));
        checks.push_back(check_le("difference-bound", u.diff_esup, u.diff_bound));
    }
    w.write("apriori_report.json", j.dump(2) + "\n");
}

json manifest_json(const RunManifest& m, const json& resolved) {
    json j;
    json cfg = json::object();
    std::stringstream ss(m.config_text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) cfg[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    j["config"] = cfg;
    j["config_text"] = m.config_text;
    j["resolved"] = resolved;
    j["input_hashes"] = m.input_hashes;
    j["tool_version"] = m.tool_version;
    j["started_utc"] = m.started_utc;
    j["wall_seconds"] = m.wall_seconds;
    j["checks"] = json::array();
    for (const auto& c : m.checks)
        j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance},
                               {"detail", c.detail}});
    j["artifacts"] = m.artifacts;
    j["passed"] = m.passed();
    j["exit_code"] = exit_code(m);
    return j;
}

}  // namespace

// ---- configuration -----------------------------------------------------

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::set<std::string> seen;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigInvalid("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigInvalid("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        if (key == "command") c.command = v;
        else if (key == "manifold") c.manifold = v;
        else if (key == "resolution") c.resolution = parse_num<int>(key, v);
        else if (key == "margin") c.margin = parse_num<double>(key, v);
        else if (key == "eps_ladder_model") c.eps_ladder = v == "default" ? std::vector<double>{} : parse_list(key, v);
        else if (key == "dt_model") c.dt = v == "auto" ? std::nullopt : std::optional<double>(parse_num<double>(key, v));
        else if (key == "T_model") c.T = parse_num<double>(key, v);
        else if (key == "cfl") c.cfl = parse_num<double>(key, v);
        else if (key == "paths") c.paths = parse_num<int>(key, v);
        else if (key == "seed") c.seed = parse_num<std::uint64_t>(key, v);
        else if (key == "coeff_preset") c.coeff_preset = v;
        else if (key == "rho0") c.rho0 = v == "default" ? std::string() : v;
        else if (key == "kind") c.kind = v;
        else if (key == "kink") c.kink = parse_bool(key, v);
        else if (key == "F") c.F = v;
        else if (key == "psi") c.psi = v;
        else if (key == "levels") c.levels = parse_num<int>(key, v);
        else if (key == "uniqueness") c.uniqueness = parse_bool(key, v);
        else if (key == "threads") c.threads = parse_num<int>(key, v);
        else if (key == "out") c.out = v;
        else throw ConfigInvalid("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& file) { return parse_config(read_file(file)); }

std::string config_text(const RunConfig& c) {
    std::string ladder;
    for (double e : c.eps_ladder) ladder += (ladder.empty() ? "" : ",") + format_double(e);
    std::string t;
    auto kv = [&](const std::string& k, const std::string& v) { t += k + " = " + v + "\n"; };
    kv("command", c.command);
    kv("manifold", c.manifold);
    kv("resolution", std::to_string(c.resolution));
    kv("margin", format_double(c.margin));
    kv("eps_ladder_model", ladder.empty() ? "default" : ladder);
    kv("dt_model", c.dt ? format_double(*c.dt) : "auto");
    kv("T_model", format_double(c.T));
    kv("cfl", format_double(c.cfl));
    kv("paths", std::to_string(c.paths));
    if (c.seed) kv("seed", std::to_string(*c.seed));
    kv("coeff_preset", c.coeff_preset);
    kv("rho0", c.rho0.empty() ? "default" : c.rho0);
    kv("kind", c.kind);
    kv("kink", c.kink ? "true" : "false");
    kv("F", c.F);
    kv("psi", c.psi);
    kv("levels", std::to_string(c.levels));
    kv("uniqueness", c.uniqueness ? "true" : "false");
    kv("threads", std::to_string(c.threads));
    kv("out", c.out.string());
    return t;
}

bool is_stochastic(const std::string& command) {
    return command == "simulate" || command == "renorm-check" || command == "apriori";
}

void validate(const RunConfig& c) {
    if (!commands().count(c.command))
        throw ConfigInvalid("unknown command '" + c.command +
                            "' (expected atlas-check, commutator-rate, simulate, renorm-check or apriori)");
    auto positive = [](const std::string& key, double v) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigInvalid(key + " must be positive and finite");
    };
    if (c.resolution < 8) throw ConfigInvalid("resolution must be at least 8");
    positive("margin", c.margin);
    for (double e : c.eps_ladder) positive("eps_ladder_model", e);
    if (c.dt) positive("dt_model", *c.dt);
    positive("T_model", c.T);
    positive("cfl", c.cfl);
    if (c.cfl > 1.0) throw ConfigInvalid("cfl must not exceed 1");
    if (c.paths < 1) throw ConfigInvalid("paths must be positive");
    if (c.threads < 1) throw ConfigInvalid("threads must be positive");
    if (c.levels < 2) throw ConfigInvalid("levels must be at least 2");
    if (c.out.empty()) throw ConfigInvalid("out must name a directory");
    if (is_stochastic(c.command) && !c.seed) throw ConfigInvalid("command '" + c.command + "' needs an explicit seed");
    parse_commutator_kind(c.kind);
}

// ---- manifest and artifacts --------------------------------------------

bool RunManifest::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

int exit_code(const RunManifest& m) { return m.passed() ? 0 : 1; }

int exit_code(const std::exception& e) {
    if (dynamic_cast<const NonFiniteState*>(&e)) return 3;
    if (dynamic_cast<const ConfigInvalid*>(&e) || dynamic_cast<const FixtureParseError*>(&e) ||
        dynamic_cast<const CFLViolation*>(&e) || dynamic_cast<const MCBudgetTooSmall*>(&e) ||
        dynamic_cast<const EpsilonTooLarge*>(&e) || dynamic_cast<const UnboundedRenormFunction*>(&e) ||
        dynamic_cast<const InsufficientPoints*>(&e) || dynamic_cast<const std::invalid_argument*>(&e))
        return 2;
    return 1;
}

std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
        throw Error("SHA-1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_))
        throw ConfigInvalid("cannot create output directory '" + dir_.string() + "'");
}

void ArtifactWriter::write(const std::string& name, const std::string& content) {
    const auto target = dir_ / name;
    const auto tmp = dir_ / (name + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigInvalid("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.flush()) throw ConfigInvalid("cannot write '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
    if (std::find(written_.begin(), written_.end(), name) == written_.end()) written_.push_back(name);
}

RunManifest run_experiment(const RunConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    validate(config);
    RunManifest m;
    m.config = config;
    m.config_text = config_text(config);
    m.tool_version = SCE_VERSION;
    m.started_utc = utc_now();
    m.input_hashes["config"] = git_blob_sha1(m.config_text);
    m.input_hashes["manifold"] = git_blob_sha1(fixture_text(config.manifold));
    if (config.command == "renorm-check" && config.F.rfind("custom-spline:", 0) == 0) {
        std::string file = config.F.substr(14);
        if (const auto colon = file.rfind(':'); colon != std::string::npos && colon > 0) {
            const std::string tail = file.substr(colon + 1);
            if (!tail.empty() && tail.find_first_not_of("0123456789.eE+-") == std::string::npos) file.resize(colon);
        }
        m.input_hashes["spline"] = git_blob_sha1(read_file(file));
    }

    const auto atlas = std::make_shared<const Atlas>(load_fixture(config.manifold));
    ArtifactWriter w(config.out);
    json resolved = json::object();
    if (config.command == "atlas-check") atlas_check(config, atlas, w, m.checks);
    else if (config.command == "commutator-rate") commutator_rate(config, atlas, w, m.checks);
    else if (config.command == "simulate") simulate_cmd(config, atlas, w, m.checks, resolved);
    else if (config.command == "renorm-check") renorm_cmd(config, atlas, w, m.checks);
    else apriori_cmd(config, atlas, w, m.checks);

    m.artifacts = w.written();
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    w.write("manifest.json", manifest_json(m, resolved).dump(2) + "\n");
    return m;
}

// ---- plotting scripts --------------------------------------------------

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw MissingArtifacts("no report directory '" + dir.string() + "'");
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    auto starts = [](const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; };
    auto ends = [](const std::string& s, const std::string& x) {
        return s.size() >= x.size() && s.compare(s.size() - x.size(), x.size(), x) == 0;
    };

    const std::string head = "import csv\nimport sys\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
                             "def read(name):\n    with open(name, newline='') as fh:\n        return list(csv.DictReader(fh))\n\n";
    ArtifactWriter w(dir);
    std::vector<std::filesystem::path> out;
    bool any_path = false;
    for (const auto& n : names) {
        if (starts(n, "commutator_") && ends(n, ".csv")) {
            const std::string kind = n.substr(11, n.size() - 15);
            const std::string script = "plot_commutator_" + kind + ".py";
            w.write(script, head + "rows = read('" + n + "')\n"
                                   "eps = [float(r['eps']) for r in rows]\n"
                                   "norm = [float(r['l2_norm']) for r in rows]\n"
                                   "plt.loglog(eps, norm, 'o-', label='" + kind + "')\n"
                                   "plt.loglog(eps, [norm[0] * e / eps[0] for e in eps], 'k--', label='slope 1')\n"
                                   "plt.xlabel('eps')\nplt.ylabel('L2 norm')\nplt.legend()\n"
                                   "plt.savefig(sys.argv[1] if len(sys.argv) > 1 else 'commutator_" + kind + ".png')\n");
            out.push_back(dir / script);
        } else if (n == "energy.csv") {
            w.write("plot_energy.py", head + "rows = read('energy.csv')\n"
                                             "t = [float(r['t']) for r in rows]\n"
                                             "plt.plot(t, [float(r['energy_mean']) for r in rows], label='E ||rho||^2')\n"
                                             "plt.plot(t, [float(r['bound']) for r in rows], 'k--', label='exp(Cbar t) ||rho0||^2')\n"
                                             "plt.xlabel('t')\nplt.legend()\n"
                                             "plt.savefig(sys.argv[1] if len(sys.argv) > 1 else 'energy.png')\n");
            out.push_back(dir / "plot_energy.py");
        } else if (n == "renorm_refinement.csv") {
            w.write("plot_renorm.py", head + "rows = read('renorm_refinement.csv')\n"
                                             "dt = [float(r['dt_model']) for r in rows]\n"
                                             "res = [float(r['mean_residual']) for r in rows]\n"
                                             "plt.loglog(dt, res, 'o-')\nplt.xlabel('dt')\nplt.ylabel('mean |residual|')\n"
                                             "plt.savefig(sys.argv[1] if len(sys.argv) > 1 else 'renorm.png')\n");
            out.push_back(dir / "plot_renorm.py");
        } else if (starts(n, "path_") && ends(n, ".csv")) {
            any_path = true;
        }
    }
    if (any_path) {
        w.write("plot_paths.py", head + "import glob\nfig, ax = plt.subplots(2, 1, sharex=True)\n"
                                        "for name in sorted(glob.glob('path_*.csv')):\n"
                                        "    rows = read(name)\n"
                                        "    t = [float(r['t']) for r in rows]\n"
                                        "    ax[0].plot(t, [float(r['mass']) for r in rows], lw=0.5)\n"
                                        "    ax[1].plot(t, [float(r['l2_energy']) for r in rows], lw=0.5)\n"
                                        "ax[0].set_ylabel('mass')\nax[1].set_ylabel('||rho||^2')\nax[1].set_xlabel('t')\n"
                                        "plt.savefig(sys.argv[1] if len(sys.argv) > 1 else 'paths.png')\n");
        out.push_back(dir / "plot_paths.py");
    }
    if (out.empty()) throw MissingArtifacts("no CSV artifacts in '" + dir.string() + "'");
    return out;
}

// ---- geometry identities and partition ---------------------------------

std::vector<GeometryIdentityRow> geometry_identities(const Atlas& atlas, int resolution) {
    bool sampled = false;
    for (const auto& c : atlas.charts) sampled = sampled || !c->model;
    const Atlas a = sampled ? atlas : with_resolution(atlas, resolution);
    double so = 0.0, la = 0.0, lb = 0.0, ad = 0.0;
    for (const auto& chart : a.charts) {
        const ChristoffelField G = christoffel(chart);
        const IdentityFields fl = identity_fields(chart);
        const Samples mask = interior_mask(chart->grid, 8);

        const auto act = second_order_action(fl.X, fl.psi, G);
        so = std::max(so, l2_norm(act.xx - act.hessian - act.drift, mask));

        const ScalarField ld = lambda_op(fl.psi, fl.X, G, LambdaMode::direct);
        const ScalarField lt = lambda_op(fl.psi, fl.X, G, LambdaMode::alternative);
        la = std::max(la, l2_norm(ld - lt, mask));

        const ScalarField Ff = map_values(fl.f, [](double x) { return std::sin(x); });
        const ScalarField dFf = map_values(fl.f, [](double x) { return std::cos(x); });
        const VectorField lhs = div_h(Ff * fl.S, G);
        const VectorField rhs = Ff * div_h(fl.S, G) + dFf * contract(fl.S, fl.f);
        const VectorField diff = lhs - rhs;
        double s2 = 0.0;
        for (int k = 0; k < chart->dim(); ++k) s2 += std::pow(l2_norm({chart, diff.c[k]}, mask), 2);
        lb = std::max(lb, std::sqrt(s2));

        const ScalarField lpsi = lambda_op(fl.psi_c, fl.X, G, LambdaMode::direct);
        const ScalarField aaphi = second_order(fl.X, fl.phi, G);
        ad = std::max(ad, std::abs(integrate_chart(lpsi * fl.phi) - integrate_chart(fl.psi_c * aaphi)));
    }
    return {{"second_order", so}, {"lambda_alt", la}, {"leibniz", lb}, {"adjoint", ad}};
}

double partition_sum_error(const Atlas& atlas, double margin) {
    const auto pou = make_partition(std::make_shared<const Atlas>(atlas), margin);
    double worst = 0.0;
    for (std::size_t k = 0; k < atlas.charts.size(); ++k) worst = std::max(worst, chart_partition_error(atlas, pou, k));
    return worst;
}

}  // namespace sce
