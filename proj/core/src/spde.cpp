#include "sce/spde.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

#include "sce/errors.hpp"

namespace sce {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Neighbour of node k one step along `axis`, or -1 past a non-periodic end.
struct Neighbours {
    const Grid& g;
    long next(std::size_t k, int axis) const {
        auto ij = g.ij(k);
        int& i = ij[axis];
        if (i + 1 < g.n[axis]) {
            ++i;
        } else if (g.periodic[axis]) {
            i = 0;
        } else {
            return -1;
        }
        return static_cast<long>(g.at(ij[0], ij[1]));
    }
    long prev(std::size_t k, int axis) const {
        auto ij = g.ij(k);
        int& i = ij[axis];
        if (i > 0) {
            --i;
        } else if (g.periodic[axis]) {
            i = g.n[axis] - 1;
        } else {
            return -1;
        }
        return static_cast<long>(g.at(ij[0], ij[1]));
    }
};

using Faces = std::array<Samples, 2>;  // flux through the face between k and next(k, axis)

Samples root_det(const Chart& c) {
    Samples s(c.grid.size());
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = c.metric.sqrt_det(k);
    return s;
}

// s rho X^a at every node.
std::array<Samples, 2> weighted_flux(const Samples& s, const Samples& rho, const VectorField& X, int dim) {
    std::array<Samples, 2> w;
    for (int a = 0; a < dim; ++a) {
        w[a].resize(rho.size());
        for (std::size_t k = 0; k < rho.size(); ++k) w[a][k] = s[k] * rho[k] * X.c[a][k];
    }
    return w;
}

Faces zero_faces(const Grid& g) {
    Faces f;
    for (int a = 0; a < g.dim; ++a) f[a].assign(g.size(), 0.0);
    return f;
}

// Adds coef * (centred face value of w_a) to F.
void add_advective_faces(const Grid& g, const std::array<Samples, 2>& w, double coef, Faces& F) {
    const Neighbours nb{g};
    for (int a = 0; a < g.dim; ++a)
        for (std::size_t k = 0; k < g.size(); ++k) {
            const long n = nb.next(k, a);
            if (n >= 0) F[a][k] += coef * 0.5 * (w[a][k] + w[a][static_cast<std::size_t>(n)]);
        }
}

// Adds coef * a_face * d(s rho a)_face to F: the compact face form of
// Lambda(rho) = Div_h(Div_h(rho a) a).
void add_lambda_faces(const Grid& g, const std::array<Samples, 2>& w, const VectorField& X, double coef, Faces& F) {
    const Neighbours nb{g};
    std::array<Samples, 2> central;
    for (int b = 0; b < g.dim; ++b) {
        central[b].assign(g.size(), 0.0);
        const double inv2h = 0.5 / g.h(b);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const long p = nb.prev(k, b), n = nb.next(k, b);
            const double wn = n >= 0 ? w[b][static_cast<std::size_t>(n)] : 0.0;
            const double wp = p >= 0 ? w[b][static_cast<std::size_t>(p)] : 0.0;
            central[b][k] = (wn - wp) * inv2h;
        }
    }
    for (int a = 0; a < g.dim; ++a) {
        const double ih = 1.0 / g.h(a);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const long nl = nb.next(k, a);
            if (nl < 0) continue;
            const auto n = static_cast<std::size_t>(nl);
            double d = (w[a][n] - w[a][k]) * ih;
            for (int b = 0; b < g.dim; ++b)
                if (b != a) d += 0.5 * (central[b][k] + central[b][n]);
            F[a][k] += coef * 0.5 * (X.c[a][k] + X.c[a][n]) * d;
        }
    }
}

// (1/s) sum_a (F_a(k) - F_a(prev k)) / h_a.
Samples face_divergence(const Grid& g, const Faces& F, const Samples& s) {
    const Neighbours nb{g};
    Samples out(g.size(), 0.0);
    for (int a = 0; a < g.dim; ++a) {
        const double ih = 1.0 / g.h(a);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const long p = nb.prev(k, a);
            const double fp = p >= 0 ? F[a][static_cast<std::size_t>(p)] : 0.0;
            out[k] += (F[a][k] - fp) * ih;
        }
    }
    for (std::size_t k = 0; k < g.size(); ++k) out[k] /= s[k];
    return out;
}

double dot(const Samples& a, const Samples& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

Samples times(const Samples& a, const Samples& b) {
    Samples out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
    return out;
}

const char* const kTermNames[] = {"T0", "T_u", "T_a", "T_aa", "T_Gu", "T_Ga", "T_L1", "T_F2", "T_abar"};

}  // namespace

RenormFunction linear_function(double range) {
    RenormFunction f;
    f.name = "linear";
    f.F = [](double x) { return x; };
    f.dF = [](double) { return 1.0; };
    f.d2F = [](double) { return 0.0; };
    f.certificate = BoundednessCertificate{-range, range, range, 1.0, 0.0};
    return f;
}

// ---- BrownianDriver --------------------------------------------------------

BrownianDriver::BrownianDriver(int noises, double dt, double horizon, std::uint64_t seed, std::uint64_t path)
    : noises_(noises), dt_(dt), horizon_(horizon), seed_(seed), path_(path) {
    if (noises < 1 || noises > 4) throw ConfigInvalid("number of noise fields must be in [1, 4]");
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ConfigInvalid("dt and T must be positive");
    const double steps = std::round(horizon / dt);
    if (steps < 1.0 || std::abs(steps * dt - horizon) > 1e-9 * horizon)
        throw ConfigInvalid("T must be an integer multiple of dt");
    steps_ = static_cast<int>(steps);
    std::mt19937_64 rng(stream_seed(seed, path));
    std::normal_distribution<double> normal(0.0, std::sqrt(dt));
    inc_.resize(static_cast<std::size_t>(steps_) * noises_);
    for (auto& x : inc_) x = normal(rng);
}

std::uint64_t BrownianDriver::stream_seed(std::uint64_t seed, std::uint64_t path) {
    return splitmix64(splitmix64(seed) ^ (path * 0xD1B54A32D192ED03ull + 1));
}

std::span<const double> BrownianDriver::increments(int step) const {
    return {inc_.data() + static_cast<std::size_t>(step) * noises_, static_cast<std::size_t>(noises_)};
}

double BrownianDriver::W(int step, int i) const {
    double w = 0.0;
    for (int k = 0; k < step; ++k) w += dW(k, i);
    return w;
}

BrownianDriver BrownianDriver::coarsen(int factor) const {
    if (factor < 1 || steps_ % factor != 0) throw ConfigInvalid("coarsening factor must divide the step count");
    BrownianDriver out;
    out.noises_ = noises_;
    out.steps_ = steps_ / factor;
    out.dt_ = dt_ * factor;
    out.horizon_ = horizon_;
    out.seed_ = seed_;
    out.path_ = path_;
    out.inc_.assign(static_cast<std::size_t>(out.steps_) * noises_, 0.0);
    for (int k = 0; k < steps_; ++k)
        for (int i = 0; i < noises_; ++i) out.inc_[static_cast<std::size_t>(k / factor) * noises_ + i] += dW(k, i);
    return out;
}

// ---- coefficients ----------------------------------------------------------

CoefficientSet make_coefficients(const ChartPtr& chart, const VectorField& u, std::vector<VectorField> a,
                                 std::string name) {
    if (a.empty() || a.size() > 4) throw ConfigInvalid("number of noise fields must be in [1, 4]");
    require_same_chart(chart, u.chart);
    for (const auto& ai : a) require_same_chart(chart, ai.chart);
    CoefficientSet c;
    c.name = std::move(name);
    c.chart = chart;
    c.gamma = christoffel(chart);
    c.u = u;
    c.a = std::move(a);
    c.div_u = div_h(c.u, c.gamma);
    c.div_u_sup = max_abs(c.div_u.v);
    const ScalarField one = constant_scalar(chart, 1.0);
    for (const auto& ai : c.a) {
        c.div_a.push_back(div_h(ai, c.gamma));
        c.abar.push_back(c.div_a.back() * ai);
        c.ahat.push_back(hat(ai));
        c.nabla_aa.push_back(covariant_self(ai, c.gamma));
        c.lambda1.push_back(lambda_op(one, ai, c.gamma, LambdaMode::alternative));
        c.lambda1_alt.push_back(div_h(c.abar.back(), c.gamma));
    }
    c.dt_limit = dt_max(c);
    return c;
}

CoefficientSet make_coefficients(const ChartPtr& chart, const CoefficientPreset& preset) {
    std::vector<VectorField> a;
    for (const auto& f : preset.a) a.push_back(sample_vector(chart, f));
    return make_coefficients(chart, sample_vector(chart, preset.u), std::move(a), preset.name);
}

ChartPtr simulation_chart(const Atlas& atlas, int resolution) {
    if (resolution < 8) throw ConfigInvalid("resolution must be at least 8");
    if (is_sphere(atlas)) {
        const Atlas uv = atlas.unit_volume ? atlas : build_unit_volume_atlas(atlas);
        const Chart& north = *uv.charts[0];
        const int n0 = static_cast<int>(std::lround(north.grid.extent(0) * resolution)) + 1;
        return regrid(north, {n0, resolution});
    }
    if (atlas.charts.size() != 1) throw ConfigInvalid("simulations need a torus or the sphere fixture");
    const Chart& c0 = *atlas.charts[0];
    for (int a = 0; a < c0.dim(); ++a)
        if (!c0.grid.periodic[a]) throw ConfigInvalid("simulations need a periodic single-chart manifold");
    return regrid(c0, {resolution, resolution});
}

double dt_max(const CoefficientSet& c) {
    const Grid& g = c.chart->grid;
    double hmin = g.h(0);
    for (int a = 1; a < g.dim; ++a) hmin = std::min(hmin, g.h(a));
    double noise = 0.0;
    for (const auto& ai : c.a) {
        double sup = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            double s = 0.0;
            for (int a = 0; a < g.dim; ++a) s += std::pow(ai.c[a][k] / g.h(a), 2);
            sup = std::max(sup, s);
        }
        noise = std::max(noise, sup);
    }
    double drift = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        double s = 0.0;
        for (int a = 0; a < g.dim; ++a) s += std::abs(c.u.c[a][k]) / g.h(a);
        drift = std::max(drift, s);
    }
    return 0.25 / (noise + drift + 1e-12 / (hmin * hmin));
}

ScalarField scheme_div(const ScalarField& rho, const VectorField& X) {
    require_same_chart(rho.chart, X.chart);
    const Grid& g = rho.chart->grid;
    const Samples s = root_det(*rho.chart);
    Faces F = zero_faces(g);
    add_advective_faces(g, weighted_flux(s, rho.v, X, g.dim), 1.0, F);
    return {rho.chart, face_divergence(g, F, s)};
}

ScalarField scheme_lambda(const ScalarField& rho, const VectorField& a) {
    require_same_chart(rho.chart, a.chart);
    const Grid& g = rho.chart->grid;
    const Samples s = root_det(*rho.chart);
    Faces F = zero_faces(g);
    add_lambda_faces(g, weighted_flux(s, rho.v, a, g.dim), a, 1.0, F);
    return {rho.chart, face_divergence(g, F, s)};
}

Samples volume_weights(const Chart& chart) {
    const Grid& g = chart.grid;
    double cell = 1.0;
    for (int a = 0; a < g.dim; ++a) cell *= g.h(a);
    Samples w(g.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = cell * chart.metric.sqrt_det(k);
    return w;
}

double mass_of(const ScalarField& rho) { return dot(volume_weights(*rho.chart), rho.v); }

double energy_of(const ScalarField& rho) {
    const Samples w = volume_weights(*rho.chart);
    double e = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) e += w[k] * rho.v[k] * rho.v[k];
    return e;
}

SolutionState initial_state(const ScalarField& rho0, std::uint64_t path) {
    SolutionState s;
    s.path = path;
    s.rho = rho0;
    s.mass = mass_of(rho0);
    return s;
}

// ---- time stepping ---------------------------------------------------------

SolutionState ito_step(const SolutionState& s, const CoefficientSet& c, std::span<const double> dW, double dt) {
    require_same_chart(s.rho.chart, c.chart);
    if (static_cast<int>(dW.size()) != c.noises()) throw ConfigInvalid("one Brownian increment per noise field");
    const double bound = c.dt_limit > 0.0 ? c.dt_limit : dt_max(c);
    if (!(dt > 0.0) || dt > bound * (1.0 + 1e-12))
        throw CFLViolation("dt = " + std::to_string(dt) + " exceeds dt_max = " + std::to_string(bound));
    const Grid& g = c.chart->grid;
    const Samples sq = root_det(*c.chart);
    Faces F = zero_faces(g);
    add_advective_faces(g, weighted_flux(sq, s.rho.v, c.u, g.dim), dt, F);
    for (int i = 0; i < c.noises(); ++i) {
        const auto w = weighted_flux(sq, s.rho.v, c.a[i], g.dim);
        add_advective_faces(g, w, dW[i], F);
        add_lambda_faces(g, w, c.a[i], -0.5 * dt, F);
    }
    const Samples d = face_divergence(g, F, sq);
    SolutionState out;
    out.t = s.t + dt;
    out.step = s.step + 1;
    out.path = s.path;
    out.rho.chart = s.rho.chart;
    out.rho.v.resize(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
        out.rho.v[k] = s.rho.v[k] - d[k];
        if (!std::isfinite(out.rho.v[k]))
            throw NonFiniteState("non-finite density at step " + std::to_string(out.step) + ", path " +
                                 std::to_string(out.path));
    }
    out.mass = mass_of(out.rho);
    return out;
}

SolutionState simulate_stream(const ScalarField& rho0, const CoefficientSet& c, const BrownianDriver& driver,
                              const StepObserver& observer) {
    if (driver.noises() != c.noises()) throw ConfigInvalid("driver and coefficients disagree on the noise count");
    SolutionState s = initial_state(rho0, driver.path());
    for (int k = 0; k < driver.steps(); ++k) {
        SolutionState next = ito_step(s, c, driver.increments(k), driver.dt());
        if (observer) observer(s, next, driver.increments(k), driver.dt());
        s = std::move(next);
    }
    return s;
}

Trajectory simulate(const ScalarField& rho0, const CoefficientSet& c, const BrownianDriver& driver) {
    Trajectory traj;
    traj.reserve(static_cast<std::size_t>(driver.steps()) + 1);
    traj.push_back(initial_state(rho0, driver.path()));
    simulate_stream(rho0, c, driver, [&](const SolutionState&, const SolutionState& after, auto, double) {
        traj.push_back(after);
    });
    return traj;
}

// ---- weak forms ------------------------------------------------------------

WeakFormAccumulator::WeakFormAccumulator(const CoefficientSet& c, const ScalarField& psi, RenormFunction F,
                                         WeakForm form)
    : F_(std::move(F)), form_(form) {
    require_same_chart(c.chart, psi.chart);
    w_ = volume_weights(*c.chart);
    psi_w_ = times(w_, psi.v);
    u_psi_w_ = times(w_, apply(c.u, psi).v);
    divu_psi_w_ = times(psi_w_, c.div_u.v);
    for (int i = 0; i < c.noises(); ++i) {
        a_psi_w_.push_back(times(w_, apply(c.a[i], psi).v));
        aa_psi_w_.push_back(times(w_, second_order(c.a[i], psi, c.gamma).v));
        diva_psi_w_.push_back(times(psi_w_, c.div_a[i].v));
        lambda1_psi_w_.push_back(times(psi_w_, c.lambda1[i].v));
        diva2_psi_w_.push_back(times(diva_psi_w_.back(), c.div_a[i].v));
        abar_psi_w_.push_back(times(w_, apply(c.abar[i], psi).v));
    }
}

void WeakFormAccumulator::start(const SolutionState& s0) {
    acc_.clear();
    for (const char* name : kTermNames) acc_[name] = 0.0;
    const std::size_t n = s0.rho.v.size();
    Fk_.resize(n);
    Gk_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        Fk_[k] = F_.F(s0.rho.v[k]);
        Gk_[k] = gf(F_, s0.rho.v[k]);
    }
    acc_["T0"] = dot(Fk_, psi_w_);
    lhs_ = acc_["T0"];
    t_ = s0.t;
}

void WeakFormAccumulator::step(const SolutionState& before, const SolutionState& after, std::span<const double> dW,
                               double dt) {
    if (Fk_.empty()) start(before);
    const std::size_t n = after.rho.v.size();
    Samples F1(n), G1(n);
    for (std::size_t k = 0; k < n; ++k) {
        F1[k] = F_.F(after.rho.v[k]);
        G1[k] = gf(F_, after.rho.v[k]);
    }
    const int N = static_cast<int>(a_psi_w_.size());
    acc_["T_u"] += dt * dot(Fk_, u_psi_w_);
    acc_["T_Gu"] -= dt * dot(Gk_, divu_psi_w_);
    if (form_ == WeakForm::ito) {
        Samples F2r2(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double r = before.rho.v[k];
            F2r2[k] = F_.d2F(r) * r * r;
        }
        for (int i = 0; i < N; ++i) {
            acc_["T_a"] += dW[i] * dot(Fk_, a_psi_w_[i]);
            acc_["T_aa"] += 0.5 * dt * dot(Fk_, aa_psi_w_[i]);
            acc_["T_Ga"] -= dW[i] * dot(Gk_, diva_psi_w_[i]);
            acc_["T_L1"] -= 0.5 * dt * dot(Gk_, lambda1_psi_w_[i]);
            acc_["T_F2"] += 0.5 * dt * dot(F2r2, diva2_psi_w_[i]);
            acc_["T_abar"] -= dt * dot(Gk_, abar_psi_w_[i]);
        }
    } else {
        Samples Fm(n), Gm(n);
        for (std::size_t k = 0; k < n; ++k) {
            Fm[k] = 0.5 * (Fk_[k] + F1[k]);
            Gm[k] = 0.5 * (Gk_[k] + G1[k]);
        }
        for (int i = 0; i < N; ++i) {
            acc_["T_a"] += dW[i] * dot(Fm, a_psi_w_[i]);
            acc_["T_Ga"] -= dW[i] * dot(Gm, diva_psi_w_[i]);
        }
    }
    lhs_ = dot(F1, psi_w_);
    t_ = after.t;
    Fk_ = std::move(F1);
    Gk_ = std::move(G1);
}

WeakFormTerms WeakFormAccumulator::current() const {
    WeakFormTerms out;
    out.t = t_;
    out.lhs = lhs_;
    out.terms = acc_;
    for (const char* name : kTermNames) out.rhs += acc_.at(name);
    out.residual = std::abs(out.lhs - out.rhs);
    return out;
}

double weak_form_residual(const Trajectory& traj, const ScalarField& psi, const CoefficientSet& c,
                          const BrownianDriver& driver, WeakForm form) {
    if (traj.empty()) throw ConfigInvalid("empty trajectory");
    if (static_cast<int>(traj.size()) != driver.steps() + 1) throw ConfigInvalid("trajectory does not match driver");
    WeakFormAccumulator acc(c, psi, linear_function(), form);
    acc.start(traj.front());
    for (std::size_t k = 0; k + 1 < traj.size(); ++k)
        acc.step(traj[k], traj[k + 1], driver.increments(static_cast<int>(k)), driver.dt());
    return acc.current().residual;
}

ScalarField strat_to_ito_correction(const ScalarField& psi, const VectorField& a) {
    require_same_chart(psi.chart, a.chart);
    return second_order(a, psi, christoffel(a.chart));
}

// ---- runs and studies ------------------------------------------------------

PreparedRun prepare_run(const SimulationSetup& s, int resolution, double dt) {
    if (!s.atlas) throw ConfigInvalid("no manifold fixture");
    if (!(s.T > 0.0)) throw ConfigInvalid("T must be positive");
    if (!(s.cfl > 0.0) || s.cfl > 1.0) throw ConfigInvalid("cfl fraction must be in (0, 1]");
    PreparedRun r;
    const ChartPtr chart = simulation_chart(*s.atlas, resolution);
    r.coeffs = make_coefficients(chart, coefficient_preset(s.preset, *s.atlas));
    r.rho0 = sample_scalar(chart, initial_density(s.rho0, *s.atlas));
    if (dt <= 0.0) {
        const double m = std::ceil(s.T / (s.cfl * r.coeffs.dt_limit) - 1e-9);
        dt = s.T / std::max(1.0, m);
    }
    const double steps = std::round(s.T / dt);
    if (steps < 1.0 || std::abs(steps * dt - s.T) > 1e-9 * s.T) throw ConfigInvalid("T must be an integer multiple of dt");
    if (dt > r.coeffs.dt_limit * (1.0 + 1e-12))
        throw CFLViolation("dt = " + std::to_string(dt) + " exceeds dt_max = " + std::to_string(r.coeffs.dt_limit));
    r.dt = dt;
    r.steps = static_cast<int>(steps);
    return r;
}

PreparedRun prepare_run(const SimulationSetup& s) { return prepare_run(s, s.resolution, s.dt); }

ScalarField test_function(const std::string& spec, const ChartPtr& chart) {
    if (spec == "one") return constant_scalar(chart, 1.0);
    const std::string prefix = "fourier:";
    if (spec.rfind(prefix, 0) == 0) {
        int k = 0;
        try {
            k = std::stoi(spec.substr(prefix.size()));
        } catch (const std::exception&) {
            throw ConfigInvalid("bad test function '" + spec + "'");
        }
        const Grid& g = chart->grid;
        const int axis = g.dim - 1;
        if (!g.periodic[axis]) throw ConfigInvalid("fourier test functions need a periodic last axis");
        const double lo = g.lo[axis], L = g.extent(axis);
        return make_scalar(chart, [=](const Point& x) { return std::cos(2.0 * std::numbers::pi * k * (x[axis] - lo) / L); });
    }
    throw ConfigInvalid("unknown test function '" + spec + "' (expected one or fourier:k)");
}

std::vector<LevelSpec> refinement_ladder(const SimulationSetup& s, int levels) {
    if (levels < 1) throw ConfigInvalid("at least one refinement level");
    const PreparedRun base = prepare_run(s);
    std::vector<LevelSpec> out;
    int factor = 1;
    for (int l = 0; l < levels; ++l) {
        out.push_back({s.resolution * (1 << l), base.dt / factor, base.steps * factor});
        factor *= 4;
    }
    return out;
}

namespace {

int pow4(int e) { return 1 << (2 * e); }

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

OracleStudy transport_oracle_study(const SimulationSetup& s, int levels) {
    if (!s.atlas || s.atlas->dim != 1 || is_sphere(*s.atlas)) throw ConfigInvalid("the transport oracle needs the 1-d torus");
    if (s.preset != "const") throw ConfigInvalid("the transport oracle needs the const preset");
    const auto ladder = refinement_ladder(s, levels);
    std::vector<PreparedRun> runs;
    for (const auto& l : ladder) runs.push_back(prepare_run(s, l.resolution, l.dt));
    const double c = runs[0].coeffs.a[0].c[0][0];
    const ChartScalarFn rho0 = initial_density(s.rho0, *s.atlas);
    const int P = s.paths;
    std::vector<std::vector<double>> err(ladder.size(), std::vector<double>(P, 0.0));
    std::vector<std::vector<double>> drift(ladder.size(), std::vector<double>(P, 0.0));
    run_paths(P, s.threads, [&](int p) {
        const BrownianDriver fine(1, ladder.back().dt, s.T, s.seed, static_cast<std::uint64_t>(p));
        for (std::size_t l = 0; l < ladder.size(); ++l) {
            const BrownianDriver drv = fine.coarsen(pow4(static_cast<int>(ladder.size() - 1 - l)));
            const int stride = pow4(static_cast<int>(l));
            const Chart& chart = *runs[l].coeffs.chart;
            double W = 0.0, e = 0.0, d = 0.0;
            simulate_stream(runs[l].rho0, runs[l].coeffs, drv,
                            [&](const SolutionState& before, const SolutionState& after, std::span<const double> dW, double) {
                                W += dW[0];
                                d = std::max(d, std::abs(after.mass - before.mass));
                                if (after.step % stride != 0) return;
                                for (std::size_t k = 0; k < after.rho.v.size(); ++k) {
                                    Point x = chart.grid.node(k);
                                    x[0] -= c * W;
                                    e = std::max(e, std::abs(after.rho.v[k] - rho0(chart, chart.wrap(x))));
                                }
                            });
            err[l][p] = e;
            drift[l][p] = d;
        }
    });
    OracleStudy out;
    for (std::size_t l = 0; l < ladder.size(); ++l)
        out.levels.push_back({ladder[l], mean_of(err[l]), *std::max_element(drift[l].begin(), drift[l].end())});
    for (std::size_t l = 0; l + 1 < out.levels.size(); ++l)
        out.ratios.push_back(out.levels[l].mean_sup_error / out.levels[l + 1].mean_sup_error);
    return out;
}

GapStudy weak_form_gap_study(const SimulationSetup& s, const std::string& psi_spec, int levels) {
    const auto ladder = refinement_ladder(s, levels);
    std::vector<PreparedRun> runs;
    std::vector<ScalarField> psis;
    for (const auto& l : ladder) {
        runs.push_back(prepare_run(s, l.resolution, l.dt));
        psis.push_back(test_function(psi_spec, runs.back().coeffs.chart));
    }
    const int P = s.paths;
    const int N = runs[0].coeffs.noises();
    std::vector<std::vector<double>> ito(ladder.size(), std::vector<double>(P)), strat = ito, gap = ito;
    run_paths(P, s.threads, [&](int p) {
        const BrownianDriver fine(N, ladder.back().dt, s.T, s.seed, static_cast<std::uint64_t>(p));
        for (std::size_t l = 0; l < ladder.size(); ++l) {
            const BrownianDriver drv = fine.coarsen(pow4(static_cast<int>(ladder.size() - 1 - l)));
            WeakFormAccumulator ai(runs[l].coeffs, psis[l], linear_function(), WeakForm::ito);
            WeakFormAccumulator as(runs[l].coeffs, psis[l], linear_function(), WeakForm::stratonovich);
            const SolutionState s0 = initial_state(runs[l].rho0, static_cast<std::uint64_t>(p));
            ai.start(s0);
            as.start(s0);
            simulate_stream(runs[l].rho0, runs[l].coeffs, drv,
                            [&](const SolutionState& b, const SolutionState& a, std::span<const double> dW, double dt) {
                                ai.step(b, a, dW, dt);
                                as.step(b, a, dW, dt);
                            });
            ito[l][p] = ai.current().residual;
            strat[l][p] = as.current().residual;
            gap[l][p] = std::abs(ito[l][p] - strat[l][p]);
        }
    });
    GapStudy out;
    for (std::size_t l = 0; l < ladder.size(); ++l) {
        GapLevel g{ladder[l], mean_of(ito[l]), mean_of(strat[l]), mean_of(gap[l]), 0.0};
        g.gap_over_dt = g.mean_gap / ladder[l].dt;
        out.levels.push_back(g);
    }
    for (std::size_t l = 0; l + 1 < out.levels.size(); ++l)
        out.growth.push_back(out.levels[l + 1].gap_over_dt / out.levels[l].gap_over_dt);
    return out;
}

void run_paths(int paths, int threads, const std::function<void(int)>& fn) {
    if (paths <= 0) return;
    const int workers = std::clamp(threads, 1, paths);
    if (workers == 1) {
        for (int p = 0; p < paths; ++p) fn(p);
        return;
    }
    std::atomic<int> next{0};
    std::mutex m;
    int failed_path = paths;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (int p = next++; p < paths; p = next++) {
                try {
                    fn(p);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (p < failed_path) {
                        failed_path = p;
                        failure = std::current_exception();
                    }
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace sce
