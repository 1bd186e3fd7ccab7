#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sce/coefficients.hpp"
#include "sce/renorm_function.hpp"

namespace sce {

// Increments dW^i_k ~ Normal(0, dt) of N independent Brownian motions on
// [0, T], one stream per (seed, path). Regenerating with the same arguments
// reproduces the table bit for bit.
class BrownianDriver {
public:
    BrownianDriver(int noises, double dt, double horizon, std::uint64_t seed, std::uint64_t path = 0);

    int noises() const { return noises_; }
    int steps() const { return steps_; }
    double dt() const { return dt_; }
    double horizon() const { return horizon_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t path() const { return path_; }

    double dW(int step, int i) const { return inc_[static_cast<std::size_t>(step) * noises_ + i]; }
    std::span<const double> increments(int step) const;
    // W^i at step k (sum of the first k increments).
    double W(int step, int i) const;

    // The same Brownian path sampled on a grid `factor` times coarser: each
    // coarse increment is the sum of `factor` consecutive fine ones.
    BrownianDriver coarsen(int factor) const;

    // Stream seed for a path: splitmix64 of the run seed mixed with the path id.
    static std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t path);

private:
    BrownianDriver() = default;
    int noises_ = 0;
    int steps_ = 0;
    double dt_ = 0.0;
    double horizon_ = 0.0;
    std::uint64_t seed_ = 0;
    std::uint64_t path_ = 0;
    std::vector<double> inc_;  // [step * noises + i]
};

// Velocity u (steady) and noise fields a_i with the derived fields the weak
// forms use. Lambda_i(1) is kept in both spellings.
struct CoefficientSet {
    std::string name;
    ChartPtr chart;
    ChristoffelField gamma;
    VectorField u;
    std::vector<VectorField> a;
    ScalarField div_u;
    std::vector<ScalarField> div_a;
    std::vector<VectorField> abar;           // (Div_h a_i) a_i
    std::vector<SymTensor2Field> ahat;       // a_i a_i
    std::vector<VectorField> nabla_aa;       // nabla_{a_i} a_i
    std::vector<ScalarField> lambda1;        // Div_h^2(ahat_i) - Div_h(nabla_{a_i} a_i)
    std::vector<ScalarField> lambda1_alt;    // Div_h(abar_i)
    double div_u_sup = 0.0;                  // ||Div_h u||_inf
    double dt_limit = 0.0;                   // dt_max, cached by make_coefficients

    int noises() const { return static_cast<int>(a.size()); }
};

CoefficientSet make_coefficients(const ChartPtr& chart, const VectorField& u, std::vector<VectorField> a,
                                 std::string name = "custom");
CoefficientSet make_coefficients(const ChartPtr& chart, const CoefficientPreset& preset);

// The single chart an SPDE run lives on: the torus chart with `resolution`
// nodes per axis, or the unit-volume north chart of the sphere with spacing
// close to 1/resolution on both axes. Densities must vanish near its
// non-periodic faces.
ChartPtr simulation_chart(const Atlas& atlas, int resolution);

// dt_max = 0.25 / (max_i sup sum_k (a_i^k/h_k)^2 + sup sum_k |u^k|/h_k + delta/h_min^2),
// delta = 1e-12: the explicit bound written per axis.
double dt_max(const CoefficientSet& c);

// Flux-form stencils of the scheme (second order, conservative). The mass
// of Div_h(rho X) and Lambda(rho) under volume_weights is zero up to rounding.
ScalarField scheme_div(const ScalarField& rho, const VectorField& X);
ScalarField scheme_lambda(const ScalarField& rho, const VectorField& a);

// Quadrature used for mass, energy and the weak forms: sqrt(det h) times the
// cell volume at every node. Exact telescoping partner of the flux stencils.
Samples volume_weights(const Chart& chart);

struct SolutionState {
    double t = 0.0;
    int step = 0;
    std::uint64_t path = 0;
    ScalarField rho;
    double mass = 0.0;  // int rho dV_h
};

SolutionState initial_state(const ScalarField& rho0, std::uint64_t path = 0);
double mass_of(const ScalarField& rho);
double energy_of(const ScalarField& rho);  // int rho^2 dV_h

// rho' = rho - Div_h(rho u) dt - sum_i Div_h(rho a_i) dW^i + 1/2 sum_i Lambda_i(rho) dt.
// Throws CFLViolation for dt > dt_max and NonFiniteState on overflow.
SolutionState ito_step(const SolutionState& s, const CoefficientSet& c, std::span<const double> dW, double dt);

using Trajectory = std::vector<SolutionState>;
using StepObserver =
    std::function<void(const SolutionState& before, const SolutionState& after, std::span<const double> dW, double dt)>;

// Streams every step to `observer` and returns the final state; memory stays
// O(grid) however long the run.
SolutionState simulate_stream(const ScalarField& rho0, const CoefficientSet& c, const BrownianDriver& driver,
                              const StepObserver& observer);
// Every state from t = 0 to T.
Trajectory simulate(const ScalarField& rho0, const CoefficientSet& c, const BrownianDriver& driver);

enum class WeakForm { ito, stratonovich };

// Terms of the renormalized weak form for F(rho) tested against psi:
//   T0     int F(rho_0) psi
//   T_u    sum dt int F(rho) u(psi)
//   T_a    sum_i sum dW^i int F(rho) a_i(psi)
//   T_aa   1/2 sum_i sum dt int F(rho) a_i(a_i(psi))
//   T_Gu   -sum dt int G_F(rho) Div_h u psi
//   T_Ga   -sum_i sum dW^i int G_F(rho) Div_h a_i psi
//   T_L1   -1/2 sum_i sum dt int Lambda_i(1) G_F(rho) psi
//   T_F2   1/2 sum_i sum dt int F''(rho) (rho Div_h a_i)^2 psi
//   T_abar -sum_i sum dt int G_F(rho) abar_i(psi)
// Ito sums use left endpoints. The Stratonovich form averages the endpoints
// in T_a and T_Ga and has no T_aa, T_L1, T_F2, T_abar. With F(xi) = xi every
// G_F and F'' term is exactly zero and the forms reduce to the linear ones.
struct WeakFormTerms {
    double t = 0.0;
    double lhs = 0.0;  // int F(rho(t)) psi
    double rhs = 0.0;
    double residual = 0.0;  // |lhs - rhs|
    std::map<std::string, double> terms;
};

class WeakFormAccumulator {
public:
    WeakFormAccumulator(const CoefficientSet& c, const ScalarField& psi, RenormFunction F, WeakForm form);
    void start(const SolutionState& s0);
    void step(const SolutionState& before, const SolutionState& after, std::span<const double> dW, double dt);
    // Residual at the time of the last state seen.
    WeakFormTerms current() const;

private:
    RenormFunction F_;
    WeakForm form_;
    Samples w_;                              // volume weights
    Samples psi_w_, u_psi_w_;                // w psi, w u(psi)
    Samples divu_psi_w_;                     // w Div u psi
    std::vector<Samples> a_psi_w_, aa_psi_w_, diva_psi_w_, lambda1_psi_w_, diva2_psi_w_, abar_psi_w_;
    std::map<std::string, double> acc_;
    double t_ = 0.0;
    double lhs_ = 0.0;
    Samples Fk_, Gk_;  // F and G_F at the left endpoint of the current step
};

// Absolute residual of the linear weak form at the final state.
double weak_form_residual(const Trajectory& traj, const ScalarField& psi, const CoefficientSet& c,
                          const BrownianDriver& driver, WeakForm form);

// a(a(psi)); the Ito drift correction for test function psi is half of it.
ScalarField strat_to_ito_correction(const ScalarField& psi, const VectorField& a);

// A fully specified run: manifold, grid, time step and Monte Carlo budget.
struct SimulationSetup {
    AtlasPtr atlas;
    int resolution = 32;
    double dt = 0.0;    // 0 picks T/m with m the smallest count keeping dt <= cfl * dt_max
    double cfl = 0.9;
    double T = 1.0;
    int paths = 1;
    std::uint64_t seed = 1;
    std::string preset = "generic";
    std::string rho0 = "wave";
    int threads = 1;
};

struct PreparedRun {
    CoefficientSet coeffs;
    ScalarField rho0;
    double dt = 0.0;
    int steps = 0;
};

// Chart, coefficients and initial density at a resolution; dt <= 0 selects
// the automatic step. Throws ConfigInvalid.
PreparedRun prepare_run(const SimulationSetup& s, int resolution, double dt);
PreparedRun prepare_run(const SimulationSetup& s);

// Test functions: "one" or "fourier:k" (cos 2 pi k z / L along the last,
// periodic, chart axis). Throws ConfigInvalid.
ScalarField test_function(const std::string& spec, const ChartPtr& chart);

// Joint refinement ladder: level l has resolution r 2^l and dt_0 / 4^l, and
// every level is driven by the same Brownian path (coarsened from the finest).
struct LevelSpec {
    int resolution = 0;
    double dt = 0.0;
    int steps = 0;
};
std::vector<LevelSpec> refinement_ladder(const SimulationSetup& s, int levels);

// Constant noise c d_z with u = 0 on the flat 1-torus, compared with the
// characteristics solution rho0(z - c W(t)). Errors are sup over nodes and
// over the level-0 step times, averaged over paths.
struct OracleLevel {
    LevelSpec spec;
    double mean_sup_error = 0.0;
    double max_mass_drift_per_step = 0.0;
};
struct OracleStudy {
    std::vector<OracleLevel> levels;
    std::vector<double> ratios;  // error(l) / error(l + 1)
};
OracleStudy transport_oracle_study(const SimulationSetup& s, int levels);

// Ito and Stratonovich linear weak-form residuals on the same paths.
// gap = |residual_ito - residual_strat| averaged over paths.
struct GapLevel {
    LevelSpec spec;
    double mean_ito = 0.0;
    double mean_strat = 0.0;
    double mean_gap = 0.0;
    double gap_over_dt = 0.0;
};
struct GapStudy {
    std::vector<GapLevel> levels;
    std::vector<double> growth;  // (gap/dt)(l + 1) / (gap/dt)(l)
};
GapStudy weak_form_gap_study(const SimulationSetup& s, const std::string& psi, int levels);

// Runs fn(path) for path = 0..paths-1 on up to `threads` workers. Results must
// be stored by path id; the first exception (by path id) is rethrown.
void run_paths(int paths, int threads, const std::function<void(int)>& fn);

}  // namespace sce
