#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sce/renorm_function.hpp"
#include "sce/spde.hpp"

namespace sce {

// Truncation profile chi on [0, inf): chi(s) = s on [0, 1], chi = 2 on
// [2, inf), increasing and C^2. A0 = sup chi', A1 = sup |chi''|.
struct ChiProfile {
    std::string name;
    std::function<double(double)> chi;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
    double A0 = 0.0;
    double A1 = 0.0;
    std::vector<double> breakpoints;  // s where a higher derivative jumps
};

// chi(1 + t) = 1 + t + 4t^3 - 7t^4 + 3t^5 on [1, 2]: C^2 at both joints.
ChiProfile quintic_chi();
// Clamped cubic spline through (1, 1), the interior knots and (2, 2) with
// end slopes 1 and 0 (C^1 at the joints). Throws ConfigInvalid unless the
// knots lie in (1, 2) x (1, 2) and the spline is increasing.
ChiProfile spline_chi(std::vector<std::pair<double, double>> knots);
// Knot file: one "s chi" pair per line, '#' comments.
ChiProfile load_spline_chi(const std::filesystem::path& file);

// F_mu(xi) = mu chi(xi^2 / mu) with exact derivatives and certificates.
RenormFunction fmu_function(const ChiProfile& chi, double mu);
// F(xi) = xi^2 (no certificate: unbounded).
RenormFunction quadratic_function();
RenormFunction constant_function(double c);
// "linear" | "quadratic-trunc:<mu>" | "custom-spline:<file>[:<mu>]".
RenormFunction parse_renorm_function(const std::string& spec, double default_mu = 4.0);

std::vector<double> gf_eval(const RenormFunction& F, const std::vector<double>& xi);

// Central differences of F against F' and of F' against F'' on a probe grid
// over [lo, hi] (probes within 2 steps of a breakpoint are skipped).
struct DerivativeCheck {
    double max_dF_error = 0.0;
    double max_d2F_error = 0.0;
    bool ok = false;
};
DerivativeCheck check_derivatives(const RenormFunction& F, double lo, double hi, int probes = 2001, double tol = 1e-6);

// One inequality of the F_mu bound displays checked on the probe grid;
// margin = bound - value at the worst probe.
struct InequalityRow {
    std::string display;  // Fmu-bounds, Gmu-bounds or Fmu-Gmu-prop
    std::string name;
    double worst_margin = 0.0;
    double at_xi = 0.0;
    bool ok = false;
};

struct FmuReport {
    double mu = 0.0;
    double A0 = 0.0;
    double A1 = 0.0;
    std::vector<InequalityRow> rows;
    double C_chi = 0.0;  // smallest constant making both Fmu-Gmu-prop bounds hold
    bool ok = false;
};

// Probe grid covering [-3 sqrt(mu), 3 sqrt(mu)]. With throw_on_violation,
// InequalityViolation names the failing display and xi.
FmuReport fmu_suite(const ChiProfile& chi, double mu, bool throw_on_violation = false, int probes = 6001);

// |F_mu(xi) - xi^2| and |G_{F_mu}(xi) - xi^2| along mu at fixed probes.
struct FmuLimitRow {
    double xi = 0.0;
    std::vector<double> F_error;
    std::vector<double> G_error;
    bool monotone = false;  // both non-increasing in mu
};
std::vector<FmuLimitRow> fmu_limits(const ChiProfile& chi, const std::vector<double>& mus, const std::vector<double>& xis);

// Both sides of
//   F'(rho) Lambda(rho) - Lambda(F(rho)) = G_F(rho) Lambda(1) - F''(rho) a(rho)^2
//   (Div_h(rho a))^2 - a(rho)^2 = (rho Div_h a)^2 + 2 rho abar(rho)
// from independent code paths; L2 residuals on nodes 6 or more away from
// non-periodic faces.
struct CancellationResult {
    double lambda_identity = 0.0;
    double q_identity = 0.0;
};
CancellationResult cancellation_checks(const ScalarField& rho, const VectorField& a, const RenormFunction& F,
                                       const ChristoffelField& G);

struct RenormReport {
    std::map<std::string, double> terms;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
};

// Ito weak-form accumulator for a certified F (UnboundedRenormFunction otherwise).
WeakFormAccumulator renorm_accumulator(const CoefficientSet& c, const ScalarField& psi, const RenormFunction& F);

RenormReport renorm_residual(const Trajectory& traj, const RenormFunction& F, const ScalarField& psi,
                             const CoefficientSet& c, const BrownianDriver& driver);

// Mean |residual| over paths at each level of the joint refinement ladder.
struct RenormLevel {
    LevelSpec spec;
    double mean_residual = 0.0;
    double sigma = 0.0;  // standard error of the mean
    std::map<std::string, double> mean_abs_terms;
};
struct RenormRefinement {
    std::vector<RenormLevel> levels;
    std::vector<double> ratios;  // residual(l) / residual(l + 1)
    bool linear_collapse_exact = false;  // F = xi versus weak_form_residual on path 0, level 0
};
RenormRefinement renorm_refinement(const SimulationSetup& s, const RenormFunction& F, const std::string& psi,
                                   int levels);

// C_bar = sum_i (1/2 ||Lambda_i(1)||_inf + ||(Div_h a_i)^2||_inf) + ||Div_h u||_{L1_t Linf_x}.
double cbar(const CoefficientSet& c, double T);

struct AprioriReport {
    std::string preset;
    int paths = 0;
    double T = 0.0;
    double dt = 0.0;
    double rho0_energy = 0.0;
    double Cbar = 0.0;
    double bound = 0.0;        // exp(C_bar T) ||rho0||^2
    double esup_mean = 0.0;    // E sup_t ||rho(t)||^2
    double esup_sigma = 0.0;   // standard error
    double allowance = 0.0;    // E sup_t |running residual of the F_mu energy identity|
    double end_energy_mean = 0.0;
    double end_energy_sigma = 0.0;
    std::vector<double> times;
    std::vector<double> energy_mean;
    bool bound_ok = false;     // esup <= bound + 3 sigma + allowance
};

// Throws MCBudgetTooSmall below 64 paths. The allowance uses F_mu with
// mu = mu_allowance, large enough that F_mu(rho) = rho^2 on the run.
AprioriReport apriori_check(const SimulationSetup& s, double mu_allowance = 1e6);

struct UniquenessReport {
    double zero_max = 0.0;        // max |rho| over all paths for zero data
    double linearity_error = 0.0; // max |(rho_A - rho_B) - rho_delta|
    double diff_esup = 0.0;       // E sup ||rho_A - rho_B||^2
    double diff_bound = 0.0;      // exp(C_bar T) ||delta||^2 + 3 sigma + allowance
    bool ok = false;
};
// rho_A from rho0 + delta, rho_B from rho0, rho_delta from delta, all on the
// same increments.
UniquenessReport uniqueness_check(const SimulationSetup& s, const std::string& delta = "bump");

}  // namespace sce
