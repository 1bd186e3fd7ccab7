#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sce/atlas.hpp"

namespace sce {

// Flat key = value run description. Dimensionless model-time quantities carry
// the _model suffix (dt_model, T_model, eps_ladder_model).
struct RunConfig {
    std::string command;                 // atlas-check | commutator-rate | simulate | renorm-check | apriori
    std::string manifold = "torus2";     // built-in fixture name or fixture file
    int resolution = 32;
    double margin = 0.05;                // partition-of-unity margin (atlas-check)
    std::vector<double> eps_ladder;      // empty = default ladder
    std::optional<double> dt;            // empty = automatic (largest stable step dividing T)
    double T = 1.0;
    double cfl = 0.9;
    int paths = 1;
    std::optional<std::uint64_t> seed;   // required by stochastic commands
    std::string coeff_preset = "generic";
    std::string rho0 = "";               // empty = "bump" on the sphere, "wave" on tori
    std::string kind = "r";              // commutator kind
    bool kink = false;                   // commutator fixture with the kink density
    std::string F = "quadratic-trunc:4";
    std::string psi = "one";
    int levels = 3;                      // refinement levels (renorm-check)
    bool uniqueness = false;             // apriori: also run the uniqueness surrogate
    int threads = 1;
    std::filesystem::path out = "sce-out";
};

// Throws ConfigInvalid naming the offending key or line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& file);
// Canonical text: every key, fixed order, round-trips through parse_config.
std::string config_text(const RunConfig& c);
// Numeric fields positive (an explicit dt included), known command and
// kind, seed present for simulate / renorm-check / apriori.
void validate(const RunConfig& c);
bool is_stochastic(const std::string& command);

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct RunManifest {
    RunConfig config;
    std::string config_text;
    std::map<std::string, std::string> input_hashes;  // input label -> git blob SHA-1
    std::string tool_version;
    std::string started_utc;
    double wall_seconds = 0.0;
    std::vector<CheckResult> checks;
    std::vector<std::string> artifacts;  // file names inside config.out
    bool passed() const;
};

// Dispatches the command, writes CSV / JSON artifacts and then manifest.json
// into config.out. Property failures are recorded in the manifest checks;
// configuration and numeric errors propagate as exceptions.
RunManifest run_experiment(const RunConfig& config);

// 0 pass, 1 property failure, 2 configuration error, 3 numeric blow-up.
int exit_code(const RunManifest& m);
int exit_code(const std::exception& e);

// Git blob object id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(const std::string& content);

// Writes files into one run directory, each through a temporary file and an
// atomic rename; the manifest is written last.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir);
    const std::filesystem::path& dir() const { return dir_; }
    void write(const std::string& name, const std::string& content);
    const std::vector<std::string>& written() const { return written_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

// Locale-independent shortest round-trip formatting for CSV and JSON.
std::string format_double(double x);

// Python plotting scripts for the artifacts found in `dir`: one log-log
// script per commutator_<kind>.csv, one trajectory-vs-bound script for
// energy.csv, one for the per-path trajectories and one for the renorm
// refinement table. Throws MissingArtifacts when none is present.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir);

// L2 residuals of the four chart identities on one manifold at one
// resolution (nodes per axis):
//   second_order   X(X(psi)) - (nabla^2 psi)(X, X) - (nabla_X X)(psi)
//   lambda_alt     Lambda(psi) direct - alternative expression
//   leibniz        Div_h(F(f) S) - F(f) Div_h S - F'(f) S(df, .)
//   adjoint        int Lambda(psi) phi - int psi (nabla^2 phi (a, a) + (nabla_a a)(phi))
// On the sphere the fields are ambient restrictions; psi is compactly
// supported in the polar angle of the chart, and residual norms skip 8
// nodes at the non-periodic faces.
struct GeometryIdentityRow {
    std::string identity;
    double residual = 0.0;
};
std::vector<GeometryIdentityRow> geometry_identities(const Atlas& atlas, int resolution);

// max |sum_k U_k - 1| over the nodes of every chart.
double partition_sum_error(const Atlas& atlas, double margin);

}  // namespace sce
