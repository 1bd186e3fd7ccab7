#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sce/errors.hpp"
#include "sce/harness.hpp"
#include "sce/renormalization.hpp"

using namespace sce;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sce_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("git blob ids match git hash-object") {
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config text round-trips through the parser") {
    RunConfig c;
    c.command = "renorm-check";
    c.seed = 12345678901234ULL;
    c.dt = 0.00125;
    c.eps_ladder = {0.16, 0.04, 0.01};
    c.F = "custom-spline:knots.txt:9";
    c.kink = true;
    const std::string t = config_text(c);
    CHECK(config_text(parse_config(t)) == t);
    CHECK(parse_config(t).dt == c.dt);
}

TEST_CASE("config errors are ConfigInvalid and map to exit code 2") {
    CHECK_THROWS_AS(parse_config("resolution = 32\nbogus = 1\n"), ConfigInvalid);
    CHECK_THROWS_AS(parse_config("resolution = 3x2\n"), ConfigInvalid);
    CHECK_THROWS_AS(parse_config("paths = 1\npaths = 2\n"), ConfigInvalid);
    RunConfig c = parse_config("command = simulate\nseed = 1\ndt_model = -0.1\n");
    try {
        validate(c);
        FAIL("dt <= 0 accepted");
    } catch (const std::exception& e) {
        CHECK(exit_code(e) == 2);
    }
    c.dt.reset();
    c.seed.reset();
    CHECK_THROWS_AS(validate(c), ConfigInvalid);  // stochastic commands need a seed
    CHECK(exit_code(NonFiniteState("x")) == 3);
    CHECK(exit_code(CheckFailed("x")) == 1);
}

TEST_CASE("atlas-check on the flat torus passes with an exact partition") {
    RunConfig c;
    c.command = "atlas-check";
    c.manifold = "torus2";
    c.resolution = 64;
    c.out = scratch("atlas");
    const RunManifest m = run_experiment(c);
    CHECK(m.passed());
    CHECK(exit_code(m) == 0);
    REQUIRE(!m.checks.empty());
    CHECK(m.checks[0].name == "partition-sum");
    CHECK(m.checks[0].value < 1e-12);
    CHECK(fs::exists(c.out / "atlas_check.json"));
    CHECK(fs::exists(c.out / "manifest.json"));
}

TEST_CASE("commutator-rate c2 on the flat torus: five eps rows and slope at least one") {
    RunConfig c;
    c.command = "commutator-rate";
    c.manifold = "torus2";
    c.kind = "c2";
    c.resolution = 96;
    c.out = scratch("c2");
    const RunManifest m = run_experiment(c);
    CHECK(m.passed());
    const std::string csv = slurp(c.out / "commutator_c2.csv");
    CHECK(csv.rfind("kind,eps,l2_norm,slope_so_far", 0) == 0);
    CHECK(count_lines(csv) == 6);
}

TEST_CASE("simulate CSVs are bit-identical across repeats and thread counts") {
    RunConfig c;
    c.command = "simulate";
    c.manifold = "torus2";
    c.resolution = 16;
    c.T = 0.2;
    c.paths = 5;
    c.seed = 77;
    const fs::path one = scratch("det1"), three = scratch("det3");
    c.out = one;
    run_experiment(c);
    c.threads = 3;
    c.out = three;
    const RunManifest m = run_experiment(c);
    CHECK(m.artifacts.size() == 6);
    for (const auto& name : m.artifacts) CHECK(slurp(one / name) == slurp(three / name));
}

TEST_CASE("emit_plots: scripts per artifact, MissingArtifacts on an empty directory") {
    const fs::path empty = scratch("empty");
    fs::create_directories(empty);
    CHECK_THROWS_AS(emit_plots(empty), MissingArtifacts);

    const fs::path dir = scratch("plots");
    fs::create_directories(dir);
    std::ofstream(dir / "commutator_r.csv") << "kind,eps,l2_norm,slope_so_far\nr,0.16,1,nan\n";
    std::ofstream(dir / "commutator_ru.csv") << "kind,eps,l2_norm,slope_so_far\nru,0.16,1,nan\n";
    std::ofstream(dir / "energy.csv") << "t,energy_mean,bound\n0,1,1\n";
    const auto scripts = emit_plots(dir);
    CHECK(scripts.size() == 3);
    CHECK(fs::exists(dir / "plot_commutator_r.py"));
    CHECK(fs::exists(dir / "plot_commutator_ru.py"));
    CHECK(slurp(dir / "plot_energy.py").find("bound") != std::string::npos);
}

TEST_CASE("format_double is shortest round-trip") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17}) CHECK(std::stod(format_double(x)) == x);
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("shipped fixture files: scaled torus passes atlas-check, example config and knots parse") {
    const fs::path dir = SCE_FIXTURE_DIR;
    RunConfig c;
    c.command = "atlas-check";
    c.manifold = (dir / "scaled_torus.fix").string();
    c.out = scratch("scaled");
    const RunManifest m = run_experiment(c);
    CHECK(m.passed());
    CHECK(m.input_hashes.count("manifold") == 1);
    const RunConfig r = load_config(dir / "renorm_torus.cfg");
    CHECK(r.command == "renorm-check");
    CHECK(r.seed == 1u);
    CHECK_NOTHROW(parse_renorm_function("custom-spline:" + (dir / "chi_knots.txt").string() + ":4"));
}
