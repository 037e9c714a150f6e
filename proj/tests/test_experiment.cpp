#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include <cfsde/experiment.hpp>
#include <cfsde/io.hpp>

using namespace cfsde;
namespace fs = std::filesystem;

namespace {

nlohmann::json base_doc() {
    nlohmann::json doc;
    doc["experiment"] = "moments";
    doc["simulation"] = {{"alpha", 0.75}, {"a", 0.0},      {"T", 1.0},
                         {"lambda", 1.0}, {"u0", 1.0},     {"n_steps", 32},
                         {"n_paths", 400}, {"master_seed", 21}};
    doc["sigma"] = {{"kind", "linear"}, {"L", 1.0}};
    return doc;
}

bool has_error(const ConfigValidation& v, std::string_view needle) {
    return std::any_of(v.errors.begin(), v.errors.end(),
                       [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cfsde_test_" + std::to_string(std::rand()) + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

}  // namespace

TEST_CASE("a complete config validates and resolves defaults") {
    const auto v = validate_config(base_doc().dump());
    CHECK(v.errors.empty());
    REQUIRE(v.config.has_value());
    CHECK(v.config->kind == ExperimentKind::Moments);
    CHECK(v.config->simulation.alpha.value() == 0.75);
    CHECK(v.config->simulation.overflow_threshold == 1e12);
    CHECK(v.config->output_dir == fs::path("."));
    CHECK(v.config->extra.fit_fraction == 0.5);
    CHECK(v.config->extra.lambda_grid == std::vector<double>{0.5, 1.0, 1.5, 2.0});
}

TEST_CASE("an empty config names the missing experiment kind") {
    const auto v = validate_config("");
    CHECK_FALSE(v.config.has_value());
    CHECK(has_error(v, "missing experiment kind"));
}

TEST_CASE("validation collects every error instead of stopping at one") {
    auto doc = base_doc();
    doc["experiment"] = "teleport";
    doc["simulation"]["alpha"] = 1.5;
    doc["simulation"]["lambda"] = -2.0;
    doc["sigma"] = {{"kind", "linear"}, {"L", 0.0}};
    const auto v = validate_config(doc.dump());
    CHECK_FALSE(v.config.has_value());
    CHECK(has_error(v, "unknown experiment kind 'teleport'"));
    CHECK(has_error(v, "alpha out of range (0,1]"));
    CHECK(has_error(v, "simulation.lambda must be positive"));
    CHECK(has_error(v, "sigma.L must be positive"));
    CHECK(v.errors.size() >= 4);
}

TEST_CASE("malformed text is rejected as a whole") {
    const auto v = validate_config("{not json");
    CHECK_FALSE(v.config.has_value());
    CHECK(has_error(v, "not valid JSON"));
}

TEST_CASE("range rules mirror the library preconditions") {
    SECTION("alpha at one is the classical limit") {
        auto doc = base_doc();
        doc["simulation"]["alpha"] = 1.0;
        const auto v = validate_config(doc.dump());
        REQUIRE(v.config.has_value());
        CHECK(v.config->simulation.alpha.value() == 1.0);
    }
    SECTION("low order requires the truncated start") {
        auto doc = base_doc();
        doc["simulation"]["alpha"] = 0.4;
        auto v = validate_config(doc.dump());
        CHECK(has_error(v, "requires truncated_start"));
        doc["simulation"]["truncated_start"] = true;
        v = validate_config(doc.dump());
        CHECK(v.errors.empty());
    }
    SECTION("growth fits need the supercritical order") {
        auto doc = base_doc();
        doc["experiment"] = "growth_t";
        doc["simulation"]["alpha"] = 0.4;
        doc["simulation"]["truncated_start"] = true;
        const auto v = validate_config(doc.dump());
        CHECK(has_error(v, "growth_t requires alpha > 1/2"));
    }
    SECTION("blowup needs a superlinear coefficient and room above u0^2") {
        auto doc = base_doc();
        doc["experiment"] = "blowup";
        doc["extra"] = {{"threshold", 0.5}};
        const auto v = validate_config(doc.dump());
        CHECK(has_error(v, "blowup requires a super_linear sigma"));
        CHECK(has_error(v, "extra.threshold must exceed u0^2"));
    }
    SECTION("superlinear exponent must exceed one") {
        auto doc = base_doc();
        doc["sigma"] = {{"kind", "super_linear"}, {"L", 1.0}, {"b", 1.0}};
        const auto v = validate_config(doc.dump());
        CHECK(has_error(v, "sigma.b must exceed 1"));
    }
}

TEST_CASE("contraction hypothesis violations warn without failing validation") {
    auto doc = base_doc();
    doc["experiment"] = "contraction";
    doc["extra"] = {{"beta_norm", 0.5}};
    const auto v = validate_config(doc.dump());
    CHECK(v.errors.empty());
    REQUIRE(v.config.has_value());
    REQUIRE_FALSE(v.warnings.empty());
    CHECK(v.warnings.front().find("below contraction threshold (lambda*Lip)^2 = 1") !=
          std::string::npos);

    doc["extra"].erase("beta_norm");
    const auto missing = validate_config(doc.dump());
    CHECK(has_error(missing, "contraction requires extra.beta_norm"));
}

TEST_CASE("unknown fields warn but do not invalidate") {
    auto doc = base_doc();
    doc["simulation"]["n_stepss"] = 64;
    doc["extra"] = {{"fit_fractionn", 0.5}};
    const auto v = validate_config(doc.dump());
    CHECK(v.errors.empty());
    CHECK(v.warnings.size() >= 2);
}

TEST_CASE("the config echo is itself a valid config") {
    auto doc = base_doc();
    doc["experiment"] = "growth_t";
    doc["output_dir"] = "/tmp/somewhere";
    doc["extra"] = {{"fit_fraction", 0.4}, {"slope_tolerance", 0.2}};
    const auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());

    const auto echo = experiment_config_to_json(*v.config);
    const auto again = validate_config(echo.dump());
    CHECK(again.errors.empty());
    CHECK(again.warnings.empty());
    REQUIRE(again.config.has_value());
    CHECK(experiment_config_to_json(*again.config) == echo);
}

TEST_CASE("moments run writes the series and passes the closed-form band") {
    TempDir dir;
    auto doc = base_doc();
    // Light-tailed noise level so the four-standard-error band is reliable
    // at a small path count.
    doc["simulation"]["lambda"] = 0.4;
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 0);
    CHECK(outcome.summary["checks"][0]["name"] == "moment_within_band");
    CHECK(outcome.summary["checks"][0]["pass"] == true);
    CHECK(outcome.summary["reproducibility"]["version"] == std::string(kVersion));

    const auto csv = read_file(dir.path / "moments.csv");
    CHECK(csv.rfind("t,m2,stderr,censored\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 34);

    const auto summary = nlohmann::json::parse(read_file(dir.path / "summary.json"));
    CHECK(summary["status"] == 0);
    CHECK(summary["config"]["simulation"]["master_seed"] == 21);
}

TEST_CASE("a zero coefficient yields the constant-moment pass") {
    TempDir dir;
    auto doc = base_doc();
    doc["sigma"] = {{"kind", "zero"}};
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 0);
    CHECK(outcome.summary["checks"][0]["name"] == "constant_moment");
}

TEST_CASE("an impossible tolerance turns into a check failure, not an error") {
    TempDir dir;
    auto doc = base_doc();
    doc["simulation"]["lambda"] = 0.4;
    doc["extra"] = {{"moment_band_stderrs", 1e-8}};
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 1);
    CHECK(outcome.summary["checks"][0]["pass"] == false);
    CHECK(fs::exists(dir.path / "moments.csv"));
    CHECK(fs::exists(dir.path / "summary.json"));
}

TEST_CASE("growth_t run reports the fit and its band") {
    TempDir dir;
    auto doc = base_doc();
    doc["experiment"] = "growth_t";
    doc["simulation"]["lambda"] = 0.4;
    doc["simulation"]["n_paths"] = 4000;
    doc["simulation"]["n_steps"] = 64;
    doc["extra"] = {{"slope_tolerance", 0.1}};
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 0);
    const auto& fit = outcome.summary["results"]["fit"];
    CHECK(fit["band"][0] == Catch::Approx(0.32));
    CHECK(fit["band"][1] == Catch::Approx(0.32));
    CHECK(std::abs(fit["slope"].get<double>() - 0.32) < 0.1);
}

TEST_CASE("growth_lambda run emits one row per noise level") {
    TempDir dir;
    auto doc = base_doc();
    doc["experiment"] = "growth_lambda";
    doc["simulation"]["n_paths"] = 2000;
    doc["extra"] = {{"lambda_grid", {0.2, 0.3, 0.4, 0.5}}, {"slope_rel_tolerance", 0.25}};
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 0);
    const auto csv = read_file(dir.path / "lambda_moments.csv");
    CHECK(csv.rfind("lambda,m2,stderr,censored\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(outcome.summary["results"]["t_eval"] == 1.0);
}

TEST_CASE("blowup run covers all three regimes") {
    SECTION("supercritical detector") {
        TempDir dir;
        auto doc = base_doc();
        doc["experiment"] = "blowup";
        doc["simulation"]["T"] = 0.5;
        doc["simulation"]["n_steps"] = 128;
        doc["simulation"]["n_paths"] = 1000;
        doc["sigma"] = {{"kind", "super_linear"}, {"L", 1.0}, {"b", 2.0}};
        doc["extra"] = {{"threshold", 50.0}};
        auto v = validate_config(doc.dump());
        REQUIRE(v.config.has_value());
        auto cfg = *v.config;
        cfg.output_dir = dir.path;

        const auto outcome = run_experiment(cfg);
        CHECK(outcome.status == 0);
        const auto& blow = outcome.summary["results"]["blowup"];
        CHECK(blow["regime"] == "supercritical");
        CHECK(blow["t_star_closed_form"].get<double>() == Catch::Approx(0.25));
        CHECK(blow["t_star_numeric"].is_number());
        CHECK(fs::exists(dir.path / "moments.csv"));
    }
    SECTION("critical closed form") {
        TempDir dir;
        auto doc = base_doc();
        doc["experiment"] = "blowup";
        doc["simulation"]["alpha"] = 0.5;
        doc["sigma"] = {{"kind", "super_linear"}, {"L", 1.0}, {"b", 2.0}};
        doc["extra"] = {{"b_start", 1.0}};
        auto v = validate_config(doc.dump());
        REQUIRE(v.config.has_value());
        auto cfg = *v.config;
        cfg.output_dir = dir.path;

        const auto outcome = run_experiment(cfg);
        CHECK(outcome.status == 0);
        const auto& blow = outcome.summary["results"]["blowup"];
        CHECK(blow["regime"] == "critical");
        CHECK(blow["t_star_closed_form"].get<double>() == Catch::Approx(std::exp(1.0)));
    }
    SECTION("subcritical bracket") {
        TempDir dir;
        auto doc = base_doc();
        doc["experiment"] = "blowup";
        doc["simulation"]["alpha"] = 0.25;
        doc["sigma"] = {{"kind", "super_linear"}, {"L", 1.0}, {"b", 2.0}};
        auto v = validate_config(doc.dump());
        REQUIRE(v.config.has_value());
        auto cfg = *v.config;
        cfg.output_dir = dir.path;

        const auto outcome = run_experiment(cfg);
        CHECK(outcome.status == 0);
        const auto& blow = outcome.summary["results"]["blowup"];
        CHECK(blow["regime"] == "subcritical");
        CHECK(blow["t_star_closed_form"].get<double>() == Catch::Approx(0.25));
        CHECK(blow["bracket_endpoints"][0].get<double>() > 0.0);
        CHECK(blow["bracket_endpoints"][1].get<double>() < 0.0);
    }
}

TEST_CASE("contraction run reports bounded ratios") {
    TempDir dir;
    auto doc = base_doc();
    doc["experiment"] = "contraction";
    doc["simulation"]["n_paths"] = 2000;
    doc["extra"] = {{"beta_norm", 4.0}};
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 0);
    CHECK(outcome.summary["results"]["theory_factor"].get<double>() == Catch::Approx(0.25));
    const auto csv = read_file(dir.path / "contraction.csv");
    CHECK(csv.rfind("iteration,d\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("gronwall run matches the equality case") {
    TempDir dir;
    auto doc = base_doc();
    doc["experiment"] = "gronwall_check";
    doc["simulation"]["n_steps"] = 256;
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 0);
    CHECK(outcome.summary["results"]["max_rel_error"].get<double>() < 1e-6);
    const auto csv = read_file(dir.path / "gronwall.csv");
    CHECK(csv.rfind("t,y,bound\n", 0) == 0);
}

TEST_CASE("precondition failures at run time report status 3") {
    TempDir dir;
    auto doc = base_doc();
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;
    // Forced past validation: an unusable path count the simulator rejects.
    cfg.simulation.n_paths = 0;

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 3);
    CHECK(outcome.summary.contains("error"));
    const auto summary = nlohmann::json::parse(read_file(dir.path / "summary.json"));
    CHECK(summary["status"] == 3);
}

TEST_CASE("an unwritable output directory reports status 3") {
    auto doc = base_doc();
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = "/proc/cfsde_forbidden";

    const auto outcome = run_experiment(cfg);
    CHECK(outcome.status == 3);
}

TEST_CASE("reruns from the echoed config reproduce byte-identical data") {
    TempDir dir_a;
    TempDir dir_b;
    auto doc = base_doc();
    doc["simulation"]["lambda"] = 0.4;
    doc["simulation"]["n_paths"] = 300;
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir_a.path;
    const auto first = run_experiment(cfg, 1);
    REQUIRE(first.status == 0);

    const auto echoed = validate_config(first.summary["config"].dump());
    REQUIRE(echoed.config.has_value());
    auto cfg2 = *echoed.config;
    cfg2.output_dir = dir_b.path;
    const auto second = run_experiment(cfg2, 4);
    REQUIRE(second.status == 0);

    CHECK(read_file(dir_a.path / "moments.csv") == read_file(dir_b.path / "moments.csv"));
}

TEST_CASE("the path dump matches the ensemble layout") {
    TempDir dir;
    auto doc = base_doc();
    doc["simulation"]["n_paths"] = 3;
    doc["simulation"]["n_steps"] = 4;
    auto v = validate_config(doc.dump());
    REQUIRE(v.config.has_value());
    auto cfg = *v.config;
    cfg.output_dir = dir.path;

    const auto outcome = run_simulate(cfg);
    CHECK(outcome.status == 0);
    const auto csv = read_file(dir.path / "paths.csv");
    CHECK(csv.rfind("path_id,step,t,u,overflow_flag\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 16);

    const auto ensemble = simulate_ensemble(cfg.simulation, cfg.sigma);
    const auto line_end = csv.find('\n', csv.find('\n') + 1);
    const auto first_row = csv.substr(csv.find('\n') + 1, line_end - csv.find('\n') - 1);
    CHECK(first_row == "0,0," + format_full(ensemble.grid[0]) + "," +
                           format_full(ensemble.at(0, 0)) + ",0");
}
