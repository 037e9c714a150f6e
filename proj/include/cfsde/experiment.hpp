#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "blowup.hpp"
#include "calculus.hpp"
#include "ensemble.hpp"
#include "io.hpp"
#include "moments.hpp"
#include "sigma.hpp"
#include "types.hpp"
#include "version.hpp"

namespace cfsde {

enum class ExperimentKind { Moments, GrowthT, GrowthLambda, Blowup, Contraction, GronwallCheck };

inline std::string_view to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Moments: return "moments";
        case ExperimentKind::GrowthT: return "growth_t";
        case ExperimentKind::GrowthLambda: return "growth_lambda";
        case ExperimentKind::Blowup: return "blowup";
        case ExperimentKind::Contraction: return "contraction";
        case ExperimentKind::GronwallCheck: return "gronwall_check";
    }
    return "unknown";
}

inline std::optional<ExperimentKind> experiment_kind_from(std::string_view name) {
    if (name == "moments") return ExperimentKind::Moments;
    if (name == "growth_t") return ExperimentKind::GrowthT;
    if (name == "growth_lambda") return ExperimentKind::GrowthLambda;
    if (name == "blowup") return ExperimentKind::Blowup;
    if (name == "contraction") return ExperimentKind::Contraction;
    if (name == "gronwall_check") return ExperimentKind::GronwallCheck;
    return std::nullopt;
}

// Experiment-specific knobs; every field has a working default so a config
// may state only what it overrides.  The resolved values are echoed into
// every summary so a run can be reproduced from its own artifacts.
struct ExperimentExtra {
    double fit_fraction = 0.5;
    std::vector<double> lambda_grid{0.5, 1.0, 1.5, 2.0};
    std::optional<double> t_eval;          // growth_lambda abscissa; defaults to T
    double threshold = 1e6;                // blow-up detector moment threshold
    std::optional<double> beta_norm;       // contraction norm rate (required there)
    std::size_t n_iterations = 5;          // contraction iterations
    std::optional<double> b_start;         // critical-case auxiliary start
    double slope_tolerance = 0.1;          // growth_t band slack, absolute
    double slope_rel_tolerance = 0.1;      // growth_lambda band slack, relative
    double ratio_bound = 0.4;              // contraction pass bound
    double moment_band_stderrs = 4.0;      // moments pass band, in standard errors
    double delta = 1.0;                    // gronwall_check initial level
    double k = 1.0;                        // gronwall_check growth constant
    double ivp_rel_tolerance = 1e-6;       // gronwall_check match tolerance
};

struct ExperimentConfig {
    ExperimentKind kind;
    SimulationConfig simulation;
    SigmaSpec sigma;
    std::filesystem::path output_dir;
    ExperimentExtra extra;
};

// Full resolved echo, itself a valid config document: re-feeding it to
// validate_config reproduces the identical run.
inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json sim;
    sim["alpha"] = cfg.simulation.alpha.value();
    sim["a"] = cfg.simulation.window.a;
    sim["T"] = cfg.simulation.window.T;
    sim["lambda"] = cfg.simulation.lambda;
    sim["u0"] = cfg.simulation.u0;
    sim["n_steps"] = cfg.simulation.n_steps;
    sim["n_paths"] = cfg.simulation.n_paths;
    sim["master_seed"] = cfg.simulation.master_seed;
    sim["overflow_threshold"] = cfg.simulation.overflow_threshold;
    sim["truncated_start"] = cfg.simulation.truncated_start;
    sim["start_epsilon"] = cfg.simulation.start_epsilon;

    nlohmann::json sg;
    switch (cfg.sigma.kind()) {
        case SigmaKind::Linear:
            sg["kind"] = "linear";
            sg["L"] = cfg.sigma.scale();
            break;
        case SigmaKind::SuperLinear:
            sg["kind"] = "super_linear";
            sg["L"] = cfg.sigma.scale();
            sg["b"] = *cfg.sigma.superlinear_b();
            break;
        case SigmaKind::Custom:
            if (cfg.sigma.lip() == 0.0 && cfg.sigma.lower() == 0.0) {
                sg["kind"] = "zero";
            } else {
                throw std::invalid_argument(
                    "experiment_config_to_json: custom coefficients have no text form");
            }
            break;
    }

    nlohmann::json ex;
    ex["fit_fraction"] = cfg.extra.fit_fraction;
    ex["lambda_grid"] = cfg.extra.lambda_grid;
    ex["threshold"] = cfg.extra.threshold;
    ex["n_iterations"] = cfg.extra.n_iterations;
    ex["slope_tolerance"] = cfg.extra.slope_tolerance;
    ex["slope_rel_tolerance"] = cfg.extra.slope_rel_tolerance;
    ex["ratio_bound"] = cfg.extra.ratio_bound;
    ex["moment_band_stderrs"] = cfg.extra.moment_band_stderrs;
    ex["delta"] = cfg.extra.delta;
    ex["k"] = cfg.extra.k;
    ex["ivp_rel_tolerance"] = cfg.extra.ivp_rel_tolerance;
    if (cfg.extra.t_eval) ex["t_eval"] = *cfg.extra.t_eval;
    if (cfg.extra.beta_norm) ex["beta_norm"] = *cfg.extra.beta_norm;
    if (cfg.extra.b_start) ex["b_start"] = *cfg.extra.b_start;

    nlohmann::json doc;
    doc["experiment"] = std::string(to_string(cfg.kind));
    doc["simulation"] = sim;
    doc["sigma"] = sg;
    doc["output_dir"] = cfg.output_dir.string();
    doc["extra"] = ex;
    return doc;
}

// Validation result: config engaged only when errors is empty, never a
// partial construction.
struct ConfigValidation {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
};

// Structural and range validation of a config document, collecting every
// error rather than stopping at the first.
//
// GCC's optimizer cannot see that the "errors empty implies every optional
// engaged" invariant holds and reports spurious -Wmaybe-uninitialized on the
// final construction; the dereferences below are all guarded.
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"
#endif
inline ConfigValidation validate_config(std::string_view raw) {
    ConfigValidation v;
    auto& errs = v.errors;
    auto& warns = v.warnings;

    const bool blank = raw.find_first_not_of(" \t\r\n") == std::string_view::npos;
    const nlohmann::json doc =
        blank ? nlohmann::json::object() : nlohmann::json::parse(raw, nullptr, false);
    if (doc.is_discarded()) {
        errs.emplace_back("config: not valid JSON");
        return v;
    }
    if (!doc.is_object()) {
        errs.emplace_back("config: top level must be a JSON object");
        return v;
    }

    auto warn_unknown = [&](const nlohmann::json& obj, std::initializer_list<std::string_view> known,
                            const char* ctx) {
        for (const auto& item : obj.items()) {
            if (std::find(known.begin(), known.end(), item.key()) == known.end())
                warns.push_back(std::string("unknown field ") + ctx + "." + item.key() + " ignored");
        }
    };
    auto num_field = [&](const nlohmann::json& obj, const char* key, const char* ctx,
                         bool required) -> std::optional<double> {
        if (!obj.contains(key)) {
            if (required) errs.push_back(std::string(ctx) + "." + key + " is required");
            return std::nullopt;
        }
        if (!obj[key].is_number()) {
            errs.push_back(std::string(ctx) + "." + key + " must be a number");
            return std::nullopt;
        }
        return obj[key].get<double>();
    };
    auto uint_field = [&](const nlohmann::json& obj, const char* key, const char* ctx,
                          bool required) -> std::optional<std::uint64_t> {
        if (!obj.contains(key)) {
            if (required) errs.push_back(std::string(ctx) + "." + key + " is required");
            return std::nullopt;
        }
        if (!obj[key].is_number_unsigned()) {
            errs.push_back(std::string(ctx) + "." + key + " must be a nonnegative integer");
            return std::nullopt;
        }
        return obj[key].get<std::uint64_t>();
    };

    warn_unknown(doc, {"experiment", "simulation", "sigma", "output_dir", "extra"}, "config");

    // experiment -----------------------------------------------------------
    std::optional<ExperimentKind> kind;
    if (!doc.contains("experiment")) {
        errs.emplace_back("missing experiment kind");
    } else if (!doc["experiment"].is_string()) {
        errs.emplace_back("experiment must be a string");
    } else {
        const auto name = doc["experiment"].get<std::string>();
        kind = experiment_kind_from(name);
        if (!kind) errs.push_back("unknown experiment kind '" + name + "'");
    }

    // simulation -----------------------------------------------------------
    std::optional<double> alpha, a, T, lambda, u0;
    std::optional<std::uint64_t> n_steps, n_paths, seed;
    double overflow_threshold = 1e12;
    bool truncated_start = false;
    double start_epsilon = 0.0;
    if (!doc.contains("simulation") || !doc["simulation"].is_object()) {
        errs.emplace_back("missing simulation block");
    } else {
        const auto& sim = doc["simulation"];
        warn_unknown(sim,
                     {"alpha", "a", "T", "lambda", "u0", "n_steps", "n_paths", "master_seed",
                      "overflow_threshold", "truncated_start", "start_epsilon"},
                     "simulation");
        alpha = num_field(sim, "alpha", "simulation", true);
        if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) {
            errs.emplace_back("alpha out of range (0,1]");
            alpha.reset();
        }
        a = num_field(sim, "a", "simulation", true);
        if (a && !(*a >= 0.0)) {
            errs.emplace_back("simulation.a must be nonnegative");
            a.reset();
        }
        T = num_field(sim, "T", "simulation", true);
        if (T && a && !(*T > *a)) {
            errs.emplace_back("simulation.T must exceed simulation.a");
            T.reset();
        }
        lambda = num_field(sim, "lambda", "simulation", true);
        if (lambda && !(*lambda > 0.0)) {
            errs.emplace_back("simulation.lambda must be positive");
            lambda.reset();
        }
        u0 = num_field(sim, "u0", "simulation", true);
        if (u0 && (!(*u0 >= 0.0) || !std::isfinite(*u0))) {
            errs.emplace_back("simulation.u0 must be finite and nonnegative");
            u0.reset();
        }
        n_steps = uint_field(sim, "n_steps", "simulation", true);
        if (n_steps && *n_steps < 1) {
            errs.emplace_back("simulation.n_steps must be at least 1");
            n_steps.reset();
        }
        n_paths = uint_field(sim, "n_paths", "simulation", true);
        if (n_paths && *n_paths < 1) {
            errs.emplace_back("simulation.n_paths must be at least 1");
            n_paths.reset();
        }
        seed = uint_field(sim, "master_seed", "simulation", true);
        if (const auto ov = num_field(sim, "overflow_threshold", "simulation", false)) {
            if (*ov > 0.0)
                overflow_threshold = *ov;
            else
                errs.emplace_back("simulation.overflow_threshold must be positive");
        }
        if (sim.contains("truncated_start")) {
            if (sim["truncated_start"].is_boolean())
                truncated_start = sim["truncated_start"].get<bool>();
            else
                errs.emplace_back("simulation.truncated_start must be a boolean");
        }
        if (const auto eps = num_field(sim, "start_epsilon", "simulation", false)) {
            if (*eps >= 0.0 && (!a || !T || *eps < *T - *a))
                start_epsilon = *eps;
            else
                errs.emplace_back("simulation.start_epsilon must lie in [0, T-a)");
        }
    }

    // sigma ------------------------------------------------------------
    std::optional<SigmaSpec> sigma;
    if (!doc.contains("sigma")) {
        if (kind == ExperimentKind::GronwallCheck)
            sigma = SigmaSpec::zero();
        else
            errs.emplace_back("missing sigma block");
    } else if (!doc["sigma"].is_object()) {
        errs.emplace_back("sigma must be an object");
    } else {
        const auto& sg = doc["sigma"];
        warn_unknown(sg, {"kind", "L", "b"}, "sigma");
        if (!sg.contains("kind") || !sg["kind"].is_string()) {
            errs.emplace_back("sigma.kind is required");
        } else {
            const auto name = sg["kind"].get<std::string>();
            if (name == "zero") {
                sigma = SigmaSpec::zero();
            } else if (name == "linear") {
                auto L = num_field(sg, "L", "sigma", true);
                if (L && !(*L > 0.0)) {
                    errs.emplace_back("sigma.L must be positive");
                    L.reset();
                }
                if (L) sigma = SigmaSpec::linear(*L);
            } else if (name == "super_linear") {
                auto L = num_field(sg, "L", "sigma", true);
                if (L && !(*L > 0.0)) {
                    errs.emplace_back("sigma.L must be positive");
                    L.reset();
                }
                auto b = num_field(sg, "b", "sigma", true);
                if (b && !(*b > 1.0)) {
                    errs.emplace_back("sigma.b must exceed 1");
                    b.reset();
                }
                if (L && b) sigma = SigmaSpec::super_linear(*L, *b);
            } else {
                errs.push_back("unknown sigma.kind '" + name + "'");
            }
        }
    }

    // output_dir ---------------------------------------------------------
    std::filesystem::path output_dir = ".";
    if (doc.contains("output_dir")) {
        if (doc["output_dir"].is_string())
            output_dir = doc["output_dir"].get<std::string>();
        else
            errs.emplace_back("output_dir must be a string");
    }

    // extra --------------------------------------------------------------
    ExperimentExtra extra;
    if (doc.contains("extra")) {
        if (!doc["extra"].is_object()) {
            errs.emplace_back("extra must be an object");
        } else {
            const auto& ex = doc["extra"];
            warn_unknown(ex,
                         {"fit_fraction", "lambda_grid", "t_eval", "threshold", "beta_norm",
                          "n_iterations", "b_start", "slope_tolerance", "slope_rel_tolerance",
                          "ratio_bound", "moment_band_stderrs", "delta", "k", "ivp_rel_tolerance"},
                         "extra");
            if (const auto f = num_field(ex, "fit_fraction", "extra", false)) {
                if (*f > 0.0 && *f < 1.0)
                    extra.fit_fraction = *f;
                else
                    errs.emplace_back("extra.fit_fraction must lie in (0,1)");
            }
            if (ex.contains("lambda_grid")) {
                bool ok = ex["lambda_grid"].is_array() && ex["lambda_grid"].size() >= 4;
                std::vector<double> grid;
                if (ok) {
                    for (const auto& item : ex["lambda_grid"]) {
                        if (!item.is_number()) {
                            ok = false;
                            break;
                        }
                        grid.push_back(item.get<double>());
                    }
                }
                for (std::size_t i = 0; ok && i < grid.size(); ++i)
                    ok = grid[i] > 0.0 && (i == 0 || grid[i] > grid[i - 1]);
                if (ok)
                    extra.lambda_grid = std::move(grid);
                else
                    errs.emplace_back(
                        "extra.lambda_grid needs at least 4 strictly increasing positive values");
            }
            if (const auto t = num_field(ex, "t_eval", "extra", false)) {
                if (a && T && !(*t > *a && *t <= *T))
                    errs.emplace_back("extra.t_eval must lie in (a, T]");
                else
                    extra.t_eval = *t;
            }
            if (const auto th = num_field(ex, "threshold", "extra", false)) {
                if (*th > 0.0)
                    extra.threshold = *th;
                else
                    errs.emplace_back("extra.threshold must be positive");
            }
            if (const auto bn = num_field(ex, "beta_norm", "extra", false)) {
                if (*bn > 0.0)
                    extra.beta_norm = *bn;
                else
                    errs.emplace_back("extra.beta_norm must be positive");
            }
            if (const auto it = uint_field(ex, "n_iterations", "extra", false)) {
                if (*it >= 2)
                    extra.n_iterations = *it;
                else
                    errs.emplace_back("extra.n_iterations must be at least 2");
            }
            if (const auto bs = num_field(ex, "b_start", "extra", false)) {
                if (a && !(*bs > *a))
                    errs.emplace_back("extra.b_start must exceed simulation.a");
                else
                    extra.b_start = *bs;
            }
            auto positive_knob = [&](const char* key, double& slot) {
                if (const auto val = num_field(ex, key, "extra", false)) {
                    if (*val > 0.0)
                        slot = *val;
                    else
                        errs.push_back(std::string("extra.") + key + " must be positive");
                }
            };
            positive_knob("slope_tolerance", extra.slope_tolerance);
            positive_knob("slope_rel_tolerance", extra.slope_rel_tolerance);
            positive_knob("ratio_bound", extra.ratio_bound);
            positive_knob("moment_band_stderrs", extra.moment_band_stderrs);
            positive_knob("delta", extra.delta);
            positive_knob("k", extra.k);
            positive_knob("ivp_rel_tolerance", extra.ivp_rel_tolerance);
        }
    }

    // cross-field rules ----------------------------------------------------
    if (kind && alpha) {
        const bool low_order = *alpha <= 0.5;
        switch (*kind) {
            case ExperimentKind::Moments:
                if (low_order && !truncated_start)
                    errs.emplace_back("alpha <= 0.5 requires truncated_start");
                break;
            case ExperimentKind::GrowthT:
                if (low_order) errs.emplace_back("growth_t requires alpha > 1/2");
                break;
            case ExperimentKind::GrowthLambda:
                if (low_order) errs.emplace_back("growth_lambda requires alpha > 1/2");
                break;
            case ExperimentKind::Contraction:
                if (low_order) errs.emplace_back("contraction requires alpha > 1/2");
                break;
            case ExperimentKind::Blowup:
            case ExperimentKind::GronwallCheck:
                break;
        }
    }
    if (kind == ExperimentKind::Blowup) {
        if (sigma && sigma->kind() != SigmaKind::SuperLinear)
            errs.emplace_back("blowup requires a super_linear sigma");
        if (u0 && !(*u0 > 0.0)) errs.emplace_back("blowup requires u0 > 0");
        if (alpha && *alpha > 0.5 && u0 && !(extra.threshold > *u0 * *u0))
            errs.emplace_back("extra.threshold must exceed u0^2");
    }
    if (kind == ExperimentKind::Contraction) {
        if (sigma && sigma->kind() == SigmaKind::SuperLinear)
            errs.emplace_back("contraction requires a Lipschitz coefficient (linear or zero sigma)");
        if (!extra.beta_norm) {
            errs.emplace_back("contraction requires extra.beta_norm");
        } else if (sigma && lambda) {
            const double gate = (*lambda * sigma->lip()) * (*lambda * sigma->lip());
            if (!(*extra.beta_norm > gate))
                warns.push_back("beta_norm below contraction threshold (lambda*Lip)^2 = " +
                                format_full(gate) + "; contraction hypothesis violated");
        }
    }

    if (!errs.empty()) return v;

    const Alpha order = *alpha == 1.0 ? Alpha::classical_limit() : Alpha(*alpha);
    const SimulationConfig sim{.alpha = order,
                               .window = TimeWindow(*a, *T),
                               .lambda = *lambda,
                               .u0 = *u0,
                               .n_steps = static_cast<std::size_t>(*n_steps),
                               .n_paths = static_cast<std::size_t>(*n_paths),
                               .master_seed = *seed,
                               .overflow_threshold = overflow_threshold,
                               .truncated_start = truncated_start,
                               .start_epsilon = start_epsilon};
    v.config = ExperimentConfig{*kind, sim, *sigma, std::move(output_dir), std::move(extra)};
    return v;
}
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic pop
#endif

struct CheckResult {
    std::string name;
    bool pass = false;
    nlohmann::json detail;
};

struct RunOutcome {
    int status = 0;
    nlohmann::json summary;
};

namespace detail {

struct ExperimentArtifacts {
    nlohmann::json results;
    std::vector<CheckResult> checks;
    std::vector<std::pair<std::string, std::string>> files;
};

inline std::size_t nearest_index(const std::vector<double>& grid, double t) {
    std::size_t idx = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = std::abs(grid[i] - t);
        if (d < best) {
            best = d;
            idx = i;
        }
    }
    return idx;
}

inline nlohmann::json fit_to_json(const GrowthFit& fit, const SimulationConfig& sim) {
    nlohmann::json j;
    j["slope"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["r_squared"] = fit.r_squared;
    j["slope_stderr"] = fit.slope_stderr;
    j["n_points"] = fit.n_points;
    j["band"] = {fit.theory_lower, fit.theory_upper};
    j["fit_window"] = {fit.fit_window.first, fit.fit_window.second};
    j["n_paths"] = sim.n_paths;
    j["master_seed"] = sim.master_seed;
    return j;
}

inline ExperimentArtifacts run_moments(const ExperimentConfig& cfg, unsigned n_threads) {
    ExperimentArtifacts art;
    const auto series =
        estimate_second_moment(simulate_ensemble(cfg.simulation, cfg.sigma, n_threads));
    art.files.emplace_back("moments.csv", moment_series_csv(series));

    const double u0_sq = cfg.simulation.u0 * cfg.simulation.u0;
    art.results["final_m2"] = series.m2.back();
    art.results["final_censored"] = series.censored.back();
    art.results["n_paths"] = series.n_paths;
    art.results["degenerate"] = series.degenerate;
    art.results["single_path_warning"] = series.single_path_warning;

    if (cfg.sigma.kind() == SigmaKind::Linear && cfg.simulation.alpha.value() > 0.5) {
        const auto exact = exact_linear_second_moment(cfg.simulation, cfg.sigma.scale());
        bool pass = true;
        double worst_z = 0.0;
        double worst_t = series.grid.front();
        for (std::size_t n = 0; n < series.grid.size(); ++n) {
            const double diff = std::abs(series.m2[n] - exact(series.grid[n]));
            const double se = series.std_error[n];
            const bool in_band = se > 0.0 ? diff <= cfg.extra.moment_band_stderrs * se
                                          : diff == 0.0;
            if (!in_band) pass = false;
            const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
            if (z > worst_z) {
                worst_z = z;
                worst_t = series.grid[n];
            }
        }
        nlohmann::json detail;
        detail["stderr_multiplier"] = cfg.extra.moment_band_stderrs;
        detail["max_z"] = worst_z;
        detail["worst_t"] = worst_t;
        art.checks.push_back({"moment_within_band", pass, std::move(detail)});
    } else if (cfg.sigma.lip() == 0.0 && cfg.sigma.lower() == 0.0) {
        bool pass = true;
        for (const double m : series.m2)
            if (m != u0_sq) pass = false;
        art.checks.push_back({"constant_moment", pass, nlohmann::json{{"expected", u0_sq}}});
    }
    return art;
}

inline ExperimentArtifacts run_growth_t(const ExperimentConfig& cfg, unsigned n_threads) {
    ExperimentArtifacts art;
    const auto series =
        estimate_second_moment(simulate_ensemble(cfg.simulation, cfg.sigma, n_threads));
    art.files.emplace_back("moments.csv", moment_series_csv(series));

    const auto fit = fit_growth_in_t(series, cfg.simulation.alpha, cfg.extra.fit_fraction);
    art.results["fit"] = fit_to_json(fit, cfg.simulation);

    const double tol = cfg.extra.slope_tolerance;
    const bool pass = fit.slope >= fit.theory_lower - tol && fit.slope <= fit.theory_upper + tol;
    nlohmann::json detail;
    detail["slope"] = fit.slope;
    detail["band"] = {fit.theory_lower, fit.theory_upper};
    detail["tolerance"] = tol;
    art.checks.push_back({"slope_in_band", pass, std::move(detail)});
    return art;
}

inline ExperimentArtifacts run_growth_lambda(const ExperimentConfig& cfg, unsigned n_threads) {
    ExperimentArtifacts art;
    std::vector<SimulationConfig> configs;
    configs.reserve(cfg.extra.lambda_grid.size());
    for (const double lam : cfg.extra.lambda_grid) {
        auto c = cfg.simulation;
        c.lambda = lam;
        configs.push_back(c);
    }
    const double t_eval = cfg.extra.t_eval.value_or(cfg.simulation.window.T);
    const auto fit = fit_growth_in_lambda(configs, cfg.sigma, t_eval, n_threads);
    art.results["fit"] = fit_to_json(fit, cfg.simulation);
    art.results["t_eval"] = t_eval;
    art.results["lambda_grid"] = cfg.extra.lambda_grid;

    std::string csv = "lambda,m2,stderr,censored\n";
    for (const auto& c : configs) {
        const auto series = estimate_second_moment(simulate_ensemble(c, cfg.sigma, n_threads));
        const std::size_t idx = nearest_index(series.grid, t_eval);
        csv += format_full(c.lambda);
        csv += ',';
        csv += format_full(series.m2[idx]);
        csv += ',';
        csv += format_full(series.std_error[idx]);
        csv += ',';
        csv += std::to_string(series.censored[idx]);
        csv += '\n';
    }
    art.files.emplace_back("lambda_moments.csv", std::move(csv));

    const double rtol = cfg.extra.slope_rel_tolerance;
    const bool pass = fit.slope >= fit.theory_lower * (1.0 - rtol) &&
                      fit.slope <= fit.theory_upper * (1.0 + rtol);
    nlohmann::json detail;
    detail["slope"] = fit.slope;
    detail["band"] = {fit.theory_lower, fit.theory_upper};
    detail["relative_tolerance"] = rtol;
    art.checks.push_back({"slope_in_band", pass, std::move(detail)});
    return art;
}

inline ExperimentArtifacts run_blowup(const ExperimentConfig& cfg, unsigned n_threads) {
    ExperimentArtifacts art;
    const auto& sim = cfg.simulation;
    const double av = sim.alpha.value();
    const double a = sim.window.a;
    const double T = sim.window.T;
    const double c = sim.u0 * sim.u0;
    const double L = cfg.sigma.scale();
    const auto b_opt = cfg.sigma.superlinear_b();
    if (!b_opt) throw std::invalid_argument("blowup experiment requires a super_linear sigma");
    const double b = *b_opt;

    nlohmann::json blow;
    blow["parameters"] = {{"lambda", sim.lambda}, {"L", L}, {"b", b}, {"c", c}};

    if (av > 0.5) {
        const auto r = detect_moment_explosion(sim, cfg.sigma, cfg.extra.threshold, n_threads);
        const auto series = estimate_second_moment(simulate_ensemble(sim, cfg.sigma, n_threads));
        art.files.emplace_back("moments.csv", moment_series_csv(series));

        blow["regime"] = "supercritical";
        blow["t_star_closed_form"] = r.t_star_closed_form;
        blow["t_star_numeric"] =
            r.t_star_numeric ? nlohmann::json(*r.t_star_numeric) : nlohmann::json(nullptr);
        blow["grid_dt"] = *r.grid_dt;
        blow["threshold"] = cfg.extra.threshold;

        if (r.t_star_closed_form <= T) {
            const double slack = 2.0 * *r.grid_dt;
            const bool pass =
                r.t_star_numeric.has_value() && *r.t_star_numeric <= r.t_star_closed_form + slack;
            nlohmann::json detail;
            detail["bound"] = r.t_star_closed_form + slack;
            detail["t_star_numeric"] =
                r.t_star_numeric ? nlohmann::json(*r.t_star_numeric) : nlohmann::json(nullptr);
            art.checks.push_back({"detector_within_closed_form", pass, std::move(detail)});
        } else {
            art.checks.push_back({"quiet_window", !r.t_star_numeric.has_value(),
                                  nlohmann::json{{"t_star_closed_form", r.t_star_closed_form}}});
        }
    } else if (av == 0.5) {
        const double b_start = cfg.extra.b_start.value_or(
            a + sim.window.span() / static_cast<double>(sim.n_steps));
        const double t_star = blowup_time_critical(c, sim.lambda, L, b, a, b_start);
        blow["regime"] = "critical";
        blow["t_star_closed_form"] = t_star;
        blow["b_start"] = b_start;
        art.checks.push_back(
            {"closed_form_finite", std::isfinite(t_star) && t_star > b_start,
             nlohmann::json{{"t_star_closed_form", t_star}}});
    } else {
        const auto r = blowup_subcritical_transform(c, sim.lambda, L, b, sim.alpha, a, T);
        blow["regime"] = "subcritical";
        blow["t_star_closed_form"] = r.t_star_closed_form;
        blow["t_star_numeric"] =
            r.t_star_numeric ? nlohmann::json(*r.t_star_numeric) : nlohmann::json(nullptr);
        blow["bracket_endpoints"] = {r.bracket_endpoints->first, r.bracket_endpoints->second};

        // The bracket starts positive; a crossing inside the window must show
        // as a sign change at the far end and vice versa.
        const bool crossed = r.t_star_numeric.has_value();
        const bool sign_change = r.bracket_endpoints->second <= 0.0;
        art.checks.push_back({"bracket_sign_consistent", crossed == sign_change,
                              nlohmann::json{{"crossed", crossed},
                                             {"bracket_end", r.bracket_endpoints->second}}});
    }
    art.results["blowup"] = std::move(blow);
    return art;
}

inline ExperimentArtifacts run_contraction(const ExperimentConfig& cfg) {
    ExperimentArtifacts art;
    const double beta = cfg.extra.beta_norm.value();
    const auto distances =
        picard_contraction_demo(cfg.simulation, cfg.sigma, beta, cfg.extra.n_iterations);
    art.files.emplace_back("contraction.csv", contraction_csv(distances));

    std::vector<double> ratios;
    bool pass = true;
    for (std::size_t k = 1; k < distances.size(); ++k) {
        const double num = distances[k];
        const double den = distances[k - 1];
        const double ratio = den == 0.0 ? (num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity())
                                        : num / den;
        ratios.push_back(ratio);
        if (!(ratio <= cfg.extra.ratio_bound)) pass = false;
    }
    const double lip_rate = cfg.simulation.lambda * cfg.sigma.lip();
    art.results["distances"] = distances;
    art.results["ratios"] = ratios;
    art.results["theory_factor"] = lip_rate * lip_rate / beta;
    art.results["beta_norm"] = beta;
    art.checks.push_back({"ratios_bounded", pass,
                          nlohmann::json{{"ratio_bound", cfg.extra.ratio_bound}, {"ratios", ratios}}});
    return art;
}

inline ExperimentArtifacts run_gronwall(const ExperimentConfig& cfg) {
    ExperimentArtifacts art;
    const auto& sim = cfg.simulation;
    const double growth_k = cfg.extra.k;
    const auto run = solve_conformable_ivp([growth_k](double, double y) { return growth_k * y; },
                                           sim.alpha, sim.window.a, cfg.extra.delta, sim.window.T,
                                           sim.n_steps);
    std::vector<double> bound(run.t.size());
    for (std::size_t n = 0; n < run.t.size(); ++n)
        bound[n] = gronwall_bound(cfg.extra.delta, growth_k, sim.alpha.value(), sim.window.a,
                                  run.t[n]);
    art.files.emplace_back("gronwall.csv", gronwall_csv(run.t, run.y, bound));

    double max_rel = 0.0;
    bool below = true;
    const double rtol = cfg.extra.ivp_rel_tolerance;
    for (std::size_t n = 0; n < run.y.size(); ++n) {
        const double rel = std::abs(run.y[n] - bound[n]) / bound[n];
        if (rel > max_rel) max_rel = rel;
        if (run.y[n] > bound[n] * (1.0 + rtol)) below = false;
    }
    art.results["max_rel_error"] = max_rel;
    art.results["delta"] = cfg.extra.delta;
    art.results["k"] = growth_k;
    art.checks.push_back({"no_overflow", !run.overflowed,
                          nlohmann::json{{"last_valid_t", run.last_valid_t}}});
    art.checks.push_back({"solution_below_bound", below, nlohmann::json{{"tolerance", rtol}}});
    art.checks.push_back({"equality_case_matches", max_rel <= rtol,
                          nlohmann::json{{"max_rel_error", max_rel}, {"tolerance", rtol}}});
    return art;
}

inline RunOutcome finish(const ExperimentConfig& cfg, ExperimentArtifacts&& art,
                         nlohmann::json&& summary) {
    bool all_pass = true;
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : art.checks) {
        all_pass = all_pass && c.pass;
        nlohmann::json entry;
        entry["name"] = c.name;
        entry["pass"] = c.pass;
        entry["detail"] = c.detail;
        checks.push_back(std::move(entry));
    }
    summary["results"] = std::move(art.results);
    summary["checks"] = std::move(checks);
    summary["status"] = all_pass ? 0 : 1;
    try {
        for (const auto& [name, content] : art.files)
            atomic_write_text(cfg.output_dir / name, content);
        atomic_write_text(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
    } catch (const std::exception& e) {
        summary["status"] = 3;
        summary["error"] = e.what();
        return {3, std::move(summary)};
    }
    return {summary["status"].get<int>(), std::move(summary)};
}

inline nlohmann::json summary_skeleton(const ExperimentConfig& cfg, std::string_view label) {
    nlohmann::json summary;
    summary["experiment"] = std::string(label);
    summary["config"] = experiment_config_to_json(cfg);
    nlohmann::json repro;
    repro["master_seed"] = cfg.simulation.master_seed;
    repro["n_steps"] = cfg.simulation.n_steps;
    repro["n_paths"] = cfg.simulation.n_paths;
    repro["window"] = {cfg.simulation.window.a, cfg.simulation.window.T};
    repro["version"] = std::string(kVersion);
    summary["reproducibility"] = std::move(repro);
    return summary;
}

}  // namespace detail

// Run one configured experiment: writes its data files plus summary.json
// into output_dir and reports 0 (all checks passed), 1 (a check failed), or
// 3 (a precondition or filesystem error, recorded in the summary).
inline RunOutcome run_experiment(const ExperimentConfig& cfg, unsigned n_threads = 0) {
    auto summary = detail::summary_skeleton(cfg, to_string(cfg.kind));
    detail::ExperimentArtifacts art;
    try {
        switch (cfg.kind) {
            case ExperimentKind::Moments: art = detail::run_moments(cfg, n_threads); break;
            case ExperimentKind::GrowthT: art = detail::run_growth_t(cfg, n_threads); break;
            case ExperimentKind::GrowthLambda: art = detail::run_growth_lambda(cfg, n_threads); break;
            case ExperimentKind::Blowup: art = detail::run_blowup(cfg, n_threads); break;
            case ExperimentKind::Contraction: art = detail::run_contraction(cfg); break;
            case ExperimentKind::GronwallCheck: art = detail::run_gronwall(cfg); break;
        }
    } catch (const std::exception& e) {
        summary["status"] = 3;
        summary["error"] = e.what();
        try {
            atomic_write_text(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
        } catch (...) {
        }
        return {3, std::move(summary)};
    }
    return detail::finish(cfg, std::move(art), std::move(summary));
}

// Dump the raw ensemble for a config (any experiment kind): paths.csv plus a
// summary with no checks.  The moment experiments derive everything from the
// same simulate_ensemble call, so the dump is byte-faithful to what they saw.
inline RunOutcome run_simulate(const ExperimentConfig& cfg, unsigned n_threads = 0) {
    auto summary = detail::summary_skeleton(cfg, "simulate");
    detail::ExperimentArtifacts art;
    try {
        const auto ensemble = simulate_ensemble(cfg.simulation, cfg.sigma, n_threads);
        art.files.emplace_back("paths.csv", ensemble_csv(ensemble));
        std::size_t censored = 0;
        for (const auto step : ensemble.overflow_step)
            if (step != PathEnsemble::kNotCensored) ++censored;
        art.results["n_censored"] = censored;
        art.results["n_times"] = ensemble.n_times();
    } catch (const std::exception& e) {
        summary["status"] = 3;
        summary["error"] = e.what();
        try {
            atomic_write_text(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
        } catch (...) {
        }
        return {3, std::move(summary)};
    }
    return detail::finish(cfg, std::move(art), std::move(summary));
}

}  // namespace cfsde
