#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ensemble.hpp"
#include "numerics.hpp"
#include "types.hpp"

namespace cfsde {

struct MomentSeries {
    std::vector<double> grid;
    std::vector<double> m2;
    std::vector<double> std_error;
    // Overflow-flagged paths excluded from the estimate at each time.
    std::vector<std::size_t> censored;
    std::size_t n_paths = 0;
    // Some time had every path censored; the affected slots hold NaN.
    bool degenerate = false;
    // Some time had a single surviving path; std_error holds +inf there.
    bool single_path_warning = false;
    // Provenance carried from the ensemble so fits can state theory bands.
    std::optional<SimulationConfig> config;
    double sigma_lip = 0.0;
    double sigma_lower = 0.0;
};

// Sample mean of u^2 over non-censored paths at each grid time, with the
// standard error sd(u^2)/sqrt(M').  Paths enter the reduction in path-index
// order through cascade sums, so the estimate is independent of how the
// ensemble was parallelized.  Times where every surviving state is identical
// are returned exactly with zero standard error.
inline MomentSeries estimate_second_moment(const PathEnsemble& ensemble) {
    const std::size_t n_paths = ensemble.config.n_paths;
    const std::size_t n_times = ensemble.n_times();
    if (n_paths == 0 || n_times == 0 || ensemble.values.size() != n_paths * n_times)
        throw std::invalid_argument("estimate_second_moment: empty or inconsistent ensemble");

    MomentSeries series;
    series.grid = ensemble.grid;
    series.m2.assign(n_times, 0.0);
    series.std_error.assign(n_times, 0.0);
    series.censored.assign(n_times, 0);
    series.n_paths = n_paths;
    series.config = ensemble.config;
    series.sigma_lip = ensemble.sigma_lip;
    series.sigma_lower = ensemble.sigma_lower;

    std::vector<double> sq;
    sq.reserve(n_paths);
    for (std::size_t n = 0; n < n_times; ++n) {
        sq.clear();
        bool all_equal = true;
        for (std::size_t p = 0; p < n_paths; ++p) {
            if (ensemble.censored_at(p, n)) continue;
            const double u = ensemble.at(p, n);
            if (!sq.empty() && u * u != sq.front()) all_equal = false;
            sq.push_back(u * u);
        }
        series.censored[n] = n_paths - sq.size();
        if (sq.empty()) {
            series.degenerate = true;
            series.m2[n] = std::numeric_limits<double>::quiet_NaN();
            series.std_error[n] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        if (sq.size() == 1) {
            series.single_path_warning = true;
            series.m2[n] = sq.front();
            series.std_error[n] = std::numeric_limits<double>::infinity();
            continue;
        }
        if (all_equal) {
            series.m2[n] = sq.front();
            series.std_error[n] = 0.0;
            continue;
        }
        const auto m = static_cast<double>(sq.size());
        const double mean = pairwise_sum(sq) / m;
        for (double& s : sq) s = (s - mean) * (s - mean);
        const double var = pairwise_sum(sq) / (m - 1.0);
        series.m2[n] = mean;
        series.std_error[n] = std::sqrt(var / m);
    }
    return series;
}

struct GrowthFit {
    // Fitted coefficient of (t-a)^{2 alpha - 1} (or of lambda^2) in log m2.
    double slope;
    double intercept;
    double r_squared;
    double theory_lower;
    double theory_upper;
    std::pair<double, double> fit_window;
    double slope_stderr;
    std::size_t n_points;
};

namespace detail {

inline double ols_slope_stderr(std::span<const double> x, std::span<const double> y,
                               const LeastSquaresFit& fit) {
    if (x.size() <= 2) return 0.0;
    double ss_res = 0.0;
    double sxx = 0.0;
    double xm = 0.0;
    for (const double v : x) xm += v;
    xm /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (fit.intercept + fit.slope * x[i]);
        ss_res += e * e;
        sxx += (x[i] - xm) * (x[i] - xm);
    }
    return std::sqrt(ss_res / (static_cast<double>(x.size()) - 2.0) / sxx);
}

}  // namespace detail

// OLS of log m2 against (t-a)^{2 alpha - 1} over the trailing fit_fraction of
// the grid.  The early grid is transient-dominated, so the default window is
// the trailing half.  theory band: [lambda^2 lower^2, lambda^2 lip^2] / p.
inline GrowthFit fit_growth_in_t(const MomentSeries& series, Alpha alpha,
                                 double fit_fraction = 0.5) {
    if (!(alpha.value() > 0.5))
        throw std::invalid_argument("fit_growth_in_t: requires alpha > 1/2");
    if (!(fit_fraction > 0.0 && fit_fraction < 1.0))
        throw std::invalid_argument("fit_growth_in_t: fit_fraction must lie in (0,1)");
    if (!series.config)
        throw std::invalid_argument("fit_growth_in_t: series lacks simulation provenance");
    if (series.grid.size() != series.m2.size() || series.grid.size() != series.censored.size())
        throw std::invalid_argument("fit_growth_in_t: inconsistent series");

    const double a = series.config->window.a;
    const double p = 2.0 * alpha.value() - 1.0;
    const double t_hi = series.grid.back();
    const double t_lo = t_hi - fit_fraction * (t_hi - series.grid.front());
    const double tol = 1e-12 * (t_hi - series.grid.front());

    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i = 0; i < series.grid.size(); ++i) {
        if (series.grid[i] < t_lo - tol) continue;
        if (!(series.m2[i] > 0.0) || !std::isfinite(series.m2[i]))
            throw std::invalid_argument("fit_growth_in_t: non-positive moment in fit window");
        if (2 * series.censored[i] > series.n_paths)
            throw std::invalid_argument("fit_growth_in_t: censored-majority point in fit window");
        x.push_back(std::pow(series.grid[i] - a, p));
        y.push_back(std::log(series.m2[i]));
    }
    if (x.size() < 8)
        throw std::invalid_argument("fit_growth_in_t: fit window needs at least 8 points");

    const auto ls = least_squares(x, y);
    const double lam_sq = series.config->lambda * series.config->lambda;
    return {ls.slope,
            ls.intercept,
            ls.r_squared,
            lam_sq * series.sigma_lower * series.sigma_lower / p,
            lam_sq * series.sigma_lip * series.sigma_lip / p,
            {t_lo, t_hi},
            detail::ols_slope_stderr(x, y, ls),
            x.size()};
}

// OLS of log m2(t_eval) against lambda^2 across configs that differ only in
// lambda.  theory band: [lower^2, lip^2] (t_eval-a)^p / p.
inline GrowthFit fit_growth_in_lambda(std::span<const SimulationConfig> configs,
                                      const SigmaSpec& sigma, double t_eval,
                                      unsigned n_threads = 0) {
    if (configs.size() < 4)
        throw std::invalid_argument("fit_growth_in_lambda: need at least 4 lambda values");
    const SimulationConfig& base = configs.front();
    if (!(base.alpha.value() > 0.5))
        throw std::invalid_argument("fit_growth_in_lambda: requires alpha > 1/2");
    if (!(t_eval > base.window.a && t_eval <= base.window.T))
        throw std::invalid_argument("fit_growth_in_lambda: t_eval must lie in (a, T]");
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const SimulationConfig& c = configs[i];
        const bool same = c.alpha.value() == base.alpha.value() && c.window.a == base.window.a &&
                          c.window.T == base.window.T && c.u0 == base.u0 &&
                          c.n_steps == base.n_steps && c.n_paths == base.n_paths &&
                          c.master_seed == base.master_seed &&
                          c.overflow_threshold == base.overflow_threshold &&
                          c.truncated_start == base.truncated_start &&
                          c.start_epsilon == base.start_epsilon;
        if (!same)
            throw std::invalid_argument("fit_growth_in_lambda: configs must be identical except lambda");
        if (!(c.lambda > configs[i - 1].lambda))
            throw std::invalid_argument("fit_growth_in_lambda: lambda values must be strictly increasing");
    }

    std::vector<double> x;
    std::vector<double> y;
    for (const SimulationConfig& c : configs) {
        const auto series = estimate_second_moment(simulate_ensemble(c, sigma, n_threads));
        std::size_t idx = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < series.grid.size(); ++i) {
            const double d = std::abs(series.grid[i] - t_eval);
            if (d < best) {
                best = d;
                idx = i;
            }
        }
        if (!(series.m2[idx] > 0.0) || !std::isfinite(series.m2[idx]))
            throw std::invalid_argument("fit_growth_in_lambda: non-positive moment at t_eval");
        if (2 * series.censored[idx] > series.n_paths)
            throw std::invalid_argument("fit_growth_in_lambda: censored-majority at t_eval");
        x.push_back(c.lambda * c.lambda);
        y.push_back(std::log(series.m2[idx]));
    }

    const auto ls = least_squares(x, y);
    const double p = 2.0 * base.alpha.value() - 1.0;
    const double tau = std::pow(t_eval - base.window.a, p) / p;
    return {ls.slope,
            ls.intercept,
            ls.r_squared,
            sigma.lower() * sigma.lower() * tau,
            sigma.lip() * sigma.lip() * tau,
            {t_eval, t_eval},
            detail::ols_slope_stderr(x, y, ls),
            x.size()};
}

}  // namespace cfsde
