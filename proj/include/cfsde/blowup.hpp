#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

#include "ensemble.hpp"
#include "moments.hpp"
#include "sigma.hpp"
#include "types.hpp"

namespace cfsde {

struct BlowupParams {
    double lambda = 0.0;
    double L = 0.0;
    double b = 0.0;
    // Initial moment level f(start) = c.
    double c = 0.0;
    // Reference horizon for the subcritical transform.
    std::optional<double> horizon;
    // Auxiliary start point of the critical-case logarithmic form.
    std::optional<double> b_start;
};

struct BlowupResult {
    Alpha alpha;
    Regime regime;
    // +inf when the closed form never crosses.
    double t_star_closed_form = std::numeric_limits<double>::infinity();
    // Empty when no detection happened (deterministic or Monte Carlo).
    std::optional<double> t_star_numeric;
    BlowupParams params;
    // Grid resolution of the Monte Carlo detector, when one ran.
    std::optional<double> grid_dt;
    // Subcritical bracket values at the window ends: the sign trajectory
    // behind a not-detected verdict.
    std::optional<std::pair<double, double>> bracket_endpoints;
};

namespace detail {

inline void check_blowup_params(double c, double lambda, double L, double b, const char* who) {
    if (!(c > 0.0)) throw std::invalid_argument(std::string(who) + ": require c > 0");
    if (!(lambda > 0.0)) throw std::invalid_argument(std::string(who) + ": require lambda > 0");
    if (!(L > 0.0)) throw std::invalid_argument(std::string(who) + ": require L > 0");
    if (!(b > 1.0)) throw std::invalid_argument(std::string(who) + ": require b > 1");
}

}  // namespace detail

// Zero of f^{1-b}(t) = c^{1-b} + (1-b)(lambda^2 L^2 / p)(t - t_start)^p with
// p = 2 alpha - 1 > 0 and f(t_start) = c: the moment ODE started from t_start
// reaches infinity at the returned time.  t_start = a recovers the plain
// supercritical form; t_start > a is the bridge to the critical log form.
inline double blowup_time_supercritical_from(double c, double lambda, double L, double b,
                                             Alpha alpha, double a, double t_start) {
    detail::check_blowup_params(c, lambda, L, b, "blowup_time_supercritical_from");
    if (!(alpha.value() > 0.5))
        throw std::invalid_argument("blowup_time_supercritical_from: requires alpha > 1/2");
    if (!(t_start >= a))
        throw std::invalid_argument("blowup_time_supercritical_from: require t_start >= a");
    const double p = 2.0 * alpha.value() - 1.0;
    const double k = std::pow(c, 1.0 - b) * p / ((b - 1.0) * lambda * lambda * L * L);
    return a + std::pow(std::pow(t_start - a, p) + k, 1.0 / p);
}

inline double blowup_time_supercritical(double c, double lambda, double L, double b, Alpha alpha,
                                        double a) {
    detail::check_blowup_params(c, lambda, L, b, "blowup_time_supercritical");
    if (!(alpha.value() > 0.5))
        throw std::invalid_argument("blowup_time_supercritical: requires alpha > 1/2");
    return blowup_time_supercritical_from(c, lambda, L, b, alpha, a, a);
}

// Zero of the critical-order logarithmic form
// f^{1-b}(t) = c^{1-b} + (1-b) lambda^2 L^2 ln[(t-a)/(b_start-a)].
inline double blowup_time_critical(double c, double lambda, double L, double b, double a,
                                   double b_start) {
    detail::check_blowup_params(c, lambda, L, b, "blowup_time_critical");
    if (!(b_start > a))
        throw std::invalid_argument("blowup_time_critical: require b_start > a");
    const double k = std::pow(c, 1.0 - b) / ((b - 1.0) * lambda * lambda * L * L);
    return a + (b_start - a) * std::exp(k);
}

// Subcritical transform y(t) = (t-a)^p f(t), p = 2 alpha - 1 < 0: evaluates
// the bracket of the closed form
//   y^{1-b}(t) = y(a)^{1-b} + (lambda^2 L^2 (T-a)^p / p) (t-a)^{p(1-b)}
// with y(a) = c (T-a)^p, and reports where it crosses zero (non-existence
// onset).  The crossing exponent p(1-b) is positive for every admissible
// pair alpha < 1/2, b > 1.  Crossing past T is reported as not-detected with
// the bracket values at both window ends.
inline BlowupResult blowup_subcritical_transform(double c, double lambda, double L, double b,
                                                 Alpha alpha, double a, double T) {
    detail::check_blowup_params(c, lambda, L, b, "blowup_subcritical_transform");
    if (!(alpha.value() < 0.5))
        throw std::invalid_argument("blowup_subcritical_transform: requires alpha < 1/2");
    if (!(T > a))
        throw std::invalid_argument("blowup_subcritical_transform: require T > a");

    const double p = 2.0 * alpha.value() - 1.0;
    const double q = 1.0 - b;
    const double pq = p * q;
    if (!(pq > 0.0))
        throw std::logic_error("blowup_subcritical_transform: crossing exponent must be positive");

    const double lam_sq = lambda * lambda * L * L;
    const double log_span = std::log(T - a);
    // y(a)^q and the bracket slope, kept in the log domain: the admissible
    // exponents reach magnitudes where direct pow under/overflows.
    const double log_ya_q = q * (std::log(c) + p * log_span);
    const double log_slope = std::log(lam_sq) + p * log_span - std::log(-p);
    const double log_cross = (log_ya_q - log_slope) / pq;
    const double t_star = a + std::exp(log_cross);

    auto bracket = [&](double t) {
        if (t <= a) return std::exp(log_ya_q);
        return std::exp(log_ya_q) - std::exp(log_slope + pq * std::log(t - a));
    };

    BlowupResult out{alpha,
                     Regime::Subcritical,
                     t_star,
                     std::nullopt,
                     {lambda, L, b, c, T, std::nullopt},
                     std::nullopt,
                     std::make_pair(bracket(a), bracket(T))};
    if (t_star <= T) out.t_star_numeric = t_star;
    return out;
}

// Monte Carlo explosion detector for superlinear coefficients in the
// simulable regime: simulates the ensemble and reports the first grid time
// at which the surviving-path second moment exceeds threshold or more than
// half the paths are overflow-flagged, paired with the closed-form
// supercritical time for comparison.  The closed form bounds the true moment
// explosion from above, so the detection may legitimately fire much earlier;
// it must not fire later than the closed form plus grid-and-sampling slack.
inline BlowupResult detect_moment_explosion(const SimulationConfig& config, const SigmaSpec& sigma,
                                            double threshold, unsigned n_threads = 0) {
    validate(config);
    if (sigma.kind() != SigmaKind::SuperLinear)
        throw std::invalid_argument("detect_moment_explosion: requires a SuperLinear coefficient");
    if (!(config.alpha.value() > 0.5))
        throw std::invalid_argument("detect_moment_explosion: requires alpha > 1/2");
    if (!(threshold > config.u0 * config.u0))
        throw std::invalid_argument("detect_moment_explosion: threshold must exceed u0^2");

    const double c = config.u0 * config.u0;
    const double b = *sigma.superlinear_b();
    const double t_closed = blowup_time_supercritical(c, config.lambda, sigma.scale(), b,
                                                      config.alpha, config.window.a);

    const auto series = estimate_second_moment(simulate_ensemble(config, sigma, n_threads));
    std::optional<double> t_numeric;
    for (std::size_t n = 0; n < series.grid.size(); ++n) {
        const bool moment_rule = std::isfinite(series.m2[n]) && series.m2[n] > threshold;
        const bool censor_rule = 2 * series.censored[n] > series.n_paths;
        if (moment_rule || censor_rule) {
            t_numeric = series.grid[n];
            break;
        }
    }

    BlowupResult out{config.alpha,
                     Regime::Supercritical,
                     t_closed,
                     t_numeric,
                     {config.lambda, sigma.scale(), b, c, std::nullopt, std::nullopt},
                     (config.window.T - config.window.a) / static_cast<double>(config.n_steps),
                     std::nullopt};
    return out;
}

}  // namespace cfsde
