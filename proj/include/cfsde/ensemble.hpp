#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "calculus.hpp"
#include "numerics.hpp"
#include "philox.hpp"
#include "sigma.hpp"
#include "types.hpp"

namespace cfsde {

struct SimulationConfig {
    Alpha alpha;
    TimeWindow window;
    double lambda;
    double u0;
    std::size_t n_steps;
    std::size_t n_paths;
    std::uint64_t master_seed;
    double overflow_threshold = 1e12;
    // The kernel is not square integrable for alpha <= 1/2; simulating there
    // exists only to illustrate non-existence and must be opted into, never
    // applied silently.  start_epsilon = 0 picks the default span/n_steps^2.
    bool truncated_start = false;
    double start_epsilon = 0.0;
};

inline void validate(const SimulationConfig& c) {
    if (!(c.lambda > 0.0))
        throw std::invalid_argument("SimulationConfig: lambda must be positive");
    if (!(c.u0 >= 0.0) || !std::isfinite(c.u0))
        throw std::invalid_argument("SimulationConfig: u0 must be finite and nonnegative");
    if (c.n_steps < 1)
        throw std::invalid_argument("SimulationConfig: n_steps must be at least 1");
    if (c.n_paths < 1)
        throw std::invalid_argument("SimulationConfig: n_paths must be at least 1");
    if (!(c.overflow_threshold > 0.0))
        throw std::invalid_argument("SimulationConfig: overflow_threshold must be positive");
    if (!(c.start_epsilon >= 0.0) || c.start_epsilon >= c.window.span())
        throw std::invalid_argument("SimulationConfig: start_epsilon must lie in [0, T-a)");
}

// Uniform grid over [a, T], or over [a+eps, T] in the opted-in truncated
// mode required when alpha <= 1/2.
inline std::vector<double> simulation_grid(const SimulationConfig& c) {
    validate(c);
    double t0 = c.window.a;
    if (c.alpha.value() <= 0.5) {
        if (!c.truncated_start)
            throw std::invalid_argument(
                "simulation_grid: kernel weights are infinite at the start for alpha <= 1/2; "
                "opt into truncated_start to begin at a + epsilon");
        const double span = c.window.span();
        const double eps = c.start_epsilon > 0.0
                               ? c.start_epsilon
                               : span / (static_cast<double>(c.n_steps) * static_cast<double>(c.n_steps));
        t0 = c.window.a + eps;
    }
    std::vector<double> grid(c.n_steps + 1);
    const double dt = (c.window.T - t0) / static_cast<double>(c.n_steps);
    for (std::size_t n = 0; n <= c.n_steps; ++n)
        grid[n] = t0 + static_cast<double>(n) * dt;
    grid.back() = c.window.T;
    return grid;
}

// Per-step Gaussian scalings w_n with w_n^2 equal to the exact integral of
// the squared kernel (s-a)^{2(alpha-1)} over [t_n, t_{n+1}]: the power-law
// difference for alpha != 1/2 and the log ratio at alpha = 1/2.  For
// alpha > 1/2 the squares telescope to (T-a)^{2 alpha-1}/(2 alpha-1).
class KernelWeights {
public:
    KernelWeights(std::span<const double> grid, Alpha alpha, double a) {
        if (grid.size() < 2)
            throw std::invalid_argument("KernelWeights: grid needs at least two points");
        const double p = 2.0 * alpha.value() - 1.0;
        w_.reserve(grid.size() - 1);
        for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
            const double d0 = grid[n] - a;
            const double d1 = grid[n + 1] - a;
            if (!(d1 > d0) || d0 < 0.0)
                throw std::invalid_argument("KernelWeights: grid must be strictly increasing from a");
            double w2 = 0.0;
            if (p == 0.0) {
                if (d0 == 0.0)
                    throw std::invalid_argument(
                        "KernelWeights: first weight is infinite when the grid starts at a for alpha <= 1/2");
                w2 = std::log(d1 / d0);
            } else {
                if (d0 == 0.0 && p < 0.0)
                    throw std::invalid_argument(
                        "KernelWeights: first weight is infinite when the grid starts at a for alpha <= 1/2");
                w2 = (std::pow(d1, p) - std::pow(d0, p)) / p;
            }
            w_.push_back(std::sqrt(std::max(w2, 0.0)));
        }
    }

    const std::vector<double>& values() const noexcept { return w_; }

    double sum_squares() const noexcept {
        double acc = 0.0;
        for (const double w : w_) acc += w * w;
        return acc;
    }

private:
    std::vector<double> w_;
};

struct PathEnsemble {
    static constexpr std::size_t kNotCensored = std::numeric_limits<std::size_t>::max();

    std::vector<double> grid;
    // Row-major path states: path p at step n sits at values[p*grid.size()+n].
    std::vector<double> values;
    // First grid index at which a path left [-threshold, threshold]; the path
    // is frozen at its last valid state from there on.
    std::vector<std::size_t> overflow_step;
    SimulationConfig config;
    // Coefficient constants recorded at simulation time so moment fits can
    // state their theory bands without re-threading the SigmaSpec.
    double sigma_lip = 0.0;
    double sigma_lower = 0.0;

    std::size_t n_times() const noexcept { return grid.size(); }

    double at(std::size_t path, std::size_t step) const noexcept {
        return values[path * grid.size() + step];
    }

    std::span<const double> path(std::size_t p) const noexcept {
        return {values.data() + p * grid.size(), grid.size()};
    }

    bool censored_at(std::size_t path, std::size_t step) const noexcept {
        return overflow_step[path] <= step;
    }
};

namespace detail {

template <class Step>
void run_over_paths(std::size_t n_paths, unsigned n_threads, Step&& per_path) {
    unsigned workers = n_threads != 0 ? n_threads : std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (workers > n_paths) workers = static_cast<unsigned>(n_paths);
    if (workers <= 1) {
        for (std::size_t p = 0; p < n_paths; ++p) per_path(p);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n_paths + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = static_cast<std::size_t>(w) * chunk;
        const std::size_t end = std::min(n_paths, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &per_path] {
            for (std::size_t p = begin; p < end; ++p) per_path(p);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

// Explicit variance-exact scheme u_{n+1} = u_n + lambda sigma(u_n) w_n Z_{p,n}
// for the mild solution u = u0 + lambda I_alpha[sigma(u) dW].  Z_{p,n} is a
// pure function of (master_seed, p, n), so the ensemble is bitwise identical
// for any thread count and path evaluation order.
inline PathEnsemble simulate_ensemble(const SimulationConfig& config, const SigmaSpec& sigma,
                                      unsigned n_threads = 0) {
    PathEnsemble out{simulation_grid(config), {}, {}, config, sigma.lip(), sigma.lower()};
    const KernelWeights weights(out.grid, config.alpha, config.window.a);
    const std::size_t n_times = out.grid.size();
    out.values.assign(config.n_paths * n_times, 0.0);
    out.overflow_step.assign(config.n_paths, PathEnsemble::kNotCensored);

    const auto& w = weights.values();
    detail::run_over_paths(config.n_paths, n_threads, [&](std::size_t p) {
        double* row = out.values.data() + p * n_times;
        double u = config.u0;
        row[0] = u;
        std::size_t flagged = PathEnsemble::kNotCensored;
        for (std::size_t n = 0; n + 1 < n_times; ++n) {
            if (flagged != PathEnsemble::kNotCensored) {
                row[n + 1] = u;
                continue;
            }
            const double z = normal_variate(config.master_seed, p, n);
            const double next = u + config.lambda * sigma(u) * w[n] * z;
            if (!std::isfinite(next) || std::abs(next) > config.overflow_threshold) {
                flagged = n + 1;
                row[n + 1] = u;
                continue;
            }
            u = next;
            row[n + 1] = u;
        }
        out.overflow_step[p] = flagged;
    });
    return out;
}

// Exact second moment for Linear(L): t -> u0^2 exp(lambda^2 L^2 (t-a)^p / p)
// with p = 2 alpha - 1; upper and lower moment bounds coincide there.
inline std::function<double(double)> exact_linear_second_moment(const SimulationConfig& config,
                                                                double L) {
    validate(config);
    if (!(config.alpha.value() > 0.5))
        throw std::invalid_argument("exact_linear_second_moment: requires alpha > 1/2");
    if (!(L > 0.0))
        throw std::invalid_argument("exact_linear_second_moment: requires L > 0");
    const double p = 2.0 * config.alpha.value() - 1.0;
    const double rate = config.lambda * config.lambda * L * L / p;
    const double a = config.window.a;
    const double u0_sq = config.u0 * config.u0;
    return [p, rate, a, u0_sq](double t) {
        if (!(t >= a))
            throw std::invalid_argument("exact_linear_second_moment: require t >= a");
        return u0_sq * std::exp(rate * std::pow(t - a, p));
    };
}

// One Picard step A u = u0 + lambda I_alpha[sigma(u) dW] on a fixed noise
// realization, iterated from u(0) = u0; returns the squared weighted-norm
// distances d_k between consecutive iterates, k = 1..n_iterations.  For
// beta_norm > (lambda lip)^2 the ratios contract towards
// (lambda lip)^2 / beta_norm.
inline std::vector<double> picard_contraction_demo(const SimulationConfig& config,
                                                   const SigmaSpec& sigma, double beta_norm,
                                                   std::size_t n_iterations) {
    validate(config);
    if (!(config.alpha.value() > 0.5))
        throw std::invalid_argument("picard_contraction_demo: requires alpha > 1/2");
    if (!(beta_norm > 0.0))
        throw std::invalid_argument("picard_contraction_demo: beta_norm must be positive");
    if (n_iterations < 2)
        throw std::invalid_argument("picard_contraction_demo: need at least two iterations");

    const auto grid = simulation_grid(config);
    const KernelWeights weights(grid, config.alpha, config.window.a);
    const auto& w = weights.values();
    const std::size_t n_times = grid.size();
    const double p = 2.0 * config.alpha.value() - 1.0;
    const WeightedNormParams norm_params(beta_norm, p);

    std::vector<double> prev(config.n_paths * n_times, config.u0);
    std::vector<double> cur(config.n_paths * n_times, 0.0);
    std::vector<double> column(config.n_paths, 0.0);
    std::vector<double> distances;
    distances.reserve(n_iterations);

    for (std::size_t k = 0; k < n_iterations; ++k) {
        for (std::size_t path = 0; path < config.n_paths; ++path) {
            const double* prow = prev.data() + path * n_times;
            double* crow = cur.data() + path * n_times;
            double integral = 0.0;
            crow[0] = config.u0;
            for (std::size_t n = 0; n + 1 < n_times; ++n) {
                const double z = normal_variate(config.master_seed, path, n);
                integral += config.lambda * sigma(prow[n]) * w[n] * z;
                if (!std::isfinite(integral))
                    throw std::runtime_error("picard_contraction_demo: iterate overflowed");
                crow[n + 1] = config.u0 + integral;
            }
        }
        double dk = 0.0;
        for (std::size_t n = 0; n < n_times; ++n) {
            for (std::size_t path = 0; path < config.n_paths; ++path) {
                const double diff = cur[path * n_times + n] - prev[path * n_times + n];
                column[path] = diff * diff;
            }
            const double mean = pairwise_sum(column) / static_cast<double>(config.n_paths);
            const double weighted = weight_e(grid[n], config.window.a, norm_params) * mean;
            if (weighted > dk) dk = weighted;
        }
        distances.push_back(dk);
        std::swap(prev, cur);
    }
    return distances;
}

}  // namespace cfsde
