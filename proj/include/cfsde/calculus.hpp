#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "types.hpp"

namespace cfsde {

namespace detail {

// Map the transformed clock v = (t-a)^alpha / alpha back to t.
inline double clock_to_time(double v, double a, double alpha) {
    if (v <= 0.0) return a;
    return a + std::pow(alpha * v, 1.0 / alpha);
}

}  // namespace detail

// T_alpha f at t > a: (t-a)^{1-alpha} f'(t) with a centered difference of
// step h.  The point t = a itself is excluded; the derivative there is a
// one-sided limit that no downstream operation needs.
template <class F>
double conformable_derivative(F&& f, Alpha alpha, double a, double t, double h) {
    if (!(t > a))
        throw std::invalid_argument("conformable_derivative: require t > a");
    if (!(h > 0.0))
        throw std::invalid_argument("conformable_derivative: require h > 0");
    const double fp = f(t + h);
    const double fm = f(t - h);
    if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::invalid_argument("conformable_derivative: f not finite near t");
    return std::pow(t - a, 1.0 - alpha.value()) * (fp - fm) / (2.0 * h);
}

template <class F>
double conformable_derivative(F&& f, Alpha alpha, double a, double t) {
    const double h = 1e-5 * std::max(1.0, std::abs(t));
    return conformable_derivative(static_cast<F&&>(f), alpha, a, t, h);
}

// I_alpha f at t: integral of (s-a)^{alpha-1} f(s) over [a,t].  Computed on
// the transformed clock v = (s-a)^alpha / alpha, where the kernel is absorbed
// and the integrand is f alone; composite midpoint over n_panels uniform
// v-panels.  Exact for constant f, second order for smooth f.
template <class F>
double fractional_integral(F&& f, Alpha alpha, double a, double t, std::size_t n_panels) {
    if (!(t > a))
        throw std::invalid_argument("fractional_integral: require t > a");
    if (n_panels < 1)
        throw std::invalid_argument("fractional_integral: require n_panels >= 1");
    const double al = alpha.value();
    const double v_end = std::pow(t - a, al) / al;
    const double dv = v_end / static_cast<double>(n_panels);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_panels; ++i) {
        const double v = (static_cast<double>(i) + 0.5) * dv;
        const double fv = f(detail::clock_to_time(v, a, al));
        if (!std::isfinite(fv))
            throw std::invalid_argument("fractional_integral: f not finite on (a,t)");
        acc += fv;
    }
    return acc * dv;
}

// Majorant delta * exp(k (t-a)^p / p) for any nonnegative r satisfying
// r(t) <= delta + k * integral of (s-a)^{p-1} r(s) over [a,t].
inline double gronwall_bound(double delta, double k, double alpha_power, double a, double t) {
    if (!(delta >= 0.0))
        throw std::invalid_argument("gronwall_bound: require delta >= 0");
    if (!(k >= 0.0))
        throw std::invalid_argument("gronwall_bound: require k >= 0");
    if (!(alpha_power > 0.0))
        throw std::invalid_argument("gronwall_bound: require alpha_power > 0");
    if (!(t >= a))
        throw std::invalid_argument("gronwall_bound: require t >= a");
    return delta * std::exp(k * std::pow(t - a, alpha_power) / alpha_power);
}

// exp(-beta_norm (t-a)^kappa / kappa); equals 1 at t = a and decays in t.
inline double weight_e(double t, double a, const WeightedNormParams& params) {
    if (!(t >= a))
        throw std::invalid_argument("weight_e: require t >= a");
    if (t == a) return 1.0;
    return std::exp(-params.beta_norm * std::pow(t - a, params.kappa) / params.kappa);
}

struct IvpResult {
    std::vector<double> t;
    std::vector<double> y;
    bool overflowed = false;
    // Last grid time with a finite state; equals t.back() in both outcomes.
    double last_valid_t = 0.0;
};

// Solve T_alpha y = f(t, y), y(a) = y_a on [a, T].  On the transformed clock
// v = (t-a)^alpha / alpha the equation is dy/dv = f(t(v), y) with no
// singularity; fixed-step classical RK4 over n_steps uniform v-steps, sampled
// back on the t-grid.  A non-finite state stops integration and flags
// overflow instead of aborting, so blow-up runs stay inspectable.
template <class F>
IvpResult solve_conformable_ivp(F&& f, Alpha alpha, double a, double y_a, double T,
                                std::size_t n_steps) {
    if (!(T > a))
        throw std::invalid_argument("solve_conformable_ivp: require T > a");
    if (n_steps < 1)
        throw std::invalid_argument("solve_conformable_ivp: require n_steps >= 1");
    const double al = alpha.value();
    const double v_end = std::pow(T - a, al) / al;
    const double dv = v_end / static_cast<double>(n_steps);

    IvpResult out;
    out.t.reserve(n_steps + 1);
    out.y.reserve(n_steps + 1);
    out.t.push_back(a);
    out.y.push_back(y_a);
    double y = y_a;
    for (std::size_t n = 0; n < n_steps; ++n) {
        const double v0 = static_cast<double>(n) * dv;
        const double t0 = detail::clock_to_time(v0, a, al);
        const double tm = detail::clock_to_time(v0 + 0.5 * dv, a, al);
        const double t1 = detail::clock_to_time(v0 + dv, a, al);
        const double k1 = f(t0, y);
        const double k2 = f(tm, y + 0.5 * dv * k1);
        const double k3 = f(tm, y + 0.5 * dv * k2);
        const double k4 = f(t1, y + dv * k3);
        const double y_next = y + dv / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(y_next)) {
            out.overflowed = true;
            out.last_valid_t = out.t.back();
            return out;
        }
        y = y_next;
        out.t.push_back(t1);
        out.y.push_back(y);
    }
    out.last_valid_t = out.t.back();
    return out;
}

}  // namespace cfsde
