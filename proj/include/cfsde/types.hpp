#pragma once

#include <stdexcept>

namespace cfsde {

enum class Regime { Subcritical, Critical, Supercritical };

// Fractional order alpha in (0,1).  The classical limit alpha=1 is admitted
// only through the named factory, never through the checked constructor, so
// it cannot arise from a mistyped config value.
class Alpha {
public:
    explicit Alpha(double value) : value_(value) {
        if (!(value > 0.0 && value < 1.0))
            throw std::invalid_argument("Alpha: order must lie in (0,1)");
    }

    static Alpha classical_limit() noexcept { return Alpha(Tag{}); }

    double value() const noexcept { return value_; }

    Regime regime() const noexcept {
        if (value_ < 0.5) return Regime::Subcritical;
        if (value_ > 0.5) return Regime::Supercritical;
        return Regime::Critical;
    }

private:
    struct Tag {};
    explicit Alpha(Tag) noexcept : value_(1.0) {}
    double value_;
};

struct TimeWindow {
    double a;
    double T;

    TimeWindow(double a_, double T_) : a(a_), T(T_) {
        if (!(a >= 0.0)) throw std::invalid_argument("TimeWindow: start must satisfy a >= 0");
        if (!(T > a)) throw std::invalid_argument("TimeWindow: horizon must satisfy T > a");
    }

    double span() const noexcept { return T - a; }
};

// Parameters of the exponential weight exp(-beta_norm (t-a)^kappa / kappa).
// kappa is the order itself for the one-sided weight e(t) and 2*alpha-1 for
// the second-moment weight a(t); beta_norm is the norm rate, distinct from
// any growth exponent.
struct WeightedNormParams {
    double beta_norm;
    double kappa;

    WeightedNormParams(double beta_norm_, double kappa_)
        : beta_norm(beta_norm_), kappa(kappa_) {
        if (!(beta_norm > 0.0))
            throw std::invalid_argument("WeightedNormParams: beta_norm must be positive");
        if (!(kappa > 0.0))
            throw std::invalid_argument("WeightedNormParams: kappa must be positive");
    }
};

}  // namespace cfsde
