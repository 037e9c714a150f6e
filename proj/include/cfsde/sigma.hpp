#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>

namespace cfsde {

enum class SigmaKind { Linear, SuperLinear, Custom };

// Noise coefficient sigma(x) together with the two constants the moment
// bounds are phrased in: lip with |sigma(x)-sigma(y)| <= lip|x-y| and lower
// with |sigma(x)| >= lower|x|.  Linear(L) has both equal to L; SuperLinear
// stores the coefficient of the lower bound |sigma(x)| >= L|x|^b, b > 1, and
// is not globally Lipschitz.  Custom carries caller-asserted constants; a
// zero lip is admitted there only for a constant coefficient.
class SigmaSpec {
public:
    static SigmaSpec linear(double L) {
        if (!(L > 0.0)) throw std::invalid_argument("SigmaSpec: linear coefficient must be positive");
        SigmaSpec s;
        s.kind_ = SigmaKind::Linear;
        s.scale_ = L;
        s.lip_ = L;
        s.lower_ = L;
        return s;
    }

    static SigmaSpec super_linear(double L, double b) {
        if (!(L > 0.0)) throw std::invalid_argument("SigmaSpec: superlinear coefficient must be positive");
        if (!(b > 1.0)) throw std::invalid_argument("SigmaSpec: superlinear exponent must exceed 1");
        SigmaSpec s;
        s.kind_ = SigmaKind::SuperLinear;
        s.scale_ = L;
        s.lip_ = L;
        s.lower_ = L;
        s.b_ = b;
        return s;
    }

    static SigmaSpec custom(std::function<double(double)> fn, double lip, double lower) {
        if (!fn) throw std::invalid_argument("SigmaSpec: custom coefficient must be callable");
        if (!(lip >= 0.0)) throw std::invalid_argument("SigmaSpec: lip must be nonnegative");
        if (!(lower >= 0.0)) throw std::invalid_argument("SigmaSpec: lower must be nonnegative");
        if (lower > lip) throw std::invalid_argument("SigmaSpec: lower bound cannot exceed lip");
        SigmaSpec s;
        s.kind_ = SigmaKind::Custom;
        s.fn_ = std::move(fn);
        s.lip_ = lip;
        s.lower_ = lower;
        return s;
    }

    static SigmaSpec zero() {
        return custom([](double) { return 0.0; }, 0.0, 0.0);
    }

    double operator()(double x) const {
        switch (kind_) {
            case SigmaKind::Linear: return scale_ * x;
            case SigmaKind::SuperLinear: return scale_ * std::pow(std::abs(x), b_);
            case SigmaKind::Custom: return fn_(x);
        }
        return 0.0;
    }

    SigmaKind kind() const noexcept { return kind_; }
    double lip() const noexcept { return lip_; }
    double lower() const noexcept { return lower_; }

    std::optional<double> superlinear_b() const noexcept {
        if (kind_ == SigmaKind::SuperLinear) return b_;
        return std::nullopt;
    }

    // Coefficient of the power law for SuperLinear, the slope for Linear.
    double scale() const noexcept { return scale_; }

private:
    SigmaSpec() = default;

    SigmaKind kind_ = SigmaKind::Custom;
    double scale_ = 0.0;
    double lip_ = 0.0;
    double lower_ = 0.0;
    double b_ = 0.0;
    std::function<double(double)> fn_;
};

}  // namespace cfsde
