#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace cfsde {

// Cascade summation in index order.  The result is a pure function of the
// operand sequence, so ensemble reductions stay bitwise identical for any
// worker count; error grows like O(log n) rather than O(n).
inline double pairwise_sum(std::span<const double> xs) noexcept {
    if (xs.size() <= 16) {
        double acc = 0.0;
        for (const double x : xs) acc += x;
        return acc;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct LeastSquaresFit {
    double slope;
    double intercept;
    double r_squared;
};

// Ordinary least squares of y against x; r_squared clamped to [0,1].
inline LeastSquaresFit least_squares(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("least_squares: size mismatch");
    if (x.size() < 2)
        throw std::invalid_argument("least_squares: need at least two points");
    const auto n = static_cast<double>(x.size());
    const double xm = pairwise_sum(x) / n;
    const double ym = pairwise_sum(y) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    if (sxx == 0.0)
        throw std::invalid_argument("least_squares: abscissa is constant");
    const double slope = sxy / sxx;
    const double intercept = ym - slope * xm;
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (intercept + slope * x[i]);
        ss_res += e * e;
        ss_tot += (y[i] - ym) * (y[i] - ym);
    }
    double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    if (r2 < 0.0) r2 = 0.0;
    if (r2 > 1.0) r2 = 1.0;
    return {slope, intercept, r2};
}

}  // namespace cfsde
