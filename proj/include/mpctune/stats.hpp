#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace mpctune {

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// log density of the Student-t distribution with nu degrees of freedom,
// location 0 and scale sigma, evaluated at r.
inline double student_t_logpdf(double r, double nu, double sigma) {
    double z = r / sigma;
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)
         - 0.5 * std::log(nu * std::numbers::pi) - std::log(sigma)
         - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

// One draw from a normal truncated to [lo, hi], by rejection.  The
// supported configurations keep the bounds within a few sigma of the
// mean, so acceptance is high; a degenerate interval returns its center.
inline double truncated_normal_draw(double mu, double sigma, double lo, double hi,
                                    std::mt19937_64& eng) {
    if (hi - lo < 1e-12 * sigma) return 0.5 * (lo + hi);
    std::normal_distribution<double> n(mu, sigma);
    for (int i = 0; i < 100000; ++i) {
        double x = n(eng);
        if (x >= lo && x <= hi) return x;
    }
    // Pathologically far-out bounds: fall back to a uniform draw.
    std::uniform_real_distribution<double> u(lo, hi);
    return u(eng);
}

// Latin hypercube design: n points, one sample per stratum in each
// dimension.  Integer dimensions are stratified continuously and then
// rounded to the nearest integer.
inline Eigen::MatrixXd latin_hypercube(int n, const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper,
                                       const std::vector<bool>& integer_mask,
                                       std::uint64_t seed) {
    const int m = static_cast<int>(lower.size());
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::MatrixXd pts(n, m);
    std::vector<int> perm(n);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), eng);
        for (int i = 0; i < n; ++i) {
            double frac = (perm[i] + u01(eng)) / n;
            double x = lower[j] + frac * (upper[j] - lower[j]);
            if (j < static_cast<int>(integer_mask.size()) && integer_mask[j]) {
                x = std::round(x);
                x = std::min(std::max(x, lower[j]), upper[j]);
            }
            pts(i, j) = x;
        }
    }
    return pts;
}

}  // namespace mpctune
