#include "mpctune/dynamics.hpp"

#include "mpctune/stats.hpp"

#include <cmath>

namespace mpctune {

PlantParams perturb(const PlantParams& plant, const Context& ctx) {
    PlantParams p = plant;
    p.omega0 *= ctx.stiffness_scale;
    p.damping *= ctx.damping_scale;
    return p;
}

DiscretePlant discretize(const PlantParams& plant, double Ts) {
    plant.validate();
    if (Ts <= 0.0) throw std::invalid_argument("discretize: Ts must be > 0");

    double d_real = plant.input_delay / Ts;
    int d = static_cast<int>(std::lround(d_real));
    if (std::abs(d_real - d) > 1e-6)
        throw std::invalid_argument("discretize: input delay must be an integer multiple of Ts");

    const double w0 = plant.omega0;
    const double D = plant.damping;
    Eigen::Matrix2d Ac;
    Ac << 0.0, 1.0, -w0 * w0, -2.0 * D * w0;
    Eigen::Vector2d bc(0.0, plant.gain * w0 * w0);

    // exp(Ac*Ts) = alpha*I + beta*Ac by Cayley-Hamilton; alpha and beta
    // from the eigenvalues -sigma +- sqrt(D^2-1)*w0.
    const double sigma = D * w0;
    const double t = Ts;
    double alpha, beta;
    const double disc = D * D - 1.0;
    const double e = std::exp(-sigma * t);
    if (std::abs(disc) < 1e-12) {  // critically damped
        beta = t * e;
        alpha = e * (1.0 + sigma * t);
    } else if (disc < 0.0) {  // underdamped
        const double wd = w0 * std::sqrt(-disc);
        beta = e * std::sin(wd * t) / wd;
        alpha = e * (std::cos(wd * t) + sigma * std::sin(wd * t) / wd);
    } else {  // overdamped
        const double wb = w0 * std::sqrt(disc);
        beta = e * std::sinh(wb * t) / wb;
        alpha = e * (std::cosh(wb * t) + sigma * std::sinh(wb * t) / wb);
    }

    DiscretePlant dp;
    dp.A = alpha * Eigen::Matrix2d::Identity() + beta * Ac;
    // Ac is invertible (det = w0^2 > 0), so the ZOH input map has the
    // closed form b = Ac^{-1} (A - I) bc.
    dp.b = Ac.inverse() * (dp.A - Eigen::Matrix2d::Identity()) * bc;
    dp.c << 1.0, 0.0;
    dp.delay_samples = d;
    dp.Ts = Ts;
    return dp;
}

Context sample_context(const TruncatedNormalSpec& spec, std::mt19937_64& eng) {
    spec.validate();
    Context ctx;
    ctx.stiffness_scale =
        truncated_normal_draw(spec.mean[0], spec.sigma, spec.lower[0], spec.upper[0], eng);
    ctx.damping_scale =
        truncated_normal_draw(spec.mean[1], spec.sigma, spec.lower[1], spec.upper[1], eng);
    return ctx;
}

Context sample_context(const TruncatedNormalSpec& spec, std::uint64_t seed) {
    auto eng = make_engine(seed);
    return sample_context(spec, eng);
}

}  // namespace mpctune
