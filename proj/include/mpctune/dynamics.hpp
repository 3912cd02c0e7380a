#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <stdexcept>

#include "mpctune/rng.hpp"

namespace mpctune {

// Second-order tool-velocity dynamics
//   vdd + 2*D*w0*vd + w0^2*v = K*w0^2 * u(t - t_d)
struct PlantParams {
    double gain = 1.0;        // K
    double damping = 0.28;    // D
    double omega0 = 25.13;    // w0 [rad/s]
    double input_delay = 0.0; // t_d [s], integer multiple of the sample time

    void validate() const {
        if (omega0 <= 0.0) throw std::invalid_argument("plant: omega0 must be > 0");
        if (damping <= 0.0) throw std::invalid_argument("plant: damping must be > 0");
        if (gain == 0.0) throw std::invalid_argument("plant: gain must be nonzero");
        if (input_delay < 0.0) throw std::invalid_argument("plant: input delay must be >= 0");
    }
};

// Environmental perturbation: multiplicative scales on stiffness and damping.
struct Context {
    double stiffness_scale = 1.0;
    double damping_scale = 1.0;
};

// Componentwise truncated normal over contexts (no cross-correlation).
struct TruncatedNormalSpec {
    Eigen::Vector2d mean{1.0, 1.0};
    double sigma = 0.25;
    Eigen::Vector2d lower{0.5, 0.5};
    Eigen::Vector2d upper{1.5, 1.5};

    void validate() const {
        if (sigma <= 0.0) throw std::invalid_argument("context spec: sigma must be > 0");
        for (int i = 0; i < 2; ++i) {
            if (!(lower[i] < upper[i]))
                throw std::invalid_argument("context spec: lower bound must be < upper bound");
            if (mean[i] < lower[i] || mean[i] > upper[i])
                throw std::invalid_argument("context spec: mean must lie within the bounds");
        }
    }
};

// Exact ZOH discretization of the plant.  The two-state core (v, vd)
// evolves as x+ = A x + b u_delayed; the input delay is a d-sample FIFO.
struct DiscretePlant {
    Eigen::Matrix2d A;
    Eigen::Vector2d b;
    Eigen::RowVector2d c;
    int delay_samples = 0;
    double Ts = 0.0;

    double dc_gain() const {
        return (c * (Eigen::Matrix2d::Identity() - A).inverse() * b).value();
    }
};

// Simulation state for one episode of the discrete plant.
class PlantSim {
public:
    explicit PlantSim(const DiscretePlant& model)
        : model_(model), x_(Eigen::Vector2d::Zero()),
          delay_line_(static_cast<std::size_t>(model.delay_samples), 0.0) {}

    // Advance one sample with commanded input u; returns the new output.
    double step(double u) {
        double u_eff = u;
        if (!delay_line_.empty()) {
            u_eff = delay_line_.front();
            delay_line_.pop_front();
            delay_line_.push_back(u);
        }
        x_ = model_.A * x_ + model_.b * u_eff;
        return output();
    }

    double output() const { return (model_.c * x_).value(); }
    const Eigen::Vector2d& state() const { return x_; }

private:
    const DiscretePlant& model_;
    Eigen::Vector2d x_;
    std::deque<double> delay_line_;
};

PlantParams perturb(const PlantParams& plant, const Context& ctx);

// Closed-form ZOH discretization (matrix exponential of the companion
// form, evaluated analytically for the under-, critically- and
// over-damped cases).
DiscretePlant discretize(const PlantParams& plant, double Ts);

Context sample_context(const TruncatedNormalSpec& spec, std::mt19937_64& eng);
Context sample_context(const TruncatedNormalSpec& spec, std::uint64_t seed);

}  // namespace mpctune
