#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mpctune/control.hpp"
#include "mpctune/dynamics.hpp"

namespace mpctune {

struct ReferenceTrajectory {
    std::vector<double> values;  // v_ref,k for k = 0..N
    double Ts = 0.002;

    int last_index() const { return static_cast<int>(values.size()) - 1; }
    double peak() const;

    // rest -> ramp to v_peak -> hold -> ramp down -> rest
    static ReferenceTrajectory trapezoid(double Ts, double v_peak = 1.0, int n_rest0 = 100,
                                         int n_ramp = 200, int n_hold = 800, int n_rest1 = 200);
    static ReferenceTrajectory constant(double Ts, double level, int n);
};

enum class TimingMode { synthetic, wallclock };

struct TimingModel {
    TimingMode mode = TimingMode::synthetic;
    double c0 = 5e-5;       // fixed per-step overhead [s]
    double c1 = 8.92e-8;    // cubic coefficient: c1 * H_u^3
    double jitter_std = 2e-5;
};

// Synthetic per-step solve-time model: cubic in H_u (dense normal
// equations), plus seeded jitter.  Independent of the other parameters.
double synthetic_step_time(const TimingModel& model, int Hu, std::uint64_t seed);

struct EpisodeOutcome {
    double ite = 0.0;        // sum of squared tracking errors
    double overshoot = 0.0;  // max exceedance above the reference
    double step_time = 0.0;  // max per-step controller time [s]
    bool failed = false;
};

struct EpisodeTrace {
    std::vector<double> v_ref, v, u;
    std::vector<Eigen::Vector2d> x_hat;
};

struct EpisodeConfig {
    PlantParams nominal_plant;
    double Ts = 0.002;
    ReferenceTrajectory trajectory;
    double noise_std = 0.0316227766016838;  // sqrt(0.001), matches R_KF
    TimingModel timing;
    double divergence_factor = 1e3;  // |v| > factor * max|v_ref| aborts the episode
};

// One closed-loop episode: perturbed plant, nominal-model KF + MPC,
// Gaussian measurement noise.  Deterministic given (params, ctx, seed)
// in synthetic timing mode.
EpisodeOutcome run_episode(const EpisodeConfig& cfg, const ControllerParams& params,
                           const Context& ctx, std::uint64_t noise_seed,
                           EpisodeTrace* trace = nullptr);

// Largest one-sided exceedance of the velocity above its reference.
double overshoot(const std::vector<double>& v, const std::vector<double>& v_ref);

}  // namespace mpctune
