#include "mpctune/closedloop.hpp"

#include "mpctune/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace mpctune {

double ReferenceTrajectory::peak() const {
    double p = 0.0;
    for (double v : values) p = std::max(p, std::abs(v));
    return p;
}

ReferenceTrajectory ReferenceTrajectory::trapezoid(double Ts, double v_peak, int n_rest0,
                                                   int n_ramp, int n_hold, int n_rest1) {
    ReferenceTrajectory t;
    t.Ts = Ts;
    t.values.reserve(n_rest0 + 2 * n_ramp + n_hold + n_rest1 + 1);
    for (int i = 0; i < n_rest0; ++i) t.values.push_back(0.0);
    for (int i = 0; i < n_ramp; ++i) t.values.push_back(v_peak * (i + 1) / n_ramp);
    for (int i = 0; i < n_hold; ++i) t.values.push_back(v_peak);
    for (int i = 0; i < n_ramp; ++i) t.values.push_back(v_peak * (n_ramp - 1 - i) / n_ramp);
    for (int i = 0; i <= n_rest1; ++i) t.values.push_back(0.0);
    return t;
}

ReferenceTrajectory ReferenceTrajectory::constant(double Ts, double level, int n) {
    ReferenceTrajectory t;
    t.Ts = Ts;
    t.values.assign(static_cast<std::size_t>(n) + 1, level);
    return t;
}

double synthetic_step_time(const TimingModel& model, int Hu, std::uint64_t seed) {
    double base = model.c0 + model.c1 * static_cast<double>(Hu) * Hu * Hu;
    if (model.jitter_std <= 0.0) return base;
    auto eng = make_engine(mix64(seed ^ 0x74696d65ULL));
    std::normal_distribution<double> n(0.0, model.jitter_std);
    return std::max(1e-9, base + n(eng));
}

double overshoot(const std::vector<double>& v, const std::vector<double>& v_ref) {
    double worst = 0.0;
    const std::size_t n = std::min(v.size(), v_ref.size());
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, v[k] - v_ref[k]);
    return std::max(0.0, worst);
}

EpisodeOutcome run_episode(const EpisodeConfig& cfg, const ControllerParams& params,
                           const Context& ctx, std::uint64_t noise_seed, EpisodeTrace* trace) {
    EpisodeOutcome out;
    out.failed = true;  // cleared on a clean finish

    const auto& ref = cfg.trajectory.values;
    const int N = static_cast<int>(ref.size()) - 1;
    if (N < 1) return out;

    DiscretePlant nominal, actual;
    try {
        nominal = discretize(cfg.nominal_plant, cfg.Ts);
        actual = discretize(perturb(cfg.nominal_plant, ctx), cfg.Ts);
    } catch (const std::exception&) {
        return out;
    }

    MpcController mpc(nominal, params);
    if (!mpc.gain_ok()) return out;
    KalmanFilter kf(nominal, KfConfig::from_lambda(params.lambda_kf));
    PlantSim sim(actual);

    auto eng = make_engine(noise_seed);
    std::normal_distribution<double> noise(0.0, std::max(0.0, cfg.noise_std));

    const int d = nominal.delay_samples;
    const int h = std::max(d, 1);
    std::vector<double> u_hist(static_cast<std::size_t>(h), 0.0);  // u_{k-1} .. u_{k-h}
    const int Hp = params.prediction_horizon;
    Eigen::VectorXd ref_window(Hp), z(2 + h);

    const double guard = cfg.divergence_factor * std::max(cfg.trajectory.peak(), 1e-9);
    double ite = 0.0, worst = 0.0, max_time = 0.0;

    if (trace) {
        trace->v_ref.clear();
        trace->v.clear();
        trace->u.clear();
        trace->x_hat.clear();
    }

    for (int k = 0; k <= N; ++k) {
        const double v_k = sim.output();
        if (!std::isfinite(v_k) || std::abs(v_k) > guard) {
            // Aborted episode: the overshoot seen so far is still a valid
            // lower bound on the worst case and is reported with the
            // failure so constraint models can learn from the excursion.
            if (std::isfinite(v_k)) worst = std::max(worst, v_k - ref[k]);
            out.overshoot = std::max(0.0, worst);
            return out;
        }

        const double err = ref[k] - v_k;
        ite += err * err;
        worst = std::max(worst, v_k - ref[k]);

        const double y = v_k + (cfg.noise_std > 0.0 ? noise(eng) : 0.0);
        if (!kf.update(y)) {
            out.overshoot = std::max(0.0, worst);
            return out;
        }

        if (trace) {
            trace->v_ref.push_back(ref[k]);
            trace->v.push_back(v_k);
            trace->x_hat.push_back(kf.state());
        }
        if (k == N) break;

        z.head<2>() = kf.state();
        for (int i = 0; i < h; ++i) z(2 + i) = u_hist[i];
        for (int i = 0; i < Hp; ++i) ref_window(i) = ref[std::min(k + 1 + i, N)];

        double u = 0.0;
        const auto t0 = std::chrono::steady_clock::now();
        if (!mpc.control(z, ref_window, u)) {
            out.overshoot = std::max(0.0, worst);
            return out;
        }
        if (cfg.timing.mode == TimingMode::wallclock) {
            const auto t1 = std::chrono::steady_clock::now();
            max_time = std::max(max_time, std::chrono::duration<double>(t1 - t0).count());
        }
        if (trace) trace->u.push_back(u);

        const double u_delayed = (d == 0) ? u : u_hist[static_cast<std::size_t>(d) - 1];
        sim.step(u);
        kf.predict(u_delayed);
        for (int i = h - 1; i > 0; --i) u_hist[i] = u_hist[i - 1];
        u_hist[0] = u;
    }

    out.ite = ite;
    out.overshoot = std::max(0.0, worst);
    out.step_time = cfg.timing.mode == TimingMode::synthetic
                        ? synthetic_step_time(cfg.timing, params.control_horizon, noise_seed)
                        : std::max(max_time, 1e-9);
    out.failed = false;
    return out;
}

}  // namespace mpctune
