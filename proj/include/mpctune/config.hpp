#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpctune/tuner.hpp"

namespace mpctune {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what) {}
};

struct TrajectorySpec {
    std::string type = "trapezoid";  // or "constant"
    double v_peak = 1.0;
    int n_rest0 = 100, n_ramp = 200, n_hold = 800, n_rest1 = 200;
    double level = 1.0;  // constant type
    int n = 1500;        // constant type

    ReferenceTrajectory build(double Ts) const;
};

struct BenchmarkSettings {
    int n_runs = 10;
    std::vector<std::string> algorithms{"I", "II", "III", "IV"};
};

struct RunConfig {
    PlantParams plant;
    double Ts = 0.002;
    TrajectorySpec trajectory;
    double noise_std = 0.0316227766016838;
    TruncatedNormalSpec context;
    ControllerBounds bounds;

    double overshoot_max = 0.15;
    double time_max = 1e-3;
    double time_z_level = 3.0;
    TimingModel timing;

    // Stage-1 settings
    int budget = 60;
    int n_init = 15;
    std::string algorithm = "IV";
    bool two_dim_benchmark = false;
    double fixed_lambda_kf = -1.0;
    int validation_draws = 25;
    bool validate_incumbents = true;

    // BO machinery
    int pso_swarm = 60, pso_iters = 80;
    int gp_restarts = 8, gp_max_iters = 80, gp_refit_full_every = 5;
    double horizon_lengthscale_min = 0.22;
    int knn_k = 5;
    double knn_lengthscale = 0.3;
    double outlier_threshold_z = 3.0;
    double student_t_nu = 4.0;

    // Stage-2 settings
    int stage2_n_init = 5, stage2_budget = 10;
    int stage2_pso_swarm = 30, stage2_pso_iters = 40;
    int stage2_gp_restarts = 3, stage2_gp_max_iters = 50;

    BenchmarkSettings benchmark;

    std::uint64_t seed = 1;
    std::string out_dir = "out";

    void validate_fields() const;
    TunerOptions tuner_options() const;
    EpisodeConfig episode_config() const;
};

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm a);

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Loads a JSON config (comments allowed); missing keys keep defaults.
RunConfig load_config(const std::string& path);
std::string resolved_config_text(const RunConfig& c);

// History serialization (one TunerRecord per JSONL line).
nlohmann::json record_to_json(const TunerOptions& opts, const TunerRecord& rec);
TunerRecord record_from_json(const nlohmann::json& j);

}  // namespace mpctune
