#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "mpctune/bo.hpp"
#include "mpctune/closedloop.hpp"

namespace mpctune {

using EpisodeFn = std::function<EpisodeOutcome(const Context&, std::uint64_t seed)>;

struct Stage2Options {
    TruncatedNormalSpec context_spec;
    double overshoot_max = 0.15;
    int n_init = 5;
    int budget = 10;
    PsoOptions pso{30, 40};
    int gp_restarts = 3;
    int gp_max_iters = 50;
};

struct Stage2Result {
    double worst_overshoot = 0.0;
    std::vector<std::pair<double, double>> init_samples;  // (ite, step_time) per initial context
    int evaluations = 0;
    bool early_stop = false;
    bool failed = false;
};

// Inner maximization: find the worst context for a fixed controller.
// 5 initial truncated-normal draws, then noisy BO (plain RI) over the
// context box; stops on the first overshoot above the limit or after
// `budget` evaluations total.
Stage2Result stage2_worst_context(const EpisodeFn& episode, const Stage2Options& opts,
                                  std::uint64_t seed);

enum class Algorithm { NominalBo = 1, RandomSearch = 2, BoNoOutlier = 3, BoFull = 4 };

struct ValidationResult {
    double objective = 0.0;  // mean ITE over the draws
    bool feasible = false;
    double max_overshoot = 0.0;
    double max_step_time = 0.0;
    int failures = 0;
};

struct TunerOptions {
    EpisodeConfig episode;
    TruncatedNormalSpec context_spec;
    ControllerBounds bounds;
    bool two_dim_benchmark = false;  // optimize (H_u, lambda_mpc); H_p = H_u, lambda_kf fixed
    double fixed_lambda_kf = -1.0;

    int budget = 60;  // total Stage-1 evaluations including the initial design
    int n_init = 15;
    Algorithm algorithm = Algorithm::BoFull;

    double overshoot_max = 0.15;
    double time_max = 1e-3;
    double time_z_level = 3.0;

    Stage2Options stage2;
    PsoOptions pso{60, 80};
    int gp_restarts = 8;
    int gp_max_iters = 80;
    int gp_refit_full_every = 5;  // full multistart cadence; warm-started otherwise
    double horizon_lengthscale_min = 0.22;
    int knn_k = 5;
    double knn_lengthscale = 0.3;
    double outlier_threshold_z = 3.0;
    double student_t_nu = 4.0;
    bool outlier_detection = true;  // disabled for Algorithm III

    int validation_draws = 25;
    bool validate_incumbents = true;
};

struct TunerRecord {
    ControllerParams params;
    Stage2Result stage2;
    bool outlier = false;
    bool from_initial_design = false;
    double mean_ite = 0.0;  // mean of the returned ITE samples (NaN when failed)
    AcquisitionBreakdown acq;
    // Fig.-4 columns: running best feasible estimate / validation objective.
    double incumbent_estimate = 0.0;
    double incumbent_validation = 0.0;
};

struct Stage1Result {
    ControllerParams best;
    bool best_feasible = false;
    std::vector<TunerRecord> history;
    long episode_count = 0;       // episodes consumed by tuning records
    long validation_episodes = 0; // episodes consumed by incumbent validation
    double best_train_estimate = 0.0;  // observed mean ITE at the chosen point
};

Stage1Result stage1_optimize(const TunerOptions& opts, std::uint64_t seed);

ValidationResult validate(const TunerOptions& opts, const ControllerParams& params, int n_draws,
                          std::uint64_t seed);

struct BenchmarkRunResult {
    Algorithm algorithm;
    std::uint64_t seed = 0;
    Stage1Result stage1;
    ValidationResult validation;
    double objective_gap = 0.0;  // validation objective - training estimate
};

BenchmarkRunResult run_benchmark_algorithm(Algorithm algo, const TunerOptions& opts,
                                           std::uint64_t seed);

struct GridCell {
    double x0 = 0.0, x1 = 0.0;
    double objective_mean = 0.0;
    double p_feas = 1.0, p_out = 0.0, p_fail = 0.0;
    double time_mean = 0.0;       // time-GP posterior mean
    double time_synthetic = 0.0;  // synthetic step-time model (H_u only)
};

// Plot-ready grid over two controller dimensions, remaining dimensions
// fixed at the best point.  dims index the optimization vector.
std::vector<GridCell> export_grid(const TunerOptions& opts, const Stage1Result& result, int dim0,
                                  int dim1, int resolution, std::uint64_t seed);

// Optimization-vector <-> controller mapping (2-D benchmark or full 4-D).
int tuning_dim(const TunerOptions& opts);
Eigen::VectorXd tuning_lower(const TunerOptions& opts);
Eigen::VectorXd tuning_upper(const TunerOptions& opts);
std::vector<bool> tuning_integer_mask(const TunerOptions& opts);
ControllerParams decode_params(const TunerOptions& opts, const Eigen::VectorXd& x);
Eigen::VectorXd encode_params(const TunerOptions& opts, const ControllerParams& p);

}  // namespace mpctune
