#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mpctune/gp.hpp"

namespace mpctune {

// EI for minimization: improvement of mu below `best`.
double expected_improvement(double mu, double s, double best);

// Interpolating GP through the noisy model's posterior means at its
// (deduplicated) training inputs, same kernel hyperparameters, zero
// observation noise.  EI of the result vanishes at sampled points.
GpModel reinterpolate(const GpModel& model);

struct ConstraintSpec {
    double limit = 0.0;
    double z_level = 0.0;             // margin in predictive sigmas
    bool use_predictive_variance = false;  // else latent variance
};

double prob_feasibility(const std::vector<const GpModel*>& models,
                        const std::vector<ConstraintSpec>& specs, const Eigen::VectorXd& x);

// Binary classifier with SE-kernel distance and squared-inverse-distance
// weighting over the k nearest labeled points.
class KnnClassifier {
public:
    explicit KnnClassifier(int k = 5, double lengthscale = 0.3)
        : k_(k), lengthscale_(lengthscale) {}

    void add(const Eigen::VectorXd& x, bool label);
    double probability(const Eigen::VectorXd& x) const;

    int size() const { return static_cast<int>(points_.size()); }
    bool has_positive() const { return positives_ > 0; }

private:
    std::vector<Eigen::VectorXd> points_;
    std::vector<char> labels_;
    int positives_ = 0;
    int k_;
    double lengthscale_;
};

struct AcquisitionContext {
    const GpModel* objective_ri = nullptr;  // reinterpolated objective model
    double best = 0.0;                      // incumbent RI mean
    bool maximize = false;
    std::vector<const GpModel*> constraint_models;
    std::vector<ConstraintSpec> constraint_specs;
    const KnnClassifier* outlier = nullptr;
    const KnnClassifier* failure = nullptr;
};

struct AcquisitionBreakdown {
    double ri = 0.0, p_feas = 1.0, p_out = 0.0, p_fail = 0.0, alpha = 0.0;
};

// alpha = RI * p_feas * (1 - p_out) * (1 - p_fail), x in normalized units.
double acquisition(const AcquisitionContext& ctx, const Eigen::VectorXd& x,
                   AcquisitionBreakdown* breakdown = nullptr);

struct PsoOptions {
    int swarm_size = 60;
    int iters = 80;
    double inertia = 0.72;
    double cognitive = 1.49;
    double social = 1.49;
};

// Bound-constrained PSO; integer dimensions are flown continuously and
// rounded at evaluation time.  Deterministic given the seed.
Eigen::VectorXd pso_maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const std::vector<bool>& integer_mask, const PsoOptions& opts,
                             std::uint64_t seed);

// One observation row per entry; NaN marks a response not observed at
// that row.  Cleaned views exclude outlier- and failure-flagged rows.
struct Dataset {
    Eigen::MatrixXd X;  // n x m, raw coordinates
    Eigen::VectorXd y;  // objective samples (NaN allowed)
    Eigen::MatrixXd G;  // n x n_constraints (NaN allowed)
    std::vector<bool> outlier, failed;

    int size() const { return static_cast<int>(X.rows()); }
    int n_constraints() const { return static_cast<int>(G.cols()); }
    void append(const Eigen::VectorXd& x, double y_val, const Eigen::VectorXd& g_vals,
                bool is_failed = false);
    void reserve_dims(int m, int n_constraints);
};

struct BoStepConfig {
    Eigen::VectorXd lower, upper;
    std::vector<bool> integer_mask;
    Eigen::VectorXd lengthscale_min;  // normalized units, per dimension
    std::vector<ConstraintSpec> constraints;
    bool maximize = false;
    bool use_classifiers = true;
    bool pure_exploration = false;  // maximize posterior variance instead of RI
    int knn_k = 5;
    double knn_lengthscale = 0.3;
    PsoOptions pso;
    int gp_restarts = 8;
    int gp_max_iters = 80;
    std::optional<GpHyperparams> warm_start_objective;
};

struct BoStepResult {
    Eigen::VectorXd x_next;  // raw coordinates
    AcquisitionBreakdown breakdown;
    GpHyperparams objective_hyperparams;
    bool exploration_fallback = false;
};

// Lines 3-4 of the BO loop: refit models on cleaned data, rebuild the
// classifiers, maximize the composite acquisition.
BoStepResult bo_step(const Dataset& data, const BoStepConfig& cfg, std::uint64_t seed);

}  // namespace mpctune
