#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mpctune {

// Maps a box to the unit cube; GP inputs are always normalized.
struct BoxNormalizer {
    Eigen::VectorXd lower, upper;

    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
        Eigen::VectorXd z(x.size());
        for (int i = 0; i < x.size(); ++i) {
            double w = upper[i] - lower[i];
            z[i] = w > 0.0 ? (x[i] - lower[i]) / w : 0.0;
        }
        return z;
    }
    Eigen::VectorXd denormalize(const Eigen::VectorXd& z) const {
        Eigen::VectorXd x(z.size());
        for (int i = 0; i < z.size(); ++i) x[i] = lower[i] + z[i] * (upper[i] - lower[i]);
        return x;
    }
};

struct GpHyperparams {
    double mean = 0.0;
    double sigma_f2 = 1.0;
    Eigen::VectorXd lengthscales;  // one per input dimension
    double sigma_n2 = 0.01;
};

struct GpFitOptions {
    int restarts = 8;
    int max_iters = 80;
    Eigen::VectorXd lengthscale_min;  // per-dimension lower bounds; empty = 0.05 everywhere
    double lengthscale_max = 10.0;
    double prior_lengthscale = 0.3;   // log-normal hyperprior center
    std::uint64_t seed = 0;
    std::optional<GpHyperparams> warm_start;  // extra restart (standardized units)
};

// Log marginal likelihood of an SE-ARD GP with constant mean and
// homoscedastic Gaussian noise, and its gradient with respect to
// [mean, log sigma_f2, log l_1..l_m, log sigma_n2].
double gp_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const GpHyperparams& hp);
Eigen::VectorXd gp_log_marginal_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const GpHyperparams& hp);

class GpModel {
public:
    struct Prediction {
        double mean = 0.0;
        double var_latent = 0.0;  // noise-free
        double var_pred = 0.0;    // latent + observation noise
    };

    // Hyperparameters from penalized maximum likelihood (multi-start).
    static GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const GpFitOptions& opts);

    // Factorize with fixed hyperparameters.  hp is in standardized
    // target units under the given shift/scale.
    static GpModel with_hyperparams(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const GpHyperparams& hp_std, double y_shift, double y_scale);

    Prediction predict(const Eigen::VectorXd& x) const;

    const Eigen::MatrixXd& inputs() const { return X_; }
    const Eigen::VectorXd& targets() const { return y_raw_; }
    // Hyperparameters in standardized target units.
    const GpHyperparams& hyperparams() const { return hp_; }
    double y_shift() const { return y_shift_; }
    double y_scale() const { return y_scale_; }
    int dim() const { return static_cast<int>(X_.cols()); }
    int size() const { return static_cast<int>(X_.rows()); }

    // Posterior mean at every training input (raw units).
    Eigen::VectorXd training_means() const;

private:
    void factorize();

    Eigen::MatrixXd X_;
    Eigen::VectorXd y_raw_, y_std_;
    double y_shift_ = 0.0, y_scale_ = 1.0;
    GpHyperparams hp_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
};

struct RobustFit {
    Eigen::VectorXd latent_mean;    // posterior mode at the training inputs (raw units)
    Eigen::VectorXd point_loglik;   // predictive log-likelihood of each observation
    Eigen::VectorXd point_scale;    // predictive Student-t scale per point (standardized)
    double t_scale = 0.0;           // fitted observation scale (standardized)
    double nu = 4.0;
    bool converged = false;
};

// Latent GP with Student-t observations, fitted by iteratively
// reweighted least squares (scale-mixture representation); kernel
// hyperparameters come from a preliminary Gaussian fit with the given
// per-dimension lengthscale floors (empty = default floor).
RobustFit robust_fit_student_t(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double nu,
                               std::uint64_t seed,
                               const Eigen::VectorXd& lengthscale_min = Eigen::VectorXd());

struct OutlierLabels {
    std::vector<bool> flags;
    Eigen::VectorXd loglik;
    bool fallback = false;  // robust fit did not converge; no outliers reported
};

// Flags observations whose robust predictive log-likelihood falls below
// the density of a |z| = threshold_z event under the fitted Student-t.
OutlierLabels detect_outliers(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double threshold_z = 3.0, double nu = 4.0, std::uint64_t seed = 0,
                              const Eigen::VectorXd& lengthscale_min = Eigen::VectorXd());

}  // namespace mpctune
