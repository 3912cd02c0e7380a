#pragma once

#include <Eigen/Dense>

#include <stdexcept>

#include "mpctune/dynamics.hpp"

namespace mpctune {

// The tunable vector: two horizons (integer) and two log10 weight ratios.
struct ControllerParams {
    int control_horizon = 15;     // H_u
    int prediction_horizon = 15;  // H_p
    double lambda_mpc = -3.0;     // R = I * 10^lambda_mpc
    double lambda_kf = -1.0;      // Q_KF = I * 10^lambda_kf

    void validate() const {
        if (control_horizon < 1) throw std::invalid_argument("controller: H_u must be >= 1");
        if (prediction_horizon < control_horizon)
            throw std::invalid_argument("controller: H_p must be >= H_u");
    }
};

struct ControllerBounds {
    int hu_min = 1, hu_max = 30;
    int hp_min = 1, hp_max = 30;
    double lambda_mpc_min = -6.0, lambda_mpc_max = 1.0;
    double lambda_kf_min = -4.0, lambda_kf_max = 3.0;

    bool contains(const ControllerParams& p) const {
        return p.control_horizon >= hu_min && p.control_horizon <= hu_max &&
               p.prediction_horizon >= hp_min && p.prediction_horizon <= hp_max &&
               p.prediction_horizon >= p.control_horizon &&
               p.lambda_mpc >= lambda_mpc_min && p.lambda_mpc <= lambda_mpc_max &&
               p.lambda_kf >= lambda_kf_min && p.lambda_kf <= lambda_kf_max;
    }
};

struct MpcWeights {
    double q = 1.0;  // tracking-error weight (diagonal)
    double r = 1.0;  // input-change weight (diagonal), 10^lambda_mpc

    static MpcWeights from_lambda(double lambda_mpc) {
        return MpcWeights{1.0, std::pow(10.0, lambda_mpc)};
    }
};

struct KfConfig {
    double r_meas = 0.001;     // R_KF, fixed sensor variance
    double q_process = 0.1;    // Q_KF diagonal, 10^lambda_kf

    static KfConfig from_lambda(double lambda_kf) {
        return KfConfig{0.001, std::pow(10.0, lambda_kf)};
    }
};

// Prediction matrices for the delta-u formulation over the augmented
// state [x; u_{k-1}; ...; u_{k-d}]: y_future = Psi * z + Theta * dU.
struct Predictor {
    Eigen::MatrixXd Psi;    // H_p x nz
    Eigen::MatrixXd Theta;  // H_p x H_u
    Eigen::MatrixXd Aa;     // augmented state transition
    Eigen::VectorXd Ba;     // augmented input map (for delta-u)
    int state_dim = 0;      // nz = 2 + max(d, 1)
};

Predictor build_predictor(const DiscretePlant& model, int Hp, int Hu);

// Unconstrained delta-u MPC.  Holds the precomputed feedback gain
// M = (Theta' Q Theta + R)^-1 Theta' Q; each step is a matrix-vector
// product against the reference deviation.
class MpcController {
public:
    MpcController(const DiscretePlant& nominal, const ControllerParams& params);

    // z: augmented state estimate [x_hat; input history], ref_window of
    // length >= H_p.  Returns false on a singular solve (failure signal).
    bool control(const Eigen::VectorXd& z, const Eigen::VectorXd& ref_window, double& u_out) const;

    const Predictor& predictor() const { return pred_; }
    bool gain_ok() const { return gain_ok_; }

private:
    Predictor pred_;
    Eigen::MatrixXd gain_;  // H_u x H_p
    bool gain_ok_ = false;
};

// Linear Kalman filter over the two-state plant core with known
// (delayed) input.  P is re-symmetrized after every update.
class KalmanFilter {
public:
    KalmanFilter(const DiscretePlant& nominal, const KfConfig& cfg);

    void predict(double u_delayed);
    bool update(double y);  // false if the innovation covariance is singular

    const Eigen::Vector2d& state() const { return x_; }
    const Eigen::Matrix2d& covariance() const { return P_; }
    void set_state(const Eigen::Vector2d& x, const Eigen::Matrix2d& P) { x_ = x; P_ = P; }

private:
    Eigen::Matrix2d A_, Q_;
    Eigen::Vector2d b_;
    Eigen::RowVector2d c_;
    double r_meas_;
    Eigen::Vector2d x_;
    Eigen::Matrix2d P_;
};

}  // namespace mpctune
