#include "mpctune/control.hpp"

#include <cmath>
#include <vector>

namespace mpctune {

Predictor build_predictor(const DiscretePlant& model, int Hp, int Hu) {
    if (Hu < 1 || Hp < Hu) throw std::invalid_argument("build_predictor: need H_p >= H_u >= 1");

    const int d = model.delay_samples;
    const int h = std::max(d, 1);  // input-history length (always carries u_{k-1})
    const int nz = 2 + h;

    Eigen::MatrixXd Aa = Eigen::MatrixXd::Zero(nz, nz);
    Eigen::VectorXd Ba = Eigen::VectorXd::Zero(nz);
    Aa.topLeftCorner<2, 2>() = model.A;
    if (d == 0) {
        // u applied immediately: x+ = A x + b (u_{k-1} + du)
        Aa.block<2, 1>(0, 2) = model.b;
        Ba.head<2>() = model.b;
    } else {
        Aa.block<2, 1>(0, 2 + d - 1) = model.b;  // applies u_{k-d}
    }
    Aa(2, 2) = 1.0;  // u_k = u_{k-1} + du_k
    Ba(2) = 1.0;
    for (int i = 1; i < h; ++i) Aa(2 + i, 2 + i - 1) = 1.0;

    Eigen::RowVectorXd Ca = Eigen::RowVectorXd::Zero(nz);
    Ca.head<2>() = model.c;

    Predictor p;
    p.Aa = Aa;
    p.Ba = Ba;
    p.state_dim = nz;
    p.Psi.resize(Hp, nz);
    p.Theta = Eigen::MatrixXd::Zero(Hp, Hu);

    // Impulse response of the augmented system to a single delta-u.
    Eigen::VectorXd imp = Ba;
    std::vector<double> g(Hp + 1, 0.0);
    for (int i = 1; i <= Hp; ++i) {
        g[i] = (Ca * imp)(0);
        imp = Aa * imp;
    }
    Eigen::MatrixXd Apow = Aa;
    for (int i = 0; i < Hp; ++i) {
        p.Psi.row(i) = Ca * Apow;
        Apow = Aa * Apow;
    }
    for (int i = 0; i < Hp; ++i)
        for (int j = 0; j <= std::min(i, Hu - 1); ++j)
            p.Theta(i, j) = g[i - j + 1];
    return p;
}

MpcController::MpcController(const DiscretePlant& nominal, const ControllerParams& params) {
    params.validate();
    pred_ = build_predictor(nominal, params.prediction_horizon, params.control_horizon);
    const MpcWeights w = MpcWeights::from_lambda(params.lambda_mpc);

    const int Hu = params.control_horizon;
    Eigen::MatrixXd H = w.q * (pred_.Theta.transpose() * pred_.Theta)
                      + w.r * Eigen::MatrixXd::Identity(Hu, Hu);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        gain_ = ldlt.solve(w.q * pred_.Theta.transpose());
        gain_ok_ = gain_.allFinite();
    }
}

bool MpcController::control(const Eigen::VectorXd& z, const Eigen::VectorXd& ref_window,
                            double& u_out) const {
    if (!gain_ok_) return false;
    Eigen::VectorXd deviation = ref_window.head(pred_.Psi.rows()) - pred_.Psi * z;
    double du = gain_.row(0).dot(deviation);
    if (!std::isfinite(du)) return false;
    u_out = z(2) + du;  // z(2) holds u_{k-1}
    return true;
}

KalmanFilter::KalmanFilter(const DiscretePlant& nominal, const KfConfig& cfg)
    : A_(nominal.A), b_(nominal.b), c_(nominal.c), r_meas_(cfg.r_meas) {
    Q_ = cfg.q_process * Eigen::Matrix2d::Identity();
    x_.setZero();
    P_.setIdentity();
}

void KalmanFilter::predict(double u_delayed) {
    x_ = A_ * x_ + b_ * u_delayed;
    P_ = A_ * P_ * A_.transpose() + Q_;
    P_ = 0.5 * (P_ + P_.transpose().eval());
}

bool KalmanFilter::update(double y) {
    const double S = (c_ * P_ * c_.transpose())(0) + r_meas_;
    if (!(S > 1e-300) || !std::isfinite(S)) return false;
    Eigen::Vector2d K = P_ * c_.transpose() / S;
    x_ += K * (y - (c_ * x_)(0));
    Eigen::Matrix2d IKc = Eigen::Matrix2d::Identity() - K * c_;
    P_ = IKc * P_ * IKc.transpose() + K * r_meas_ * K.transpose();  // Joseph form
    P_ = 0.5 * (P_ + P_.transpose().eval());
    return P_.allFinite() && x_.allFinite();
}

}  // namespace mpctune
