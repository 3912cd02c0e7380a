#include "mpctune/gp.hpp"

#include "mpctune/rng.hpp"
#include "mpctune/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mpctune {

namespace {

// Noise-free SE-ARD kernel matrix.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpHyperparams& hp) {
    const int n = static_cast<int>(X.rows());
    const int m = static_cast<int>(X.cols());
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i) {
        K(i, i) = hp.sigma_f2;
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int q = 0; q < m; ++q) {
                double dq = (X(i, q) - X(j, q)) / hp.lengthscales[q];
                s += dq * dq;
            }
            K(i, j) = K(j, i) = hp.sigma_f2 * std::exp(-0.5 * s);
        }
    }
    return K;
}

Eigen::VectorXd kernel_vector(const Eigen::MatrixXd& X, const GpHyperparams& hp,
                              const Eigen::VectorXd& x) {
    const int n = static_cast<int>(X.rows());
    const int m = static_cast<int>(X.cols());
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int q = 0; q < m; ++q) {
            double dq = (X(i, q) - x[q]) / hp.lengthscales[q];
            s += dq * dq;
        }
        k[i] = hp.sigma_f2 * std::exp(-0.5 * s);
    }
    return k;
}

// Cholesky of Kf + sigma_n2*I with escalating jitter; throws if the
// matrix stays indefinite past 1e-6 * sigma_f2.
Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& Kf, double sigma_n2,
                                             double sigma_f2) {
    const int n = static_cast<int>(Kf.rows());
    Eigen::MatrixXd K = Kf + sigma_n2 * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    double jitter = std::max(1e-12, 1e-10 * sigma_f2);
    while (llt.info() != Eigen::Success) {
        if (jitter > 1e-6 * sigma_f2)
            throw std::runtime_error("gp: kernel matrix indefinite after jitter");
        llt.compute(K + jitter * Eigen::MatrixXd::Identity(n, n));
        jitter *= 10.0;
    }
    return llt;
}

struct PackedBounds {
    Eigen::VectorXd lo, hi;
};

// Parameter packing: [mean, log sf2, log l_1..m, log sn2].
Eigen::VectorXd pack(const GpHyperparams& hp) {
    const int m = static_cast<int>(hp.lengthscales.size());
    Eigen::VectorXd p(m + 3);
    p[0] = hp.mean;
    p[1] = std::log(hp.sigma_f2);
    for (int i = 0; i < m; ++i) p[2 + i] = std::log(hp.lengthscales[i]);
    p[m + 2] = std::log(std::max(hp.sigma_n2, 1e-12));
    return p;
}

GpHyperparams unpack(const Eigen::VectorXd& p) {
    const int m = static_cast<int>(p.size()) - 3;
    GpHyperparams hp;
    hp.mean = p[0];
    hp.sigma_f2 = std::exp(p[1]);
    hp.lengthscales.resize(m);
    for (int i = 0; i < m; ++i) hp.lengthscales[i] = std::exp(p[2 + i]);
    hp.sigma_n2 = std::exp(p[m + 2]);
    return hp;
}

// Weakly informative log-normal hyperpriors (standardized target units).
double log_prior(const Eigen::VectorXd& p, double prior_lengthscale) {
    const int m = static_cast<int>(p.size()) - 3;
    double lp = -0.5 * p[0] * p[0];
    lp += -0.5 * p[1] * p[1] / (1.5 * 1.5);
    const double ll0 = std::log(prior_lengthscale);
    for (int i = 0; i < m; ++i) {
        double d = p[2 + i] - ll0;
        lp += -0.5 * d * d;
    }
    double dn = p[m + 2] - std::log(0.01);
    lp += -0.5 * dn * dn / (2.0 * 2.0);
    return lp;
}

Eigen::VectorXd log_prior_gradient(const Eigen::VectorXd& p, double prior_lengthscale) {
    const int m = static_cast<int>(p.size()) - 3;
    Eigen::VectorXd g(p.size());
    g[0] = -p[0];
    g[1] = -p[1] / (1.5 * 1.5);
    const double ll0 = std::log(prior_lengthscale);
    for (int i = 0; i < m; ++i) g[2 + i] = -(p[2 + i] - ll0);
    g[m + 2] = -(p[m + 2] - std::log(0.01)) / (2.0 * 2.0);
    return g;
}

}  // namespace

double gp_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const GpHyperparams& hp) {
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd Kf = kernel_matrix(X, hp);
    auto llt = chol_with_jitter(Kf, hp.sigma_n2, hp.sigma_f2);
    Eigen::VectorXd r = (y.array() - hp.mean).matrix();
    Eigen::VectorXd alpha = llt.solve(r);
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
    return -0.5 * r.dot(alpha) - logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd gp_log_marginal_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const GpHyperparams& hp) {
    const int n = static_cast<int>(X.rows());
    const int m = static_cast<int>(X.cols());
    Eigen::MatrixXd Kf = kernel_matrix(X, hp);
    auto llt = chol_with_jitter(Kf, hp.sigma_n2, hp.sigma_f2);
    Eigen::VectorXd r = (y.array() - hp.mean).matrix();
    Eigen::VectorXd alpha = llt.solve(r);
    Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd M = alpha * alpha.transpose() - Kinv;  // d lml = 0.5 tr(M dK)

    Eigen::VectorXd g(m + 3);
    g[0] = alpha.sum();
    g[1] = 0.5 * M.cwiseProduct(Kf).sum();  // dK/dlog sf2 = Kf
    for (int q = 0; q < m; ++q) {
        double acc = 0.0;
        const double l2 = hp.lengthscales[q] * hp.lengthscales[q];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double d = X(i, q) - X(j, q);
                acc += M(i, j) * Kf(i, j) * d * d / l2;  // dK/dlog l_q
            }
        g[2 + q] = 0.5 * acc;
    }
    g[m + 2] = 0.5 * hp.sigma_n2 * M.trace();  // dK/dlog sn2 = sn2 I
    return g;
}

GpModel GpModel::with_hyperparams(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const GpHyperparams& hp_std, double y_shift, double y_scale) {
    GpModel gm;
    gm.X_ = X;
    gm.y_raw_ = y;
    gm.y_shift_ = y_shift;
    gm.y_scale_ = y_scale;
    gm.y_std_ = ((y.array() - y_shift) / y_scale).matrix();
    gm.hp_ = hp_std;
    gm.factorize();
    return gm;
}

void GpModel::factorize() {
    Eigen::MatrixXd Kf = kernel_matrix(X_, hp_);
    llt_ = chol_with_jitter(Kf, hp_.sigma_n2, hp_.sigma_f2);
    alpha_ = llt_.solve((y_std_.array() - hp_.mean).matrix().eval());
}

GpModel GpModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const GpFitOptions& opts) {
    const int n = static_cast<int>(X.rows());
    const int m = static_cast<int>(X.cols());
    if (n < 2) throw std::invalid_argument("gp_fit: need at least 2 points");

    const double shift = y.mean();
    double sd = std::sqrt((y.array() - shift).square().sum() / n);
    const double scale = sd > 1e-12 ? sd : 1.0;
    Eigen::VectorXd ys = ((y.array() - shift) / scale).matrix();

    Eigen::VectorXd lmin = opts.lengthscale_min;
    if (lmin.size() != m) lmin = Eigen::VectorXd::Constant(m, 0.05);

    PackedBounds bounds;
    bounds.lo.resize(m + 3);
    bounds.hi.resize(m + 3);
    bounds.lo[0] = -5.0;
    bounds.hi[0] = 5.0;
    bounds.lo[1] = std::log(1e-6);
    bounds.hi[1] = std::log(1e3);
    for (int i = 0; i < m; ++i) {
        bounds.lo[2 + i] = std::log(lmin[i]);
        bounds.hi[2 + i] = std::log(opts.lengthscale_max);
    }
    bounds.lo[m + 2] = std::log(1e-8);
    bounds.hi[m + 2] = std::log(1.0);

    auto clamp = [&](Eigen::VectorXd& p) {
        for (int i = 0; i < p.size(); ++i) p[i] = std::min(std::max(p[i], bounds.lo[i]), bounds.hi[i]);
    };
    auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
        GpHyperparams hp = unpack(p);
        double v;
        try {
            v = gp_log_marginal(X, ys, hp) + log_prior(p, opts.prior_lengthscale);
            if (grad) *grad = gp_log_marginal_gradient(X, ys, hp) +
                              log_prior_gradient(p, opts.prior_lengthscale);
        } catch (const std::runtime_error&) {
            if (grad) grad->setZero(p.size());
            return -std::numeric_limits<double>::infinity();
        }
        return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    };

    // Restart pool: heuristic start, optional warm start, LHS draws.
    std::vector<Eigen::VectorXd> starts;
    {
        GpHyperparams h0;
        h0.mean = 0.0;
        h0.sigma_f2 = 1.0;
        h0.lengthscales = Eigen::VectorXd::Constant(m, opts.prior_lengthscale).cwiseMax(lmin);
        h0.sigma_n2 = 0.01;
        starts.push_back(pack(h0));
    }
    if (opts.warm_start) {
        Eigen::VectorXd p = pack(*opts.warm_start);
        clamp(p);
        starts.push_back(p);
    }
    auto eng = make_engine(mix64(opts.seed ^ 0x68797065726f7074ULL));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    while (static_cast<int>(starts.size()) < std::max(1, opts.restarts)) {
        Eigen::VectorXd p(m + 3);
        p[0] = -1.0 + 2.0 * u01(eng);
        p[1] = std::log(0.1) + (std::log(10.0) - std::log(0.1)) * u01(eng);
        for (int i = 0; i < m; ++i)
            p[2 + i] = bounds.lo[2 + i] +
                       (std::log(2.0) - bounds.lo[2 + i]) * u01(eng);
        p[m + 2] = std::log(1e-6) + (std::log(0.5) - std::log(1e-6)) * u01(eng);
        clamp(p);
        starts.push_back(p);
    }

    // iRprop- maximization per start.
    Eigen::VectorXd best_p;
    double best_v = -std::numeric_limits<double>::infinity();
    for (auto& p0 : starts) {
        Eigen::VectorXd p = p0;
        Eigen::VectorXd step = Eigen::VectorXd::Constant(p.size(), 0.1);
        Eigen::VectorXd g_prev = Eigen::VectorXd::Zero(p.size());
        Eigen::VectorXd g(p.size());
        double v = objective(p, &g);
        if (v > best_v) {
            best_v = v;
            best_p = p;
        }
        for (int it = 0; it < opts.max_iters; ++it) {
            for (int i = 0; i < p.size(); ++i) {
                double prod = g[i] * g_prev[i];
                if (prod > 0.0)
                    step[i] = std::min(step[i] * 1.2, 0.5);
                else if (prod < 0.0) {
                    step[i] = std::max(step[i] * 0.5, 1e-6);
                    g[i] = 0.0;
                }
                p[i] += (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0)) * step[i];
            }
            clamp(p);
            g_prev = g;
            v = objective(p, &g);
            if (v > best_v) {
                best_v = v;
                best_p = p;
            }
            if (g.lpNorm<Eigen::Infinity>() < 1e-9) break;
        }
    }
    if (!std::isfinite(best_v)) throw std::runtime_error("gp_fit: no feasible hyperparameters");

    return with_hyperparams(X, y, unpack(best_p), shift, scale);
}

GpModel::Prediction GpModel::predict(const Eigen::VectorXd& x) const {
    Eigen::VectorXd k = kernel_vector(X_, hp_, x);
    Prediction pr;
    pr.mean = y_shift_ + y_scale_ * (hp_.mean + k.dot(alpha_));
    Eigen::VectorXd v = llt_.matrixL().solve(k);
    double lat = hp_.sigma_f2 - v.squaredNorm();
    lat = std::max(0.0, lat);
    pr.var_latent = lat * y_scale_ * y_scale_;
    pr.var_pred = pr.var_latent + hp_.sigma_n2 * y_scale_ * y_scale_;
    return pr;
}

Eigen::VectorXd GpModel::training_means() const {
    Eigen::MatrixXd Kf = kernel_matrix(X_, hp_);
    Eigen::VectorXd mu_std = (hp_.mean + (Kf * alpha_).array()).matrix();
    return (y_shift_ + y_scale_ * mu_std.array()).matrix();
}

RobustFit robust_fit_student_t(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double nu,
                               std::uint64_t seed, const Eigen::VectorXd& lengthscale_min) {
    const int n = static_cast<int>(X.rows());
    RobustFit rf;
    rf.nu = nu;
    if (n < 5) return rf;

    GpFitOptions opts;
    opts.restarts = 3;
    opts.max_iters = 60;
    opts.seed = seed;
    opts.lengthscale_min = lengthscale_min;
    GpModel gauss;
    try {
        gauss = GpModel::fit(X, y, opts);
    } catch (const std::exception&) {
        return rf;
    }
    const GpHyperparams& hp = gauss.hyperparams();
    const double shift = gauss.y_shift();
    const double scale = gauss.y_scale();
    Eigen::VectorXd ys = ((y.array() - shift) / scale).matrix();

    // Robust observation scale from the MAD of the Gaussian-fit residuals.
    Eigen::VectorXd resid = ys - ((gauss.training_means().array() - shift) / scale).matrix();
    std::vector<double> a(resid.data(), resid.data() + n);
    std::nth_element(a.begin(), a.begin() + n / 2, a.end());
    double med = a[n / 2];
    for (auto& v : a) v = std::abs(v - med);
    std::nth_element(a.begin(), a.begin() + n / 2, a.end());
    double sigma = std::max(1.4826 * a[n / 2], 1e-4);
    rf.t_scale = sigma;

    Eigen::MatrixXd Kf = kernel_matrix(X, hp);
    // Start the IRLS from a robust constant rather than the Gaussian fit:
    // the Gaussian solution may already interpolate gross outliers, and the
    // reweighting never recovers from that fixed point.
    std::vector<double> ys_sorted(ys.data(), ys.data() + n);
    std::nth_element(ys_sorted.begin(), ys_sorted.begin() + n / 2, ys_sorted.end());
    Eigen::VectorXd f = Eigen::VectorXd::Constant(n, ys_sorted[n / 2]);
    Eigen::VectorXd var = Eigen::VectorXd::Constant(n, sigma * sigma);
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        for (int i = 0; i < n; ++i) {
            double r = ys[i] - f[i];
            double w = (nu + 1.0) / (nu + r * r / (sigma * sigma));
            var[i] = sigma * sigma / w;
        }
        Eigen::MatrixXd Kn = Kf;
        Kn.diagonal() += var;
        llt.compute(Kn);
        if (llt.info() != Eigen::Success) {
            Kn.diagonal().array() += 1e-8 * hp.sigma_f2;
            llt.compute(Kn);
            if (llt.info() != Eigen::Success) return rf;
        }
        Eigen::VectorXd f_new =
            (hp.mean + (Kf * llt.solve((ys.array() - hp.mean).matrix().eval())).array()).matrix();
        double delta = (f_new - f).lpNorm<Eigen::Infinity>();
        f = f_new;
        if (delta < 1e-8) {
            converged = true;
            break;
        }
    }
    rf.converged = converged;
    if (!converged) return rf;

    // Latent variance at each training input under the final weights.
    Eigen::MatrixXd V = llt.solve(Kf);
    rf.point_scale.resize(n);
    rf.point_loglik.resize(n);
    rf.latent_mean = (shift + scale * f.array()).matrix();
    for (int i = 0; i < n; ++i) {
        double lat = std::max(0.0, Kf(i, i) - Kf.col(i).dot(V.col(i)));
        double s = std::sqrt(sigma * sigma + lat);
        rf.point_scale[i] = s;
        rf.point_loglik[i] = student_t_logpdf(ys[i] - f[i], nu, s);
    }
    return rf;
}

OutlierLabels detect_outliers(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double threshold_z, double nu, std::uint64_t seed,
                              const Eigen::VectorXd& lengthscale_min) {
    const int n = static_cast<int>(X.rows());
    OutlierLabels labels;
    labels.flags.assign(static_cast<std::size_t>(n), false);
    RobustFit rf = robust_fit_student_t(X, y, nu, seed, lengthscale_min);
    if (!rf.converged) {
        labels.fallback = true;
        labels.loglik = Eigen::VectorXd::Zero(n);
        return labels;
    }
    labels.loglik = rf.point_loglik;
    for (int i = 0; i < n; ++i) {
        double thr = student_t_logpdf(threshold_z * rf.point_scale[i], nu, rf.point_scale[i]);
        if (rf.point_loglik[i] < thr) labels.flags[static_cast<std::size_t>(i)] = true;
    }
    return labels;
}

}  // namespace mpctune
