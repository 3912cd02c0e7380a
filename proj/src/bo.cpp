#include "mpctune/bo.hpp"

#include "mpctune/rng.hpp"
#include "mpctune/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mpctune {

double expected_improvement(double mu, double s, double best) {
    if (s <= 0.0) return std::max(0.0, best - mu);
    const double z = (best - mu) / s;
    return (best - mu) * normal_cdf(z) + s * normal_pdf(z);
}

GpModel reinterpolate(const GpModel& model) {
    const Eigen::MatrixXd& X = model.inputs();
    const int n = model.size();
    Eigen::VectorXd means = model.training_means();

    // Collapse duplicate inputs to a single row.
    std::vector<int> keep;
    for (int i = 0; i < n; ++i) {
        bool dup = false;
        for (int j : keep)
            if ((X.row(i) - X.row(j)).lpNorm<Eigen::Infinity>() < 1e-12) {
                dup = true;
                break;
            }
        if (!dup) keep.push_back(i);
    }
    Eigen::MatrixXd Xu(static_cast<int>(keep.size()), X.cols());
    Eigen::VectorXd mu(static_cast<int>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
        Xu.row(static_cast<int>(r)) = X.row(keep[r]);
        mu[static_cast<int>(r)] = means[keep[r]];
    }

    GpHyperparams hp = model.hyperparams();
    hp.sigma_n2 = 0.0;
    return GpModel::with_hyperparams(Xu, mu, hp, model.y_shift(), model.y_scale());
}

double prob_feasibility(const std::vector<const GpModel*>& models,
                        const std::vector<ConstraintSpec>& specs, const Eigen::VectorXd& x) {
    double p = 1.0;
    for (std::size_t c = 0; c < models.size(); ++c) {
        const auto pred = models[c]->predict(x);
        const auto& spec = specs[c];
        double var = spec.use_predictive_variance ? pred.var_pred : pred.var_latent;
        double s = std::sqrt(std::max(0.0, var));
        if (s <= 0.0) {
            p *= (pred.mean < spec.limit) ? 1.0 : 0.0;
        } else {
            p *= normal_cdf((spec.limit - pred.mean) / s - spec.z_level);
        }
    }
    return p;
}

void KnnClassifier::add(const Eigen::VectorXd& x, bool label) {
    points_.push_back(x);
    labels_.push_back(label ? 1 : 0);
    if (label) ++positives_;
}

double KnnClassifier::probability(const Eigen::VectorXd& x) const {
    if (points_.empty() || positives_ == 0) return 0.0;
    const int n = static_cast<int>(points_.size());
    const int k = std::min(k_, n);

    std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double sq = (points_[static_cast<std::size_t>(i)] - x).squaredNorm();
        double kse = std::exp(-0.5 * sq / (lengthscale_ * lengthscale_));
        double d = std::sqrt(std::max(0.0, 2.0 - 2.0 * kse));
        dist[static_cast<std::size_t>(i)] = {d, i};
    }
    std::sort(dist.begin(), dist.end());

    // Exact match dominates: return its label.
    if (dist[0].first < 1e-12)
        return labels_[static_cast<std::size_t>(dist[0].second)] ? 1.0 : 0.0;

    double wsum = 0.0, wpos = 0.0;
    for (int i = 0; i < k; ++i) {
        double w = 1.0 / (dist[static_cast<std::size_t>(i)].first *
                          dist[static_cast<std::size_t>(i)].first);
        wsum += w;
        if (labels_[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)].second)]) wpos += w;
    }
    return wpos / wsum;
}

double acquisition(const AcquisitionContext& ctx, const Eigen::VectorXd& x,
                   AcquisitionBreakdown* breakdown) {
    AcquisitionBreakdown b;
    const auto pred = ctx.objective_ri->predict(x);
    const double s = std::sqrt(std::max(0.0, pred.var_latent));
    b.ri = ctx.maximize ? expected_improvement(-pred.mean, s, -ctx.best)
                        : expected_improvement(pred.mean, s, ctx.best);
    b.p_feas = ctx.constraint_models.empty()
                   ? 1.0
                   : prob_feasibility(ctx.constraint_models, ctx.constraint_specs, x);
    b.p_out = ctx.outlier ? ctx.outlier->probability(x) : 0.0;
    b.p_fail = ctx.failure ? ctx.failure->probability(x) : 0.0;
    b.alpha = b.ri * b.p_feas * (1.0 - b.p_out) * (1.0 - b.p_fail);
    if (breakdown) *breakdown = b;
    return b.alpha;
}

Eigen::VectorXd pso_maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const std::vector<bool>& integer_mask, const PsoOptions& opts,
                             std::uint64_t seed) {
    const int m = static_cast<int>(lower.size());
    auto eng = make_engine(mix64(seed ^ 0x70736fULL));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    auto snap = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd z = x;
        for (int j = 0; j < m; ++j) {
            z[j] = std::min(std::max(z[j], lower[j]), upper[j]);
            if (j < static_cast<int>(integer_mask.size()) && integer_mask[j])
                z[j] = std::min(std::max(std::round(z[j]), lower[j]), upper[j]);
        }
        return z;
    };

    Eigen::MatrixXd pos =
        latin_hypercube(opts.swarm_size, lower, upper, {}, mix64(seed ^ 0x696e6974ULL));
    Eigen::MatrixXd vel = Eigen::MatrixXd::Zero(opts.swarm_size, m);
    Eigen::MatrixXd pbest = pos;
    Eigen::VectorXd pbest_val(opts.swarm_size);
    int gbest = 0;
    for (int i = 0; i < opts.swarm_size; ++i) {
        pbest_val[i] = f(snap(pos.row(i).transpose()));
        if (pbest_val[i] > pbest_val[gbest]) gbest = i;
    }

    for (int it = 0; it < opts.iters; ++it) {
        for (int i = 0; i < opts.swarm_size; ++i) {
            for (int j = 0; j < m; ++j) {
                const double r1 = u01(eng), r2 = u01(eng);
                vel(i, j) = opts.inertia * vel(i, j) +
                            opts.cognitive * r1 * (pbest(i, j) - pos(i, j)) +
                            opts.social * r2 * (pbest(gbest, j) - pos(i, j));
                pos(i, j) += vel(i, j);
                pos(i, j) = std::min(std::max(pos(i, j), lower[j]), upper[j]);
            }
            const double v = f(snap(pos.row(i).transpose()));
            if (v > pbest_val[i]) {
                pbest_val[i] = v;
                pbest.row(i) = pos.row(i);
            }
        }
        for (int i = 0; i < opts.swarm_size; ++i)
            if (pbest_val[i] > pbest_val[gbest]) gbest = i;
    }
    return snap(pbest.row(gbest).transpose());
}

void Dataset::reserve_dims(int m, int n_constraints) {
    X.resize(0, m);
    y.resize(0);
    G.resize(0, n_constraints);
}

void Dataset::append(const Eigen::VectorXd& x, double y_val, const Eigen::VectorXd& g_vals,
                     bool is_failed) {
    const int n = size();
    X.conservativeResize(n + 1, x.size());
    X.row(n) = x;
    y.conservativeResize(n + 1);
    y[n] = y_val;
    G.conservativeResize(n + 1, g_vals.size());
    G.row(n) = g_vals;
    outlier.push_back(false);
    failed.push_back(is_failed);
}

BoStepResult bo_step(const Dataset& data, const BoStepConfig& cfg, std::uint64_t seed) {
    const int m = static_cast<int>(cfg.lower.size());
    BoxNormalizer norm{cfg.lower, cfg.upper};
    BoStepResult res;

    // Cleaned objective rows: observed, not flagged.
    std::vector<int> clean;
    std::vector<int> raw;  // any observed objective row
    for (int i = 0; i < data.size(); ++i) {
        if (data.failed[static_cast<std::size_t>(i)] || !std::isfinite(data.y[i])) continue;
        raw.push_back(i);
        if (!data.outlier[static_cast<std::size_t>(i)]) clean.push_back(i);
    }

    auto gather = [&](const std::vector<int>& rows, auto getter) {
        Eigen::MatrixXd Xs(static_cast<int>(rows.size()), m);
        Eigen::VectorXd ys(static_cast<int>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Xs.row(static_cast<int>(r)) =
                norm.normalize(data.X.row(rows[r]).transpose()).transpose();
            ys[static_cast<int>(r)] = getter(rows[r]);
        }
        return std::pair{Xs, ys};
    };

    GpFitOptions fit_opts;
    fit_opts.restarts = cfg.gp_restarts;
    fit_opts.max_iters = cfg.gp_max_iters;
    fit_opts.lengthscale_min = cfg.lengthscale_min;
    fit_opts.seed = mix64(seed ^ 0x6f626aULL);
    fit_opts.warm_start = cfg.warm_start_objective;

    auto pso_seed = mix64(seed ^ 0x616371ULL);
    Eigen::VectorXd unit_lo = Eigen::VectorXd::Zero(m), unit_hi = Eigen::VectorXd::Ones(m);

    // Integer handling happens in raw coordinates: wrap the normalized
    // acquisition argument back to the raw box for snapping.
    auto run_pso = [&](const std::function<double(const Eigen::VectorXd&)>& f_raw) {
        return pso_maximize(
            [&](const Eigen::VectorXd& x_raw) { return f_raw(x_raw); }, cfg.lower, cfg.upper,
            cfg.integer_mask, cfg.pso, pso_seed);
    };

    if (clean.size() < 2) {
        // Everything flagged (or nearly empty): pure exploration on the
        // raw observations if possible, else a seeded LHS point.
        if (raw.size() >= 2) {
            auto [Xs, ys] = gather(raw, [&](int i) { return data.y[i]; });
            GpModel g = GpModel::fit(Xs, ys, fit_opts);
            res.x_next = run_pso([&](const Eigen::VectorXd& x_raw) {
                return g.predict(norm.normalize(x_raw)).var_latent;
            });
            res.objective_hyperparams = g.hyperparams();
        } else {
            res.x_next = latin_hypercube(1, cfg.lower, cfg.upper, cfg.integer_mask,
                                         mix64(seed ^ 0x66616c6cULL))
                             .row(0)
                             .transpose();
        }
        res.exploration_fallback = true;
        return res;
    }

    auto [Xo, yo] = gather(clean, [&](int i) { return data.y[i]; });
    GpModel objective = GpModel::fit(Xo, yo, fit_opts);

    if (cfg.pure_exploration) {
        res.x_next = run_pso([&](const Eigen::VectorXd& x_raw) {
            return objective.predict(norm.normalize(x_raw)).var_latent;
        });
        res.objective_hyperparams = objective.hyperparams();
        res.exploration_fallback = true;
        return res;
    }
    GpModel ri = reinterpolate(objective);
    Eigen::VectorXd ri_means = ri.training_means();
    double best = cfg.maximize ? ri_means.maxCoeff() : ri_means.minCoeff();

    std::vector<GpModel> constraint_models;
    std::vector<const GpModel*> constraint_ptrs;
    std::vector<ConstraintSpec> active_specs;
    for (int c = 0; c < static_cast<int>(cfg.constraints.size()); ++c) {
        // Constraint observations live on their own rows (objective value
        // NaN) and may come from failed runs, so gather independently of
        // the objective row set.
        std::vector<int> rows;
        for (int i = 0; i < data.size(); ++i)
            if (c < data.G.cols() && !data.outlier[static_cast<std::size_t>(i)] &&
                std::isfinite(data.G(i, c)))
                rows.push_back(i);
        if (rows.size() < 2) continue;
        auto [Xc, yc] = gather(rows, [&](int i) { return data.G(i, c); });
        GpFitOptions copts = fit_opts;
        copts.seed = mix64(seed ^ (0x636f6e00ULL + static_cast<std::uint64_t>(c)));
        copts.warm_start.reset();
        constraint_models.push_back(GpModel::fit(Xc, yc, copts));
        active_specs.push_back(cfg.constraints[static_cast<std::size_t>(c)]);
    }
    for (const auto& gm : constraint_models) constraint_ptrs.push_back(&gm);

    KnnClassifier out_clf(cfg.knn_k, cfg.knn_lengthscale);
    KnnClassifier fail_clf(cfg.knn_k, cfg.knn_lengthscale);
    if (cfg.use_classifiers) {
        for (int i = 0; i < data.size(); ++i) {
            Eigen::VectorXd z = norm.normalize(data.X.row(i).transpose());
            fail_clf.add(z, data.failed[static_cast<std::size_t>(i)]);
            if (!data.failed[static_cast<std::size_t>(i)] && std::isfinite(data.y[i]))
                out_clf.add(z, data.outlier[static_cast<std::size_t>(i)]);
        }
    }

    AcquisitionContext ctx;
    ctx.objective_ri = &ri;
    ctx.best = best;
    ctx.maximize = cfg.maximize;
    ctx.constraint_models = constraint_ptrs;
    ctx.constraint_specs = active_specs;
    ctx.outlier = cfg.use_classifiers ? &out_clf : nullptr;
    ctx.failure = cfg.use_classifiers ? &fail_clf : nullptr;

    res.x_next = run_pso([&](const Eigen::VectorXd& x_raw) {
        return acquisition(ctx, norm.normalize(x_raw));
    });
    acquisition(ctx, norm.normalize(res.x_next), &res.breakdown);
    res.objective_hyperparams = objective.hyperparams();
    return res;
}

}  // namespace mpctune
