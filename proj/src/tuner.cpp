#include "mpctune/tuner.hpp"

#include "mpctune/rng.hpp"
#include "mpctune/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mpctune {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Vector2d context_vec(const Context& c) {
    return Eigen::Vector2d(c.stiffness_scale, c.damping_scale);
}

}  // namespace

int tuning_dim(const TunerOptions& opts) { return opts.two_dim_benchmark ? 2 : 4; }

Eigen::VectorXd tuning_lower(const TunerOptions& opts) {
    const auto& b = opts.bounds;
    if (opts.two_dim_benchmark)
        return Eigen::Vector2d(b.hu_min, b.lambda_mpc_min);
    Eigen::VectorXd lo(4);
    lo << b.hu_min, b.hp_min, b.lambda_mpc_min, b.lambda_kf_min;
    return lo;
}

Eigen::VectorXd tuning_upper(const TunerOptions& opts) {
    const auto& b = opts.bounds;
    if (opts.two_dim_benchmark)
        return Eigen::Vector2d(b.hu_max, b.lambda_mpc_max);
    Eigen::VectorXd hi(4);
    hi << b.hu_max, b.hp_max, b.lambda_mpc_max, b.lambda_kf_max;
    return hi;
}

std::vector<bool> tuning_integer_mask(const TunerOptions& opts) {
    if (opts.two_dim_benchmark) return {true, false};
    return {true, true, false, false};
}

ControllerParams decode_params(const TunerOptions& opts, const Eigen::VectorXd& x) {
    ControllerParams p;
    if (opts.two_dim_benchmark) {
        p.control_horizon = static_cast<int>(std::lround(x[0]));
        p.prediction_horizon = p.control_horizon;
        p.lambda_mpc = x[1];
        p.lambda_kf = opts.fixed_lambda_kf;
    } else {
        p.control_horizon = static_cast<int>(std::lround(x[0]));
        // H_p >= H_u enforced by clipping H_p up to H_u.
        p.prediction_horizon = std::max(static_cast<int>(std::lround(x[1])), p.control_horizon);
        p.lambda_mpc = x[2];
        p.lambda_kf = x[3];
    }
    p.prediction_horizon = std::min(p.prediction_horizon, opts.bounds.hp_max);
    return p;
}

Eigen::VectorXd encode_params(const TunerOptions& opts, const ControllerParams& p) {
    if (opts.two_dim_benchmark) return Eigen::Vector2d(p.control_horizon, p.lambda_mpc);
    Eigen::VectorXd x(4);
    x << p.control_horizon, p.prediction_horizon, p.lambda_mpc, p.lambda_kf;
    return x;
}

Stage2Result stage2_worst_context(const EpisodeFn& episode, const Stage2Options& opts,
                                  std::uint64_t seed) {
    SeedStream ss(seed);
    Stage2Result res;
    auto ctx_eng = make_engine(ss.derive("context"));

    Dataset data;
    data.reserve_dims(2, 0);

    // Initial batch: draws from the truncated normal.
    for (int i = 0; i < opts.n_init; ++i) {
        Context ctx = sample_context(opts.context_spec, ctx_eng);
        EpisodeOutcome out = episode(ctx, ss.derive("episode", static_cast<std::uint64_t>(i)));
        ++res.evaluations;
        if (out.failed) {
            res.failed = true;
            res.worst_overshoot = std::max(res.worst_overshoot, out.overshoot);
            return res;
        }
        res.init_samples.emplace_back(out.ite, out.step_time);
        res.worst_overshoot = std::max(res.worst_overshoot, out.overshoot);
        data.append(context_vec(ctx), out.overshoot, Eigen::VectorXd());
    }
    if (res.worst_overshoot > opts.overshoot_max) {
        res.early_stop = true;
        return res;
    }

    // Maximize overshoot over the context box with plain RI.
    BoStepConfig cfg;
    cfg.lower = opts.context_spec.lower;
    cfg.upper = opts.context_spec.upper;
    cfg.integer_mask = {false, false};
    cfg.maximize = true;
    cfg.use_classifiers = false;
    cfg.pso = opts.pso;
    cfg.gp_restarts = opts.gp_restarts;
    cfg.gp_max_iters = opts.gp_max_iters;

    while (res.evaluations < opts.budget) {
        // The init draws cluster near the context mean, so the fitted GP
        // knows nothing about the box boundary where the worst case
        // usually sits; a greedy RI chase of a mildly elevated sample can
        // then spend the whole budget on the wrong edge.  Force the first
        // and third BO steps to maximize posterior variance: with a
        // centered design these land on opposite corners, which brackets
        // every monotone trend across the box.
        int bo_index = res.evaluations - opts.n_init;
        cfg.pure_exploration = (bo_index == 0 || bo_index == 2);
        BoStepResult step = bo_step(data, cfg, ss.derive("bo", static_cast<std::uint64_t>(res.evaluations)));
        Context ctx{step.x_next[0], step.x_next[1]};
        EpisodeOutcome out =
            episode(ctx, ss.derive("episode", static_cast<std::uint64_t>(res.evaluations)));
        ++res.evaluations;
        if (out.failed) {
            res.failed = true;
            res.worst_overshoot = std::max(res.worst_overshoot, out.overshoot);
            return res;
        }
        data.append(context_vec(ctx), out.overshoot, Eigen::VectorXd());
        res.worst_overshoot = std::max(res.worst_overshoot, out.overshoot);
        if (out.overshoot > opts.overshoot_max) {
            res.early_stop = true;
            return res;
        }
    }
    return res;
}

ValidationResult validate(const TunerOptions& opts, const ControllerParams& params, int n_draws,
                          std::uint64_t seed) {
    SeedStream ss(seed);
    ValidationResult v;
    auto ctx_eng = make_engine(ss.derive("validation-context"));
    double sum = 0.0;
    int ok = 0;
    for (int i = 0; i < n_draws; ++i) {
        Context ctx = sample_context(opts.context_spec, ctx_eng);
        EpisodeOutcome out = run_episode(opts.episode, params, ctx,
                                         ss.derive("validation-noise", static_cast<std::uint64_t>(i)));
        if (out.failed) {
            ++v.failures;
            continue;
        }
        sum += out.ite;
        ++ok;
        v.max_overshoot = std::max(v.max_overshoot, out.overshoot);
        v.max_step_time = std::max(v.max_step_time, out.step_time);
    }
    v.objective = ok > 0 ? sum / ok : kInf;

    bool time_ok;
    if (opts.episode.timing.mode == TimingMode::synthetic) {
        const auto& t = opts.episode.timing;
        double base = t.c0 + t.c1 * std::pow(static_cast<double>(params.control_horizon), 3);
        time_ok = base + opts.time_z_level * t.jitter_std < opts.time_max;
    } else {
        time_ok = v.max_step_time < opts.time_max;
    }
    v.feasible = v.failures == 0 && v.max_overshoot < opts.overshoot_max && time_ok;
    return v;
}

namespace {

// The surrogates model log ITE and log(1 + overshoot): both responses
// span several decades near divergence, and on the raw scale a handful
// of huge samples inflate the fitted signal variance until EI and
// p_feas are meaningless everywhere else.  Both maps are monotone, so
// optima and constraint boundaries are unchanged.
double ite_to_target(double ite) { return std::log(std::max(ite, 1e-12)); }
double target_to_ite(double t) { return std::exp(t); }
double os_to_target(double os) { return std::log1p(os); }

// Append one record's observations to the shared dataset.  Non-failed
// records contribute one row per (ite, time) sample plus one row holding
// the worst-case overshoot; failed records a single flagged row.
void append_record_rows(Dataset& data, const Eigen::VectorXd& x, const Stage2Result& s2,
                        std::vector<int>& rows_out) {
    if (s2.failed) {
        // The overshoot observed before the abort still bounds the worst
        // case from below, so it feeds the constraint column even though
        // the objective sample is discarded.
        double os = s2.worst_overshoot > 0.0 ? os_to_target(s2.worst_overshoot) : kNaN;
        rows_out.push_back(data.size());
        data.append(x, kNaN, Eigen::Vector2d(kNaN, os), true);
        return;
    }
    for (const auto& [ite, t] : s2.init_samples) {
        rows_out.push_back(data.size());
        data.append(x, ite_to_target(ite), Eigen::Vector2d(t, kNaN));
    }
    rows_out.push_back(data.size());
    data.append(x, kNaN, Eigen::Vector2d(kNaN, os_to_target(s2.worst_overshoot)));
}

bool record_time_ok(const TunerOptions& o, const TunerRecord& rec) {
    if (o.episode.timing.mode == TimingMode::synthetic) {
        const auto& t = o.episode.timing;
        double base = t.c0 + t.c1 * std::pow(static_cast<double>(rec.params.control_horizon), 3);
        return base + o.time_z_level * t.jitter_std < o.time_max;
    }
    double worst = 0.0;
    for (const auto& [ite, t] : rec.stage2.init_samples) worst = std::max(worst, t);
    return worst < o.time_max;
}

bool observed_feasible(const TunerOptions& o, const TunerRecord& rec) {
    return !rec.stage2.failed && !rec.stage2.early_stop &&
           rec.stage2.worst_overshoot < o.overshoot_max && record_time_ok(o, rec);
}

std::vector<ConstraintSpec> constraint_specs(const TunerOptions& o) {
    // Column 0: step time (predictive variance, z-level margin).
    // Column 1: worst-case overshoot (latent variance).
    ConstraintSpec time_spec{o.time_max, o.time_z_level, true};
    ConstraintSpec os_spec{os_to_target(o.overshoot_max), 0.0, false};
    return {time_spec, os_spec};
}

Eigen::VectorXd lengthscale_min_vec(const TunerOptions& o) {
    const int m = tuning_dim(o);
    Eigen::VectorXd lmin = Eigen::VectorXd::Constant(m, 0.05);
    lmin[0] = o.horizon_lengthscale_min;          // H_u
    if (!o.two_dim_benchmark) lmin[1] = o.horizon_lengthscale_min;  // H_p
    return lmin;
}

class Stage1Engine {
public:
    Stage1Engine(const TunerOptions& o, std::uint64_t seed) : o_(o), ss_(seed) {
        data_.reserve_dims(tuning_dim(o), 2);
        norm_ = BoxNormalizer{tuning_lower(o), tuning_upper(o)};
        rnd_eng_ = make_engine(ss_.derive("random-search"));
        dup_eng_ = make_engine(ss_.derive("duplicate-fallback"));
    }

    Stage1Result run() {
        const int m = tuning_dim(o_);
        const int n_init = std::min(o_.n_init, o_.budget);
        Eigen::MatrixXd init = latin_hypercube(n_init, tuning_lower(o_), tuning_upper(o_),
                                               tuning_integer_mask(o_), ss_.derive("lhs"));
        for (int i = 0; i < n_init; ++i)
            evaluate(init.row(i).transpose(), true, AcquisitionBreakdown{});

        while (static_cast<int>(records_.size()) < o_.budget) {
            auto [x, acq] = propose();
            evaluate(x, false, acq);
        }
        (void)m;
        return finalize();
    }

private:
    std::pair<Eigen::VectorXd, AcquisitionBreakdown> propose() {
        const std::uint64_t iter = static_cast<std::uint64_t>(records_.size());
        if (o_.algorithm == Algorithm::RandomSearch) return {random_point(rnd_eng_), {}};

        BoStepConfig cfg;
        cfg.lower = tuning_lower(o_);
        cfg.upper = tuning_upper(o_);
        cfg.integer_mask = tuning_integer_mask(o_);
        cfg.lengthscale_min = lengthscale_min_vec(o_);
        cfg.constraints = constraint_specs(o_);
        cfg.use_classifiers = o_.algorithm != Algorithm::BoNoOutlier;
        cfg.knn_k = o_.knn_k;
        cfg.knn_lengthscale = o_.knn_lengthscale;
        cfg.pso = o_.pso;
        cfg.gp_restarts = o_.gp_restarts;
        cfg.gp_max_iters = o_.gp_max_iters;
        const bool full_refit =
            o_.gp_refit_full_every <= 1 || iter % static_cast<std::uint64_t>(o_.gp_refit_full_every) == 0;
        if (warm_ && !full_refit) {
            cfg.warm_start_objective = *warm_;
            cfg.gp_restarts = std::min(cfg.gp_restarts, 2);
        }

        BoStepResult res = bo_step(data_, cfg, ss_.derive("bo", iter));
        warm_ = res.objective_hyperparams;

        // Integer snapping can land on an already-evaluated point; the
        // acquisition is zero there, so fall back to a random draw.
        for (const auto& r : records_)
            if ((encode_params(o_, r.params) - res.x_next).lpNorm<Eigen::Infinity>() < 1e-9)
                return {random_point(dup_eng_), res.breakdown};
        return {res.x_next, res.breakdown};
    }

    Eigen::VectorXd random_point(std::mt19937_64& eng) {
        const Eigen::VectorXd lo = tuning_lower(o_), hi = tuning_upper(o_);
        const auto mask = tuning_integer_mask(o_);
        Eigen::VectorXd x(lo.size());
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int j = 0; j < lo.size(); ++j) {
            x[j] = lo[j] + u01(eng) * (hi[j] - lo[j]);
            if (mask[static_cast<std::size_t>(j)])
                x[j] = std::min(std::max(std::round(x[j]), lo[j]), hi[j]);
        }
        return x;
    }

    void evaluate(const Eigen::VectorXd& x_raw, bool from_init, const AcquisitionBreakdown& acq) {
        const std::uint64_t idx = static_cast<std::uint64_t>(records_.size());
        TunerRecord rec;
        rec.params = decode_params(o_, x_raw);
        rec.from_initial_design = from_init;
        rec.acq = acq;
        const Eigen::VectorXd x = encode_params(o_, rec.params);

        if (o_.algorithm == Algorithm::NominalBo) {
            Context nominal{o_.context_spec.mean[0], o_.context_spec.mean[1]};
            EpisodeOutcome out =
                run_episode(o_.episode, rec.params, nominal, ss_.derive("nominal-episode", idx));
            ++episodes_;
            rec.stage2.evaluations = 1;
            rec.stage2.failed = out.failed;
            if (!out.failed) {
                rec.stage2.init_samples.emplace_back(out.ite, out.step_time);
                rec.stage2.worst_overshoot = out.overshoot;
                rec.stage2.early_stop = out.overshoot > o_.overshoot_max;
            }
        } else {
            const ControllerParams params = rec.params;
            EpisodeFn fn = [&](const Context& ctx, std::uint64_t s) {
                ++episodes_;
                return run_episode(o_.episode, params, ctx, s);
            };
            Stage2Options s2o = o_.stage2;
            s2o.context_spec = o_.context_spec;
            s2o.overshoot_max = o_.overshoot_max;
            rec.stage2 = stage2_worst_context(fn, s2o, ss_.derive("stage2", idx));
        }

        std::vector<int> rows;
        append_record_rows(data_, x, rec.stage2, rows);
        record_rows_.push_back(rows);
        if (rec.stage2.failed) {
            rec.mean_ite = kNaN;
        } else {
            double s = 0.0;
            for (const auto& [ite, t] : rec.stage2.init_samples) s += ite;
            rec.mean_ite = s / static_cast<double>(rec.stage2.init_samples.size());
        }
        records_.push_back(rec);

        if (o_.outlier_detection) refresh_outlier_labels(idx);
        update_incumbent(idx);
    }

    void refresh_outlier_labels(std::uint64_t idx) {
        std::vector<int> live;
        for (int i = 0; i < static_cast<int>(records_.size()); ++i)
            if (!records_[static_cast<std::size_t>(i)].stage2.failed) live.push_back(i);
        if (static_cast<int>(live.size()) < 5) return;

        Eigen::MatrixXd Xr(static_cast<int>(live.size()), tuning_dim(o_));
        Eigen::VectorXd Yr(static_cast<int>(live.size()));
        for (std::size_t r = 0; r < live.size(); ++r) {
            Xr.row(static_cast<int>(r)) =
                norm_.normalize(encode_params(o_, records_[static_cast<std::size_t>(live[r])].params))
                    .transpose();
            Yr[static_cast<int>(r)] =
                ite_to_target(records_[static_cast<std::size_t>(live[r])].mean_ite);
        }
        OutlierLabels labels = detect_outliers(Xr, Yr, o_.outlier_threshold_z, o_.student_t_nu,
                                               ss_.derive("outlier-detect", idx),
                                               lengthscale_min_vec(o_));
        if (labels.fallback) return;
        for (std::size_t r = 0; r < live.size(); ++r) {
            bool flag = labels.flags[r];
            records_[static_cast<std::size_t>(live[r])].outlier = flag;
            for (int row : record_rows_[static_cast<std::size_t>(live[r])])
                data_.outlier[static_cast<std::size_t>(row)] = flag;
        }
    }

    void update_incumbent(std::uint64_t idx) {
        TunerRecord& rec = records_.back();
        if (observed_feasible(o_, rec) && rec.mean_ite < inc_estimate_) {
            inc_estimate_ = rec.mean_ite;
            inc_index_ = static_cast<int>(idx);
            if (o_.validate_incumbents) {
                ValidationResult v =
                    validate(o_, rec.params, o_.validation_draws, ss_.derive("incumbent-val", idx));
                validation_episodes_ += o_.validation_draws;
                inc_validation_ = std::min(inc_validation_, v.objective);
            }
        }
        rec.incumbent_estimate = inc_estimate_;
        rec.incumbent_validation = inc_validation_;
    }

    Stage1Result finalize() {
        Stage1Result out;
        out.history = records_;
        out.episode_count = episodes_;
        out.validation_episodes = validation_episodes_;

        std::vector<int> feasible;
        for (int i = 0; i < static_cast<int>(records_.size()); ++i)
            if (observed_feasible(o_, records_[static_cast<std::size_t>(i)])) feasible.push_back(i);
        // A record the detector currently flags has an untrusted objective;
        // keep it out of the final selection unless nothing else is left.
        std::vector<int> trusted;
        for (int i : feasible)
            if (!records_[static_cast<std::size_t>(i)].outlier) trusted.push_back(i);
        if (!trusted.empty()) feasible = trusted;

        GpFitOptions fo;
        fo.restarts = o_.gp_restarts;
        fo.max_iters = o_.gp_max_iters;
        fo.lengthscale_min = lengthscale_min_vec(o_);
        fo.seed = ss_.derive("final-fit");

        int pick = -1;
        if (!feasible.empty()) {
            out.best_feasible = true;
            pick = feasible.front();
            // Select by reinterpolated objective mean when a model is available.
            std::vector<int> clean;
            for (int i = 0; i < data_.size(); ++i)
                if (!data_.failed[static_cast<std::size_t>(i)] && std::isfinite(data_.y[i]) &&
                    !data_.outlier[static_cast<std::size_t>(i)])
                    clean.push_back(i);
            if (clean.size() >= 2) {
                Eigen::MatrixXd Xc(static_cast<int>(clean.size()), tuning_dim(o_));
                Eigen::VectorXd yc(static_cast<int>(clean.size()));
                for (std::size_t r = 0; r < clean.size(); ++r) {
                    Xc.row(static_cast<int>(r)) =
                        norm_.normalize(data_.X.row(clean[r]).transpose()).transpose();
                    yc[static_cast<int>(r)] = data_.y[clean[r]];
                }
                try {
                    GpModel ri = reinterpolate(GpModel::fit(Xc, yc, fo));
                    double best_mean = kInf;
                    for (int i : feasible) {
                        Eigen::VectorXd z = norm_.normalize(
                            encode_params(o_, records_[static_cast<std::size_t>(i)].params));
                        double mu = ri.predict(z).mean;
                        if (mu < best_mean) {
                            best_mean = mu;
                            pick = i;
                        }
                    }
                } catch (const std::exception&) {
                    for (int i : feasible)
                        if (records_[static_cast<std::size_t>(i)].mean_ite <
                            records_[static_cast<std::size_t>(pick)].mean_ite)
                            pick = i;
                }
            }
        } else {
            // No feasible point: report the best-by-p_feas point, flagged infeasible.
            out.best_feasible = false;
            double best_p = -1.0;
            for (int i = 0; i < static_cast<int>(records_.size()); ++i) {
                const auto& r = records_[static_cast<std::size_t>(i)];
                if (r.stage2.failed) continue;
                double margin = o_.overshoot_max - r.stage2.worst_overshoot;
                if (pick < 0 || margin > best_p) {
                    best_p = margin;
                    pick = i;
                }
            }
            if (pick < 0) pick = 0;
        }

        out.best = records_[static_cast<std::size_t>(pick)].params;
        out.best_train_estimate = records_[static_cast<std::size_t>(pick)].mean_ite;
        return out;
    }

    const TunerOptions& o_;
    SeedStream ss_;
    Dataset data_;
    BoxNormalizer norm_;
    std::vector<TunerRecord> records_;
    std::vector<std::vector<int>> record_rows_;
    std::mt19937_64 rnd_eng_, dup_eng_;
    std::optional<GpHyperparams> warm_;
    long episodes_ = 0, validation_episodes_ = 0;
    double inc_estimate_ = kInf, inc_validation_ = kInf;
    int inc_index_ = -1;
};

}  // namespace

Stage1Result stage1_optimize(const TunerOptions& opts, std::uint64_t seed) {
    Stage1Engine engine(opts, seed);
    return engine.run();
}

BenchmarkRunResult run_benchmark_algorithm(Algorithm algo, const TunerOptions& opts,
                                           std::uint64_t seed) {
    TunerOptions o = opts;
    o.algorithm = algo;
    if (algo == Algorithm::BoNoOutlier) o.outlier_detection = false;

    BenchmarkRunResult res;
    res.algorithm = algo;
    res.seed = seed;
    res.stage1 = stage1_optimize(o, seed);
    res.validation = validate(o, res.stage1.best, o.validation_draws,
                              SeedStream(seed).derive("final-validation"));
    res.objective_gap = res.validation.objective - res.stage1.best_train_estimate;
    return res;
}

std::vector<GridCell> export_grid(const TunerOptions& opts, const Stage1Result& result, int dim0,
                                  int dim1, int resolution, std::uint64_t seed) {
    const int m = tuning_dim(opts);
    BoxNormalizer norm{tuning_lower(opts), tuning_upper(opts)};

    // Rebuild the final dataset from the history.
    Dataset data;
    data.reserve_dims(m, 2);
    for (const auto& rec : result.history) {
        std::vector<int> rows;
        append_record_rows(data, encode_params(opts, rec.params), rec.stage2, rows);
        for (int row : rows) data.outlier[static_cast<std::size_t>(row)] = rec.outlier;
    }

    GpFitOptions fo;
    fo.restarts = opts.gp_restarts;
    fo.max_iters = opts.gp_max_iters;
    fo.lengthscale_min = lengthscale_min_vec(opts);
    fo.seed = SeedStream(seed).derive("grid-fit");

    auto fit_rows = [&](bool include_failed, auto pred, auto getter) -> std::optional<GpModel> {
        std::vector<int> rows;
        for (int i = 0; i < data.size(); ++i)
            if ((include_failed || !data.failed[static_cast<std::size_t>(i)]) &&
                !data.outlier[static_cast<std::size_t>(i)] && pred(i))
                rows.push_back(i);
        if (rows.size() < 2) return std::nullopt;
        Eigen::MatrixXd Xs(static_cast<int>(rows.size()), m);
        Eigen::VectorXd ys(static_cast<int>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Xs.row(static_cast<int>(r)) = norm.normalize(data.X.row(rows[r]).transpose()).transpose();
            ys[static_cast<int>(r)] = getter(rows[r]);
        }
        return GpModel::fit(Xs, ys, fo);
    };

    auto objective = fit_rows(false, [&](int i) { return std::isfinite(data.y[i]); },
                              [&](int i) { return data.y[i]; });
    auto time_model = fit_rows(false, [&](int i) { return std::isfinite(data.G(i, 0)); },
                               [&](int i) { return data.G(i, 0); });
    auto os_model = fit_rows(true, [&](int i) { return std::isfinite(data.G(i, 1)); },
                             [&](int i) { return data.G(i, 1); });

    KnnClassifier out_clf(opts.knn_k, opts.knn_lengthscale);
    KnnClassifier fail_clf(opts.knn_k, opts.knn_lengthscale);
    for (const auto& rec : result.history) {
        Eigen::VectorXd z = norm.normalize(encode_params(opts, rec.params));
        fail_clf.add(z, rec.stage2.failed);
        if (!rec.stage2.failed) out_clf.add(z, rec.outlier);
    }

    const auto specs = constraint_specs(opts);
    const Eigen::VectorXd lo = tuning_lower(opts), hi = tuning_upper(opts);
    Eigen::VectorXd base = encode_params(opts, result.best);

    std::vector<GridCell> cells;
    cells.reserve(static_cast<std::size_t>(resolution) * resolution);
    for (int i = 0; i < resolution; ++i) {
        for (int j = 0; j < resolution; ++j) {
            Eigen::VectorXd x = base;
            x[dim0] = resolution == 1 ? base[dim0]
                                      : lo[dim0] + (hi[dim0] - lo[dim0]) * i / (resolution - 1.0);
            x[dim1] = resolution == 1 ? base[dim1]
                                      : lo[dim1] + (hi[dim1] - lo[dim1]) * j / (resolution - 1.0);
            Eigen::VectorXd z = norm.normalize(x);
            GridCell cell;
            cell.x0 = x[dim0];
            cell.x1 = x[dim1];
            if (objective) cell.objective_mean = target_to_ite(objective->predict(z).mean);
            std::vector<const GpModel*> cmodels;
            std::vector<ConstraintSpec> cspecs;
            if (time_model) {
                cmodels.push_back(&*time_model);
                cspecs.push_back(specs[0]);
            }
            if (os_model) {
                cmodels.push_back(&*os_model);
                cspecs.push_back(specs[1]);
            }
            cell.p_feas = cmodels.empty() ? 1.0 : prob_feasibility(cmodels, cspecs, z);
            cell.p_out = out_clf.probability(z);
            cell.p_fail = fail_clf.probability(z);
            if (time_model) cell.time_mean = time_model->predict(z).mean;
            const double hu = x[0];  // H_u is dimension 0 in both encodings
            cell.time_synthetic =
                opts.episode.timing.c0 + opts.episode.timing.c1 * hu * hu * hu;
            cells.push_back(cell);
        }
    }
    return cells;
}

}  // namespace mpctune
