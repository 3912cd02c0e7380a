#include "mpctune/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mpctune {

using nlohmann::json;

ReferenceTrajectory TrajectorySpec::build(double Ts) const {
    if (type == "constant") return ReferenceTrajectory::constant(Ts, level, n);
    if (type == "trapezoid")
        return ReferenceTrajectory::trapezoid(Ts, v_peak, n_rest0, n_ramp, n_hold, n_rest1);
    throw ConfigError("trajectory.type", "unknown type '" + type + "'");
}

Algorithm parse_algorithm(const std::string& name) {
    if (name == "I") return Algorithm::NominalBo;
    if (name == "II") return Algorithm::RandomSearch;
    if (name == "III") return Algorithm::BoNoOutlier;
    if (name == "IV") return Algorithm::BoFull;
    throw ConfigError("algorithm", "expected one of I, II, III, IV; got '" + name + "'");
}

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::NominalBo: return "I";
        case Algorithm::RandomSearch: return "II";
        case Algorithm::BoNoOutlier: return "III";
        case Algorithm::BoFull: return "IV";
    }
    return "?";
}

void RunConfig::validate_fields() const {
    try {
        plant.validate();
    } catch (const std::exception& e) {
        throw ConfigError("plant", e.what());
    }
    if (Ts <= 0.0) throw ConfigError("Ts", "must be > 0");
    try {
        context.validate();
    } catch (const std::exception& e) {
        throw ConfigError("context", e.what());
    }
    if (bounds.hu_min < 1) throw ConfigError("bounds.hu_min", "must be >= 1");
    if (bounds.hu_max < bounds.hu_min) throw ConfigError("bounds.hu_max", "must be >= hu_min");
    if (bounds.hp_max < bounds.hp_min) throw ConfigError("bounds.hp_max", "must be >= hp_min");
    if (bounds.lambda_mpc_max < bounds.lambda_mpc_min)
        throw ConfigError("bounds.lambda_mpc_max", "must be >= lambda_mpc_min");
    if (bounds.lambda_kf_max < bounds.lambda_kf_min)
        throw ConfigError("bounds.lambda_kf_max", "must be >= lambda_kf_min");
    if (overshoot_max <= 0.0) throw ConfigError("overshoot_max", "must be > 0");
    if (time_max <= 0.0) throw ConfigError("time_max", "must be > 0");
    if (budget < 1) throw ConfigError("budget", "must be >= 1");
    if (n_init < 1) throw ConfigError("n_init", "must be >= 1");
    if (budget < n_init) throw ConfigError("budget", "must be >= n_init");
    if (stage2_budget < stage2_n_init)
        throw ConfigError("stage2_budget", "must be >= stage2_n_init");
    if (validation_draws < 1) throw ConfigError("validation_draws", "must be >= 1");
    parse_algorithm(algorithm);
    trajectory.build(Ts);  // validates the type
    if (benchmark.n_runs < 1) throw ConfigError("benchmark.n_runs", "must be >= 1");
    for (const auto& a : benchmark.algorithms) parse_algorithm(a);
}

EpisodeConfig RunConfig::episode_config() const {
    EpisodeConfig e;
    e.nominal_plant = plant;
    e.Ts = Ts;
    e.trajectory = trajectory.build(Ts);
    e.noise_std = noise_std;
    e.timing = timing;
    return e;
}

TunerOptions RunConfig::tuner_options() const {
    TunerOptions t;
    t.episode = episode_config();
    t.context_spec = context;
    t.bounds = bounds;
    t.two_dim_benchmark = two_dim_benchmark;
    t.fixed_lambda_kf = fixed_lambda_kf;
    t.budget = budget;
    t.n_init = n_init;
    t.algorithm = parse_algorithm(algorithm);
    t.overshoot_max = overshoot_max;
    t.time_max = time_max;
    t.time_z_level = time_z_level;
    t.stage2.context_spec = context;
    t.stage2.overshoot_max = overshoot_max;
    t.stage2.n_init = stage2_n_init;
    t.stage2.budget = stage2_budget;
    t.stage2.pso = PsoOptions{stage2_pso_swarm, stage2_pso_iters};
    t.stage2.gp_restarts = stage2_gp_restarts;
    t.stage2.gp_max_iters = stage2_gp_max_iters;
    t.pso = PsoOptions{pso_swarm, pso_iters};
    t.gp_restarts = gp_restarts;
    t.gp_max_iters = gp_max_iters;
    t.gp_refit_full_every = gp_refit_full_every;
    t.horizon_lengthscale_min = horizon_lengthscale_min;
    t.knn_k = knn_k;
    t.knn_lengthscale = knn_lengthscale;
    t.outlier_threshold_z = outlier_threshold_z;
    t.student_t_nu = student_t_nu;
    t.outlier_detection = t.algorithm != Algorithm::BoNoOutlier;
    t.validation_draws = validation_draws;
    t.validate_incumbents = validate_incumbents;
    return t;
}

void to_json(json& j, const RunConfig& c) {
    j = json{
        {"plant",
         {{"gain", c.plant.gain},
          {"damping", c.plant.damping},
          {"omega0", c.plant.omega0},
          {"input_delay", c.plant.input_delay}}},
        {"Ts", c.Ts},
        {"trajectory",
         {{"type", c.trajectory.type},
          {"v_peak", c.trajectory.v_peak},
          {"n_rest0", c.trajectory.n_rest0},
          {"n_ramp", c.trajectory.n_ramp},
          {"n_hold", c.trajectory.n_hold},
          {"n_rest1", c.trajectory.n_rest1},
          {"level", c.trajectory.level},
          {"n", c.trajectory.n}}},
        {"noise_std", c.noise_std},
        {"context",
         {{"mean", {c.context.mean[0], c.context.mean[1]}},
          {"sigma", c.context.sigma},
          {"lower", {c.context.lower[0], c.context.lower[1]}},
          {"upper", {c.context.upper[0], c.context.upper[1]}}}},
        {"bounds",
         {{"hu_min", c.bounds.hu_min},
          {"hu_max", c.bounds.hu_max},
          {"hp_min", c.bounds.hp_min},
          {"hp_max", c.bounds.hp_max},
          {"lambda_mpc_min", c.bounds.lambda_mpc_min},
          {"lambda_mpc_max", c.bounds.lambda_mpc_max},
          {"lambda_kf_min", c.bounds.lambda_kf_min},
          {"lambda_kf_max", c.bounds.lambda_kf_max}}},
        {"overshoot_max", c.overshoot_max},
        {"time_max", c.time_max},
        {"time_z_level", c.time_z_level},
        {"timing",
         {{"mode", c.timing.mode == TimingMode::synthetic ? "synthetic" : "wallclock"},
          {"c0", c.timing.c0},
          {"c1", c.timing.c1},
          {"jitter_std", c.timing.jitter_std}}},
        {"budget", c.budget},
        {"n_init", c.n_init},
        {"algorithm", c.algorithm},
        {"two_dim_benchmark", c.two_dim_benchmark},
        {"fixed_lambda_kf", c.fixed_lambda_kf},
        {"validation_draws", c.validation_draws},
        {"validate_incumbents", c.validate_incumbents},
        {"pso_swarm", c.pso_swarm},
        {"pso_iters", c.pso_iters},
        {"gp_restarts", c.gp_restarts},
        {"gp_max_iters", c.gp_max_iters},
        {"gp_refit_full_every", c.gp_refit_full_every},
        {"horizon_lengthscale_min", c.horizon_lengthscale_min},
        {"knn_k", c.knn_k},
        {"knn_lengthscale", c.knn_lengthscale},
        {"outlier_threshold_z", c.outlier_threshold_z},
        {"student_t_nu", c.student_t_nu},
        {"stage2_n_init", c.stage2_n_init},
        {"stage2_budget", c.stage2_budget},
        {"stage2_pso_swarm", c.stage2_pso_swarm},
        {"stage2_pso_iters", c.stage2_pso_iters},
        {"stage2_gp_restarts", c.stage2_gp_restarts},
        {"stage2_gp_max_iters", c.stage2_gp_max_iters},
        {"benchmark", {{"n_runs", c.benchmark.n_runs}, {"algorithms", c.benchmark.algorithms}}},
        {"seed", c.seed},
        {"out_dir", c.out_dir},
    };
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void get_vec2(const json& j, const char* key, Eigen::Vector2d& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    out[0] = a.at(0).get<double>();
    out[1] = a.at(1).get<double>();
}

}  // namespace

void from_json(const json& j, RunConfig& c) {
    if (j.contains("plant")) {
        const auto& p = j.at("plant");
        get_if(p, "gain", c.plant.gain);
        get_if(p, "damping", c.plant.damping);
        get_if(p, "omega0", c.plant.omega0);
        get_if(p, "input_delay", c.plant.input_delay);
    }
    get_if(j, "Ts", c.Ts);
    if (j.contains("trajectory")) {
        const auto& t = j.at("trajectory");
        get_if(t, "type", c.trajectory.type);
        get_if(t, "v_peak", c.trajectory.v_peak);
        get_if(t, "n_rest0", c.trajectory.n_rest0);
        get_if(t, "n_ramp", c.trajectory.n_ramp);
        get_if(t, "n_hold", c.trajectory.n_hold);
        get_if(t, "n_rest1", c.trajectory.n_rest1);
        get_if(t, "level", c.trajectory.level);
        get_if(t, "n", c.trajectory.n);
    }
    get_if(j, "noise_std", c.noise_std);
    if (j.contains("context")) {
        const auto& t = j.at("context");
        get_vec2(t, "mean", c.context.mean);
        get_if(t, "sigma", c.context.sigma);
        get_vec2(t, "lower", c.context.lower);
        get_vec2(t, "upper", c.context.upper);
    }
    if (j.contains("bounds")) {
        const auto& b = j.at("bounds");
        get_if(b, "hu_min", c.bounds.hu_min);
        get_if(b, "hu_max", c.bounds.hu_max);
        get_if(b, "hp_min", c.bounds.hp_min);
        get_if(b, "hp_max", c.bounds.hp_max);
        get_if(b, "lambda_mpc_min", c.bounds.lambda_mpc_min);
        get_if(b, "lambda_mpc_max", c.bounds.lambda_mpc_max);
        get_if(b, "lambda_kf_min", c.bounds.lambda_kf_min);
        get_if(b, "lambda_kf_max", c.bounds.lambda_kf_max);
    }
    get_if(j, "overshoot_max", c.overshoot_max);
    get_if(j, "time_max", c.time_max);
    get_if(j, "time_z_level", c.time_z_level);
    if (j.contains("timing")) {
        const auto& t = j.at("timing");
        if (t.contains("mode")) {
            std::string mode = t.at("mode").get<std::string>();
            if (mode == "synthetic")
                c.timing.mode = TimingMode::synthetic;
            else if (mode == "wallclock")
                c.timing.mode = TimingMode::wallclock;
            else
                throw ConfigError("timing.mode", "expected 'synthetic' or 'wallclock'");
        }
        get_if(t, "c0", c.timing.c0);
        get_if(t, "c1", c.timing.c1);
        get_if(t, "jitter_std", c.timing.jitter_std);
    }
    get_if(j, "budget", c.budget);
    get_if(j, "n_init", c.n_init);
    get_if(j, "algorithm", c.algorithm);
    get_if(j, "two_dim_benchmark", c.two_dim_benchmark);
    get_if(j, "fixed_lambda_kf", c.fixed_lambda_kf);
    get_if(j, "validation_draws", c.validation_draws);
    get_if(j, "validate_incumbents", c.validate_incumbents);
    get_if(j, "pso_swarm", c.pso_swarm);
    get_if(j, "pso_iters", c.pso_iters);
    get_if(j, "gp_restarts", c.gp_restarts);
    get_if(j, "gp_max_iters", c.gp_max_iters);
    get_if(j, "gp_refit_full_every", c.gp_refit_full_every);
    get_if(j, "horizon_lengthscale_min", c.horizon_lengthscale_min);
    get_if(j, "knn_k", c.knn_k);
    get_if(j, "knn_lengthscale", c.knn_lengthscale);
    get_if(j, "outlier_threshold_z", c.outlier_threshold_z);
    get_if(j, "student_t_nu", c.student_t_nu);
    get_if(j, "stage2_n_init", c.stage2_n_init);
    get_if(j, "stage2_budget", c.stage2_budget);
    get_if(j, "stage2_pso_swarm", c.stage2_pso_swarm);
    get_if(j, "stage2_pso_iters", c.stage2_pso_iters);
    get_if(j, "stage2_gp_restarts", c.stage2_gp_restarts);
    get_if(j, "stage2_gp_max_iters", c.stage2_gp_max_iters);
    if (j.contains("benchmark")) {
        const auto& b = j.at("benchmark");
        get_if(b, "n_runs", c.benchmark.n_runs);
        get_if(b, "algorithms", c.benchmark.algorithms);
    }
    get_if(j, "seed", c.seed);
    get_if(j, "out_dir", c.out_dir);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    json j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    RunConfig c = j.get<RunConfig>();
    c.validate_fields();
    return c;
}

std::string resolved_config_text(const RunConfig& c) {
    json j = c;
    return j.dump(2) + "\n";
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double null_or(const json& j, double fallback) {
    return j.is_null() ? fallback : j.get<double>();
}

}  // namespace

json record_to_json(const TunerOptions& opts, const TunerRecord& rec) {
    (void)opts;
    json samples = json::array();
    for (const auto& [ite, t] : rec.stage2.init_samples) samples.push_back({ite, t});
    return json{
        {"params",
         {{"hu", rec.params.control_horizon},
          {"hp", rec.params.prediction_horizon},
          {"lambda_mpc", rec.params.lambda_mpc},
          {"lambda_kf", rec.params.lambda_kf}}},
        {"stage2",
         {{"worst_overshoot", rec.stage2.worst_overshoot},
          {"init_samples", samples},
          {"evaluations", rec.stage2.evaluations},
          {"early_stop", rec.stage2.early_stop},
          {"failed", rec.stage2.failed}}},
        {"outlier", rec.outlier},
        {"from_initial_design", rec.from_initial_design},
        {"mean_ite", finite_or_null(rec.mean_ite)},
        {"acq",
         {{"ri", rec.acq.ri},
          {"p_feas", rec.acq.p_feas},
          {"p_out", rec.acq.p_out},
          {"p_fail", rec.acq.p_fail},
          {"alpha", rec.acq.alpha}}},
        {"incumbent_estimate", finite_or_null(rec.incumbent_estimate)},
        {"incumbent_validation", finite_or_null(rec.incumbent_validation)},
    };
}

TunerRecord record_from_json(const json& j) {
    TunerRecord rec;
    const auto& p = j.at("params");
    rec.params.control_horizon = p.at("hu").get<int>();
    rec.params.prediction_horizon = p.at("hp").get<int>();
    rec.params.lambda_mpc = p.at("lambda_mpc").get<double>();
    rec.params.lambda_kf = p.at("lambda_kf").get<double>();
    const auto& s = j.at("stage2");
    rec.stage2.worst_overshoot = s.at("worst_overshoot").get<double>();
    for (const auto& pair : s.at("init_samples"))
        rec.stage2.init_samples.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
    rec.stage2.evaluations = s.at("evaluations").get<int>();
    rec.stage2.early_stop = s.at("early_stop").get<bool>();
    rec.stage2.failed = s.at("failed").get<bool>();
    rec.outlier = j.at("outlier").get<bool>();
    rec.from_initial_design = j.at("from_initial_design").get<bool>();
    rec.mean_ite = null_or(j.at("mean_ite"), std::numeric_limits<double>::quiet_NaN());
    const auto& a = j.at("acq");
    rec.acq.ri = a.at("ri").get<double>();
    rec.acq.p_feas = a.at("p_feas").get<double>();
    rec.acq.p_out = a.at("p_out").get<double>();
    rec.acq.p_fail = a.at("p_fail").get<double>();
    rec.acq.alpha = a.at("alpha").get<double>();
    rec.incumbent_estimate =
        null_or(j.at("incumbent_estimate"), std::numeric_limits<double>::infinity());
    rec.incumbent_validation =
        null_or(j.at("incumbent_validation"), std::numeric_limits<double>::infinity());
    return rec;
}

}  // namespace mpctune
