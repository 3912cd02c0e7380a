#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpctune/config.hpp"
#include "mpctune/rng.hpp"
#include "mpctune/tuner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mpctune;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitRuntime = 4;

void write_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << content;
    }
    fs::rename(tmp, path);
}

json validation_to_json(const ValidationResult& v) {
    return json{{"objective", v.objective},
                {"feasible", v.feasible},
                {"max_overshoot", v.max_overshoot},
                {"max_step_time", v.max_step_time},
                {"failures", v.failures}};
}

struct ParamFlags {
    int hu = 15, hp = 15;
    double lambda_mpc = -3.0, lambda_kf = -1.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--hu", hu, "control horizon H_u");
        cmd->add_option("--hp", hp, "prediction horizon H_p");
        cmd->add_option("--lambda-mpc", lambda_mpc, "input-change weight exponent");
        cmd->add_option("--lambda-kf", lambda_kf, "process-noise exponent");
    }
    ControllerParams params() const { return ControllerParams{hu, hp, lambda_mpc, lambda_kf}; }
};

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string timing;
    int workers = 1;

    void attach(CLI::App* cmd, bool with_out = true) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option_function<std::uint64_t>(
            "--seed", [this](std::uint64_t s) { seed = s; seed_set = true; }, "root seed override");
        if (with_out) cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--timing", timing, "timing mode: synthetic|wallclock")
            ->check(CLI::IsMember({"synthetic", "wallclock"}));
        cmd->add_option("--workers", workers, "parallel worker count")->check(CLI::PositiveNumber);
    }

    RunConfig load() const {
        RunConfig c;
        if (!config_path.empty())
            c = load_config(config_path);
        else
            c.validate_fields();
        if (seed_set) c.seed = seed;
        if (!out_dir.empty()) c.out_dir = out_dir;
        if (timing == "synthetic") c.timing.mode = TimingMode::synthetic;
        if (timing == "wallclock") c.timing.mode = TimingMode::wallclock;
        return c;
    }
};

void write_trace_csv(const fs::path& path, const EpisodeTrace& trace) {
    std::ostringstream out;
    out << "k,v_ref,v,u,xhat0,xhat1\n";
    for (std::size_t k = 0; k < trace.v.size(); ++k) {
        out << k << ',' << trace.v_ref[k] << ',' << trace.v[k] << ','
            << (k < trace.u.size() ? trace.u[k] : 0.0) << ',' << trace.x_hat[k][0] << ','
            << trace.x_hat[k][1] << '\n';
    }
    write_atomic(path, out.str());
}

int cmd_simulate(const CommonFlags& common, const ParamFlags& pf, double stiffness, double damping,
                 const std::string& trace_path) {
    RunConfig cfg = common.load();
    ControllerParams params = pf.params();
    if (!cfg.bounds.contains(params)) {
        std::cerr << "error: controller parameters out of configured bounds\n";
        return kExitConfig;
    }
    Context ctx{stiffness, damping};
    EpisodeTrace trace;
    EpisodeOutcome out = run_episode(cfg.episode_config(), params, ctx,
                                     SeedStream(cfg.seed).derive("episode-noise"),
                                     trace_path.empty() ? nullptr : &trace);
    json j{{"ite", out.ite},
           {"overshoot", out.overshoot},
           {"step_time", out.step_time},
           {"failed", out.failed}};
    std::cout << j.dump(2) << '\n';
    if (!trace_path.empty()) write_trace_csv(trace_path, trace);
    return out.failed ? kExitRuntime : kExitOk;
}

int cmd_tune(const CommonFlags& common) {
    RunConfig cfg = common.load();
    TunerOptions opts = cfg.tuner_options();
    Stage1Result result = stage1_optimize(opts, cfg.seed);

    const std::uint64_t val_seed = SeedStream(cfg.seed).derive("final-validation");
    ValidationResult val = validate(opts, result.best, opts.validation_draws, val_seed);

    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_atomic(dir / "resolved_config.json", resolved_config_text(cfg));

    std::ostringstream hist;
    for (const auto& rec : result.history) hist << record_to_json(opts, rec).dump() << '\n';
    write_atomic(dir / "history.jsonl", hist.str());

    json summary{
        {"best",
         {{"hu", result.best.control_horizon},
          {"hp", result.best.prediction_horizon},
          {"lambda_mpc", result.best.lambda_mpc},
          {"lambda_kf", result.best.lambda_kf}}},
        {"best_feasible_observed", result.best_feasible},
        {"train_estimate", result.best_train_estimate},
        {"validation", validation_to_json(val)},
        {"validation_seed", val_seed},
        {"episode_count", result.episode_count},
        {"validation_episodes", result.validation_episodes},
        {"seed", cfg.seed},
    };
    write_atomic(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << '\n';
    return kExitOk;
}

int cmd_validate(const CommonFlags& common, const ParamFlags& pf) {
    RunConfig cfg = common.load();
    ControllerParams params = pf.params();
    if (!cfg.bounds.contains(params)) {
        std::cerr << "error: controller parameters out of configured bounds\n";
        return kExitConfig;
    }
    TunerOptions opts = cfg.tuner_options();
    ValidationResult v = validate(opts, params, opts.validation_draws,
                                  common.seed_set ? cfg.seed
                                                  : SeedStream(cfg.seed).derive("final-validation"));
    std::cout << validation_to_json(v).dump(2) << '\n';
    return v.feasible ? kExitOk : kExitInfeasible;
}

int cmd_benchmark(const CommonFlags& common) {
    RunConfig cfg = common.load();
    TunerOptions base = cfg.tuner_options();

    struct Job {
        Algorithm algo;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& name : cfg.benchmark.algorithms) {
        Algorithm algo = parse_algorithm(name);
        for (int r = 0; r < cfg.benchmark.n_runs; ++r)
            // The run seed depends only on the repetition index, so every
            // algorithm sees the identical initial design.
            jobs.push_back({algo, SeedStream(cfg.seed).derive("benchmark-run",
                                                              static_cast<std::uint64_t>(r))});
    }

    std::vector<BenchmarkRunResult> results(jobs.size());
    std::size_t next = 0;
    std::mutex mtx;
    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mtx);
                if (next >= jobs.size()) return;
                i = next++;
            }
            results[i] = run_benchmark_algorithm(jobs[i].algo, base, jobs[i].seed);
            {
                std::lock_guard<std::mutex> lock(mtx);
                std::cerr << "done: algo " << algorithm_name(jobs[i].algo) << " seed "
                          << jobs[i].seed << " val " << results[i].validation.objective
                          << (results[i].validation.feasible ? " (feasible)" : " (infeasible)")
                          << '\n';
            }
        }
    };
    std::vector<std::future<void>> pool;
    for (int w = 0; w < std::max(1, common.workers); ++w)
        pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();

    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_atomic(dir / "resolved_config.json", resolved_config_text(cfg));

    std::ostringstream runs;
    for (const auto& r : results) {
        json j{{"algorithm", algorithm_name(r.algorithm)},
               {"seed", r.seed},
               {"best",
                {{"hu", r.stage1.best.control_horizon},
                 {"hp", r.stage1.best.prediction_horizon},
                 {"lambda_mpc", r.stage1.best.lambda_mpc},
                 {"lambda_kf", r.stage1.best.lambda_kf}}},
               {"train_estimate", r.stage1.best_train_estimate},
               {"validation", validation_to_json(r.validation)},
               {"objective_gap", r.objective_gap},
               {"episode_count", r.stage1.episode_count}};
        runs << j.dump() << '\n';
    }
    write_atomic(dir / "runs.jsonl", runs.str());

    // Table-1-style aggregate: feasibility %, mean validation objective,
    // mean validation-training gap per algorithm.
    std::ostringstream csv;
    csv << "algorithm,feasibility,obj_validation,obj_gap\n";
    for (const auto& name : cfg.benchmark.algorithms) {
        Algorithm algo = parse_algorithm(name);
        int n = 0, feas = 0;
        double sum_val = 0.0, sum_gap = 0.0;
        int n_val = 0;
        for (const auto& r : results) {
            if (r.algorithm != algo) continue;
            ++n;
            if (r.validation.feasible) ++feas;
            if (std::isfinite(r.validation.objective)) {
                sum_val += r.validation.objective;
                sum_gap += r.objective_gap;
                ++n_val;
            }
        }
        csv << name << ',' << (n > 0 ? 100.0 * feas / n : 0.0) << ','
            << (n_val > 0 ? sum_val / n_val : 0.0) << ',' << (n_val > 0 ? sum_gap / n_val : 0.0)
            << '\n';
    }
    write_atomic(dir / "benchmark.csv", csv.str());
    std::cout << csv.str();
    return kExitOk;
}

int cmd_grid(const CommonFlags& common, const std::string& run_dir, int dim0, int dim1,
             int resolution, const std::string& out_file) {
    RunConfig cfg = common.load();
    TunerOptions opts = cfg.tuner_options();

    fs::path hist_path = fs::path(run_dir) / "history.jsonl";
    fs::path summary_path = fs::path(run_dir) / "summary.json";
    if (!fs::exists(hist_path)) {
        std::cerr << "error: missing tune artifact: " << hist_path.string() << '\n';
        return kExitRuntime;
    }
    if (!fs::exists(summary_path)) {
        std::cerr << "error: missing tune artifact: " << summary_path.string() << '\n';
        return kExitRuntime;
    }

    Stage1Result result;
    {
        std::ifstream in(hist_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            result.history.push_back(record_from_json(json::parse(line)));
        }
        std::ifstream sin(summary_path);
        json s = json::parse(sin);
        result.best.control_horizon = s.at("best").at("hu").get<int>();
        result.best.prediction_horizon = s.at("best").at("hp").get<int>();
        result.best.lambda_mpc = s.at("best").at("lambda_mpc").get<double>();
        result.best.lambda_kf = s.at("best").at("lambda_kf").get<double>();
    }

    const int m = tuning_dim(opts);
    if (dim0 < 0 || dim0 >= m || dim1 < 0 || dim1 >= m || dim0 == dim1) {
        std::cerr << "error: grid dims must be distinct indices below " << m << '\n';
        return kExitConfig;
    }

    auto cells = export_grid(opts, result, dim0, dim1, resolution, cfg.seed);
    std::ostringstream csv;
    csv << "x0,x1,objective_mean,p_feas,p_out,p_fail,time_mean,time_synthetic\n";
    for (const auto& c : cells)
        csv << c.x0 << ',' << c.x1 << ',' << c.objective_mean << ',' << c.p_feas << ','
            << c.p_out << ',' << c.p_fail << ',' << c.time_mean << ',' << c.time_synthetic
            << '\n';
    fs::path out = out_file.empty() ? fs::path(run_dir) / "grid.csv" : fs::path(out_file);
    write_atomic(out, csv.str());
    std::cout << "wrote " << out.string() << " (" << cells.size() << " cells)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust MPC/KF auto-tuning via two-stage Bayesian optimization"};
    app.require_subcommand(1);

    CommonFlags sim_common, tune_common, val_common, bench_common, grid_common;
    ParamFlags sim_params, val_params;
    double sim_stiffness = 1.0, sim_damping = 1.0;
    std::string sim_trace;
    std::string grid_run_dir, grid_out;
    int grid_dim0 = 0, grid_dim1 = 1, grid_resolution = 40;

    auto* sim = app.add_subcommand("simulate", "run a single closed-loop episode");
    sim_common.attach(sim, false);
    sim_params.attach(sim);
    sim->add_option("--stiffness", sim_stiffness, "context stiffness scale");
    sim->add_option("--damping", sim_damping, "context damping scale");
    sim->add_option("--trace", sim_trace, "write per-step trace CSV to this path");

    auto* tune = app.add_subcommand("tune", "run the two-stage optimization");
    tune_common.attach(tune);

    auto* val = app.add_subcommand("validate", "validate a parametrization over random contexts");
    val_common.attach(val, false);
    val_params.attach(val);

    auto* bench = app.add_subcommand("benchmark", "compare algorithms I-IV over seeded runs");
    bench_common.attach(bench);

    auto* grid = app.add_subcommand("grid", "export surrogate-model grid from tune artifacts");
    grid_common.attach(grid, false);
    grid->add_option("--run", grid_run_dir, "directory with tune artifacts")->required();
    grid->add_option("--dim0", grid_dim0, "first grid dimension index");
    grid->add_option("--dim1", grid_dim1, "second grid dimension index");
    grid->add_option("--resolution", grid_resolution, "cells per dimension")
        ->check(CLI::PositiveNumber);
    grid->add_option("--grid-out", grid_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return cmd_simulate(sim_common, sim_params, sim_stiffness, sim_damping, sim_trace);
        if (tune->parsed()) return cmd_tune(tune_common);
        if (val->parsed()) return cmd_validate(val_common, val_params);
        if (bench->parsed()) return cmd_benchmark(bench_common);
        if (grid->parsed())
            return cmd_grid(grid_common, grid_run_dir, grid_dim0, grid_dim1, grid_resolution,
                            grid_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
