#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <variant>

#include "qaoi/experiments.hpp"
#include "qaoi/occupancy.hpp"
#include "qaoi/policy_io.hpp"
#include "qaoi/simulator.hpp"
#include "qaoi/weakly_coupled.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kSolverFailure = 2, kPartialSweep = 3 };

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    bool allow_large_joint = false;
};

void add_common(CLI::App* app, Common& c, bool want_out) {
    app->add_option("--config", c.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    if (want_out) app->add_option("--out", c.out, "Output path");
    app->add_option("--seed", c.seed, "Override sim.seed");
    app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
    app->add_flag("--allow-large-joint", c.allow_large_joint, "Permit joint LPs above the state guard");
}

qaoi::ExperimentConfig load(const Common& c) {
    auto cfg = qaoi::load_config(c.config, c.allow_large_joint);
    if (c.seed) cfg.sim.seed = *c.seed;
    cfg.sim.threads = c.threads;
    return cfg;
}

void print(const char* key, double v) { std::printf("%s %.10g\n", key, v); }

void print_metrics(const qaoi::SimMetrics& m) {
    print("sim_qaoi", m.qaoi_mean);
    print("sim_qaoi_ci95", m.qaoi_ci95);
    print("sim_tr", m.tr_mean);
    print("sim_sm", m.sm_mean);
    std::printf("horizon %zu\n", m.horizon);
    print("tail_bias_bound", m.tail_bias);
}

template <class Policy>
void write_policy_file(const std::string& path, const qaoi::SystemSpec& spec, const Policy& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    qaoi::write_policy(spec, p, out);
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

int cmd_solve(const Common& c, const std::string& kind, std::optional<double> at) {
    const auto cfg = load(c);
    const qaoi::SystemSpec spec = at ? qaoi::spec_at(cfg, *at) : cfg.base;
    if (kind == "optimal" && !cfg.allow_large_joint && qaoi::joint_state_count(spec) > qaoi::kJointGuardStates)
        throw qaoi::ConfigError("joint state space exceeds the guard; use --policy truncated or --allow-large-joint");
    qaoi::SolveOptions opts;
    opts.tol = cfg.lp_tolerance;
    double used_tol = 0.0;
    if (kind == "optimal") {
        const qaoi::StateSpace space(spec, c.allow_large_joint ? UINT64_MAX : qaoi::kJointGuardStates);
        const auto eta = qaoi::first_slot_distribution(spec, space);
        const auto jlp = qaoi::build_joint_lp(spec, space, eta);
        const auto sol = qaoi::solve_joint_lp(spec, space, jlp, eta, {.lp = opts}, used_tol);
        std::printf("lp_backend %s\n", sol.backend.c_str());
        std::printf("lp_status %s\n", qaoi::to_string(sol.status).c_str());
        if (!sol.optimal()) {
            std::fprintf(stderr, "solver failure: %s\n", sol.message.c_str());
            return kSolverFailure;
        }
        print("lp_objective", sol.objective_value);
        print("lp_tolerance", used_tol);
        auto policy = std::make_shared<qaoi::RandomizedPolicy>(
            qaoi::extract_policy(qaoi::make_occupation_measure(spec, jlp, sol)));
        if (!c.out.empty()) write_policy_file(c.out, spec, *policy);
        print_metrics(qaoi::run(qaoi::StationaryScheduler(spec, policy), spec, cfg.sim));
        return kOk;
    }
    const auto dlp = qaoi::build_decomposed_lp(spec, cfg.sampling_budget);
    const auto sol = qaoi::solve_decomposed_lp(spec, dlp, {.lp = opts}, used_tol);
    std::printf("lp_status %s\n", qaoi::to_string(sol.status).c_str());
    if (!sol.optimal()) {
        std::fprintf(stderr, "solver failure: %s\n", sol.message.c_str());
        return kSolverFailure;
    }
    print("lower_bound", qaoi::lower_bound_value(sol));
    print("lp_tolerance", used_tol);
    auto policy = std::make_shared<qaoi::TruncatedPolicy>();
    policy->per_source = qaoi::extract_per_source_policies(spec, dlp, sol, qaoi::kUnvisitedMassThreshold,
                                                           qaoi::UnvisitedFill::LagrangianGreedy);
    if (!c.out.empty()) write_policy_file(c.out, spec, *policy);
    print_metrics(qaoi::run(qaoi::TruncatedScheduler(spec, policy), spec, cfg.sim));
    return kOk;
}

int cmd_simulate(const Common& c, const std::string& policy_path, std::optional<double> at) {
    const auto cfg = load(c);
    const qaoi::SystemSpec spec = at ? qaoi::spec_at(cfg, *at) : cfg.base;
    std::ifstream in(policy_path);
    if (!in) throw qaoi::ConfigError("cannot open policy file '" + policy_path + "'");
    auto loaded = qaoi::read_policy(spec, in);
    qaoi::SimMetrics m;
    if (auto* joint = std::get_if<qaoi::RandomizedPolicy>(&loaded)) {
        auto p = std::make_shared<qaoi::RandomizedPolicy>(std::move(*joint));
        m = qaoi::run(qaoi::StationaryScheduler(spec, p), spec, cfg.sim);
    } else {
        auto p = std::make_shared<qaoi::TruncatedPolicy>(std::get<qaoi::TruncatedPolicy>(std::move(loaded)));
        m = qaoi::run(qaoi::TruncatedScheduler(spec, p), spec, cfg.sim);
    }
    print_metrics(m);
    return kOk;
}

int cmd_sweep(const Common& c, bool timing) {
    auto cfg = load(c);
    const std::string out = c.out.empty() ? cfg.output : c.out;
    // Parallelism goes to the grid; each point's simulator stays single-threaded.
    cfg.sim.threads = 1;
    const auto table = qaoi::run_experiment(cfg, {.threads = c.threads, .record_timing = timing});
    if (out.empty() || out == "-")
        qaoi::emit_csv(table, std::cout);
    else
        qaoi::emit_csv(table, out);
    const auto failed = table.failures();
    if (failed > 0) {
        std::fprintf(stderr, "%zu of %zu rows failed\n", failed, table.rows.size());
        return kPartialSweep;
    }
    return kOk;
}

int cmd_validate(const Common& c) {
    const auto cfg = load(c);
    std::printf("ok: %zu sources, %zu grid points, %zu policies, sweep %s\n", cfg.base.num_sources(), cfg.grid.size(),
                cfg.policies.size(), qaoi::to_string(cfg.sweep).c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Query-age-optimal sampling and scheduling"};
    app.require_subcommand(1);

    Common solve_c, sim_c, sweep_c, val_c;
    std::string solve_kind = "optimal";
    std::string policy_path;
    std::optional<double> solve_at, sim_at;
    bool timing = false;

    auto* solve = app.add_subcommand("solve", "Solve one instance, write the policy file and print metrics");
    add_common(solve, solve_c, true);
    solve->add_option("--policy", solve_kind, "optimal or truncated")
        ->check(CLI::IsMember({"optimal", "truncated"}));
    solve->add_option("--at", solve_at, "Use the instance at this sweep value instead of the base spec");

    auto* simulate = app.add_subcommand("simulate", "Simulate a stored policy file");
    add_common(simulate, sim_c, false);
    simulate->add_option("--policy", policy_path, "Policy file from 'solve'")->required()->check(CLI::ExistingFile);
    simulate->add_option("--at", sim_at, "Use the instance at this sweep value instead of the base spec");

    auto* sweep = app.add_subcommand("sweep", "Run the configured sweep and write CSV");
    add_common(sweep, sweep_c, true);
    sweep->add_flag("--timing", timing, "Fill the wall_ms column");

    auto* validate = app.add_subcommand("validate", "Check a config file");
    add_common(validate, val_c, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (solve->parsed()) return cmd_solve(solve_c, solve_kind, solve_at);
        if (simulate->parsed()) return cmd_simulate(sim_c, policy_path, sim_at);
        if (sweep->parsed()) return cmd_sweep(sweep_c, timing);
        return cmd_validate(val_c);
    } catch (const qaoi::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const qaoi::PolicyFormatError& e) {
        std::fprintf(stderr, "policy file error: %s\n", e.what());
        return kConfigError;
    } catch (const qaoi::ModelError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kSolverFailure;
    }
}
