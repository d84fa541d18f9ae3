#include "qaoi/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <optional>
#include <thread>

#include "qaoi/occupancy.hpp"

namespace qaoi {

using nlohmann::json;

std::string to_string(SweepParam p) {
    switch (p) {
        case SweepParam::GammaTr: return "gamma_tr";
        case SweepParam::P: return "p";
        case SweepParam::SourceCount: return "source_count";
    }
    return "?";
}

std::string to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::Optimal: return "optimal";
        case PolicyKind::Truncated: return "truncated";
        case PolicyKind::LowerBound: return "lower_bound";
        case PolicyKind::Baseline: return "baseline";
        case PolicyKind::Idle: return "idle";
    }
    return "?";
}

namespace {

// Minimal schema checking: every object lists its allowed keys, and every
// scalar is type-checked on read.
void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : obj.items())
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

double number(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return v.get<double>();
}

double number_or(const json& obj, const char* key, const std::string& where, double fallback) {
    return obj.contains(key) ? number(obj, key, where) : fallback;
}

std::uint64_t count(const json& obj, const char* key, const std::string& where, std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        throw ConfigError(where + "." + key + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
}

bool flag(const json& obj, const char* key, const std::string& where, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) throw ConfigError(where + "." + key + ": expected true/false");
    return obj.at(key).get<bool>();
}

std::string text(const json& obj, const char* key, const std::string& where, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return obj.at(key).get<std::string>();
}

PolicyKind parse_policy(const std::string& s) {
    static const std::map<std::string, PolicyKind> names{{"optimal", PolicyKind::Optimal},
                                                          {"truncated", PolicyKind::Truncated},
                                                          {"lower_bound", PolicyKind::LowerBound},
                                                          {"baseline", PolicyKind::Baseline},
                                                          {"idle", PolicyKind::Idle}};
    const auto it = names.find(s);
    if (it == names.end()) throw ConfigError("policies: unknown policy '" + s + "'");
    return it->second;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    allow_keys(doc, "config",
               {"sources", "p", "N", "lambda", "gamma_tr", "gamma_sm", "sweep", "policies", "sim", "output",
                "allow_large_joint", "sampling_budget", "lp_tolerance"});
    ExperimentConfig cfg;
    auto& spec = cfg.base;

    if (!doc.contains("sources") || !doc.at("sources").is_array() || doc.at("sources").empty())
        throw ConfigError("config.sources: expected a non-empty array");
    for (std::size_t i = 0; i < doc.at("sources").size(); ++i) {
        const auto& s = doc.at("sources")[i];
        const std::string where = "sources[" + std::to_string(i) + "]";
        allow_keys(s, where, {"kind", "mu", "rho", "rho_bar"});
        const auto kind = text(s, "kind", where, "");
        const QueryChain q{number(s, "rho", where), number(s, "rho_bar", where)};
        if (kind == "random_arrival")
            spec.sources.push_back(SourceSpec::random_arrival(number(s, "mu", where), q));
        else if (kind == "generate_at_will") {
            if (s.contains("mu")) throw ConfigError(where + ": 'mu' only applies to random_arrival sources");
            spec.sources.push_back(SourceSpec::generate_at_will(q));
        } else
            throw ConfigError(where + ".kind: expected 'random_arrival' or 'generate_at_will'");
    }
    spec.p = number(doc, "p", "config");
    const auto& n = doc.contains("N") ? doc.at("N") : json();
    if (!n.is_number_integer()) throw ConfigError("config.N: expected an integer");
    spec.age_cap = n.get<int>();
    spec.discount = number(doc, "lambda", "config");
    spec.gamma_tr = number(doc, "gamma_tr", "config");
    spec.gamma_sm = number(doc, "gamma_sm", "config");
    try {
        spec.validate();
    } catch (const ModelError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    if (!doc.contains("sweep")) throw ConfigError("config: missing key 'sweep'");
    const auto& sw = doc.at("sweep");
    allow_keys(sw, "sweep", {"param", "values"});
    const auto param = text(sw, "param", "sweep", "");
    if (param == "gamma_tr")
        cfg.sweep = SweepParam::GammaTr;
    else if (param == "p")
        cfg.sweep = SweepParam::P;
    else if (param == "source_count")
        cfg.sweep = SweepParam::SourceCount;
    else
        throw ConfigError("sweep.param: expected 'gamma_tr', 'p' or 'source_count'");
    if (!sw.contains("values") || !sw.at("values").is_array())
        throw ConfigError("sweep.values: expected an array of numbers");
    for (const auto& v : sw.at("values")) {
        if (!v.is_number()) throw ConfigError("sweep.values: expected numbers");
        cfg.grid.push_back(v.get<double>());
    }

    if (!doc.contains("policies") || !doc.at("policies").is_array())
        throw ConfigError("config.policies: expected an array of policy names");
    for (const auto& p : doc.at("policies")) {
        if (!p.is_string()) throw ConfigError("policies: expected strings");
        cfg.policies.push_back(parse_policy(p.get<std::string>()));
    }

    if (doc.contains("sim")) {
        const auto& sim = doc.at("sim");
        allow_keys(sim, "sim", {"horizon", "tail_tolerance", "max_horizon", "replications", "seed", "record_traces"});
        cfg.sim.horizon = count(sim, "horizon", "sim", 0);
        cfg.sim.tail_tolerance = number_or(sim, "tail_tolerance", "sim", cfg.sim.tail_tolerance);
        cfg.sim.max_horizon = count(sim, "max_horizon", "sim", cfg.sim.max_horizon);
        cfg.sim.replications = count(sim, "replications", "sim", cfg.sim.replications);
        cfg.sim.seed = count(sim, "seed", "sim", cfg.sim.seed);
        cfg.sim.record_traces = flag(sim, "record_traces", "sim", false);
    }
    cfg.output = text(doc, "output", "config", "");
    cfg.allow_large_joint = flag(doc, "allow_large_joint", "config", false);
    const auto mode = text(doc, "sampling_budget", "config", "shared");
    if (mode == "shared")
        cfg.sampling_budget = SamplingBudgetMode::Shared;
    else if (mode == "per_source")
        cfg.sampling_budget = SamplingBudgetMode::PerSource;
    else
        throw ConfigError("config.sampling_budget: expected 'shared' or 'per_source'");
    cfg.lp_tolerance = number_or(doc, "lp_tolerance", "config", cfg.lp_tolerance);

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path, bool allow_large_joint) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    if (allow_large_joint && doc.is_object()) doc["allow_large_joint"] = true;
    return parse_config(doc);
}

SystemSpec spec_at(const ExperimentConfig& cfg, double value) {
    SystemSpec spec = cfg.base;
    switch (cfg.sweep) {
        case SweepParam::GammaTr: spec.gamma_tr = value; break;
        case SweepParam::P: spec.p = value; break;
        case SweepParam::SourceCount: {
            const auto& src = cfg.base.sources;
            const auto ra = std::find_if(src.begin(), src.end(), [](const auto& s) { return s.is_random_arrival(); });
            const auto gaw = std::find_if(src.begin(), src.end(), [](const auto& s) { return !s.is_random_arrival(); });
            spec.sources.clear();
            const auto n = static_cast<std::size_t>(value);
            for (std::size_t i = 0; i < n; ++i) {
                const bool want_ra = (i % 2 == 0 && ra != src.end()) || gaw == src.end();
                spec.sources.push_back(want_ra ? *ra : *gaw);
            }
            break;
        }
    }
    return spec;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.policies.empty()) throw ConfigError("policies: at least one policy is required");
    if (cfg.grid.empty()) throw ConfigError("sweep.values: grid must be non-empty");
    if (cfg.sim.replications == 0) throw ConfigError("sim.replications must be >= 1");
    if (!(cfg.sim.tail_tolerance > 0.0)) throw ConfigError("sim.tail_tolerance must be > 0");
    if (cfg.sim.max_horizon == 0) throw ConfigError("sim.max_horizon must be >= 1");
    if (!(cfg.lp_tolerance >= 1e-12 && cfg.lp_tolerance < 1e-2))
        throw ConfigError("lp_tolerance must lie in [1e-12, 1e-2)");
    for (double v : cfg.grid) {
        if (cfg.sweep == SweepParam::SourceCount && (v < 1.0 || v != std::floor(v)))
            throw ConfigError("sweep.values: source counts must be positive integers");
        const SystemSpec spec = spec_at(cfg, v);
        try {
            spec.validate();
        } catch (const ModelError& e) {
            throw ConfigError("sweep value " + std::to_string(v) + ": " + e.what());
        }
        const bool wants_optimal =
            std::find(cfg.policies.begin(), cfg.policies.end(), PolicyKind::Optimal) != cfg.policies.end();
        if (wants_optimal && !cfg.allow_large_joint && joint_state_count(spec) > kJointGuardStates)
            throw ConfigError("joint state space of " + std::to_string(joint_state_count(spec)) +
                              " states exceeds the " + std::to_string(kJointGuardStates) +
                              "-state guard; use 'truncated' and 'lower_bound' instead, or pass --allow-large-joint");
    }
}

std::size_t ResultTable::failures() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status.rfind("ok", 0) != 0; }));
}

namespace {

std::string lp_status_text(const LpSolution& sol, double used_tol, double requested_tol) {
    if (!sol.optimal()) return "lp_" + to_string(sol.status);
    if (used_tol > requested_tol) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "ok_relaxed_tol_%.0e", used_tol);
        return buf;
    }
    return "ok";
}

void fill_sim(ResultRow& row, const SimMetrics& m) {
    row.sim_qaoi = m.qaoi_mean;
    row.sim_qaoi_ci95 = m.qaoi_ci95;
    row.sim_tr = m.tr_mean;
    row.sim_sm = m.sm_mean;
}

std::vector<ResultRow> run_point(const ExperimentConfig& cfg, double value, bool timing) {
    using clock = std::chrono::steady_clock;
    const SystemSpec spec = spec_at(cfg, value);
    SolveOptions lp_opts;
    lp_opts.tol = cfg.lp_tolerance;

    // The decomposed LP is shared by the truncated and lower-bound rows.
    std::optional<DecomposedLp> dlp;
    std::optional<LpSolution> dsol;
    std::string dstatus;
    double dms = 0.0;
    // Returns true when this call performed the shared solve.
    auto decomposed = [&] {
        if (dlp) return false;
        const auto t0 = clock::now();
        dlp = build_decomposed_lp(spec, cfg.sampling_budget);
        double used = 0.0;
        dsol = solve_decomposed_lp(spec, *dlp, {.lp = lp_opts}, used);
        dstatus = lp_status_text(*dsol, used, lp_opts.tol);
        dms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        return true;
    };

    std::vector<ResultRow> rows;
    for (PolicyKind kind : cfg.policies) {
        ResultRow row;
        row.sweep_value = value;
        row.policy = kind;
        const auto t0 = clock::now();
        double shared_ms = 0.0;  // LP time solved for an earlier row but also spent on this one
        try {
            switch (kind) {
                case PolicyKind::Optimal: {
                    const StateSpace space(spec, cfg.allow_large_joint ? UINT64_MAX : kJointGuardStates);
                    const auto eta = first_slot_distribution(spec, space);
                    const JointLp jlp = build_joint_lp(spec, space, eta);
                    double used = 0.0;
                    const LpSolution sol = solve_joint_lp(spec, space, jlp, eta, {.lp = lp_opts}, used);
                    row.status = lp_status_text(sol, used, lp_opts.tol);
                    if (!sol.optimal()) break;
                    row.lp_objective = sol.objective_value;
                    auto policy = std::make_shared<RandomizedPolicy>(
                        extract_policy(make_occupation_measure(spec, jlp, sol)));
                    fill_sim(row, run(StationaryScheduler(spec, policy), spec, cfg.sim));
                    break;
                }
                case PolicyKind::Truncated:
                case PolicyKind::LowerBound: {
                    if (!decomposed()) shared_ms = dms;
                    row.status = dstatus;
                    if (!dsol->optimal()) break;
                    row.lp_objective = lower_bound_value(*dsol);
                    if (kind == PolicyKind::Truncated) {
                        auto tp = std::make_shared<TruncatedPolicy>();
                        tp->per_source =
                            extract_per_source_policies(spec, *dlp, *dsol, kUnvisitedMassThreshold, UnvisitedFill::LagrangianGreedy);
                        fill_sim(row, run(TruncatedScheduler(spec, tp), spec, cfg.sim));
                    }
                    break;
                }
                case PolicyKind::Baseline:
                    fill_sim(row, run(BaselineScheduler(spec), spec, cfg.sim));
                    break;
                case PolicyKind::Idle:
                    fill_sim(row, run(IdleScheduler(), spec, cfg.sim));
                    break;
            }
        } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            row.status = "error: " + msg;
        }
        if (timing) row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count() + shared_ms;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    validate_config(cfg);
    ResultTable table;
    table.sweep = cfg.sweep;
    std::vector<std::vector<ResultRow>> per_point(cfg.grid.size());
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, cfg.grid.size()));
    if (threads == 1) {
        for (std::size_t g = 0; g < cfg.grid.size(); ++g) per_point[g] = run_point(cfg, cfg.grid[g], options.record_timing);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t g = w; g < cfg.grid.size(); g += threads)
                    per_point[g] = run_point(cfg, cfg.grid[g], options.record_timing);
            });
    }
    for (auto& rows : per_point) std::move(rows.begin(), rows.end(), std::back_inserter(table.rows));
    return table;
}

namespace {

std::string num10(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", *v);
    return buf;
}

}  // namespace

void emit_csv(const ResultTable& table, std::ostream& os) {
    if (table.rows.empty()) throw std::runtime_error("emit_csv: empty result table");
    os << kCsvHeader << "\n";
    for (const auto& r : table.rows) {
        os << num10(r.sweep_value) << "," << to_string(r.policy) << "," << num10(r.lp_objective) << ","
           << num10(r.sim_qaoi) << "," << num10(r.sim_qaoi_ci95) << "," << num10(r.sim_tr) << "," << num10(r.sim_sm)
           << "," << num10(r.wall_ms) << "," << r.status << "\n";
    }
}

void emit_csv(const ResultTable& table, const std::string& path) {
    if (table.rows.empty()) throw std::runtime_error("emit_csv: empty result table");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    emit_csv(table, out);
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace qaoi
