#pragma once

// Parameter sweeps over solved and simulated policies, emitted as CSV.

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qaoi/model.hpp"
#include "qaoi/simulator.hpp"
#include "qaoi/weakly_coupled.hpp"

namespace qaoi {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SweepParam { GammaTr, P, SourceCount };
enum class PolicyKind { Optimal, Truncated, LowerBound, Baseline, Idle };

std::string to_string(SweepParam p);
std::string to_string(PolicyKind p);

inline constexpr std::uint64_t kJointGuardStates = 1'000'000;

struct ExperimentConfig {
    SystemSpec base;
    SweepParam sweep = SweepParam::GammaTr;
    std::vector<double> grid;
    std::vector<PolicyKind> policies;
    SimConfig sim;
    std::string output;
    bool allow_large_joint = false;
    SamplingBudgetMode sampling_budget = SamplingBudgetMode::Shared;
    double lp_tolerance = 1e-8;
};

/**
 * Builds a config from its JSON document. Keys mirror the field names:
 *   sources, p, N, lambda, gamma_tr, gamma_sm,
 *   sweep {param, values}, policies, sim {...}, output,
 *   allow_large_joint, sampling_budget, lp_tolerance.
 * Unknown keys, wrong types and out-of-domain values raise ConfigError.
 */
ExperimentConfig parse_config(const nlohmann::json& doc);
// allow_large_joint overrides the document's flag before validation.
ExperimentConfig load_config(const std::string& path, bool allow_large_joint = false);

/// Checks cross-field invariants (grid domains, joint-LP size guard).
void validate_config(const ExperimentConfig& cfg);

/// Instance at one grid point. For source_count sweeps the listed sources are
/// templates: the first random-arrival and first generate-at-will entries are
/// alternated (RA, GAW, RA, ...) up to the requested count.
SystemSpec spec_at(const ExperimentConfig& cfg, double value);

struct ResultRow {
    double sweep_value = 0.0;
    PolicyKind policy = PolicyKind::Idle;
    std::optional<double> lp_objective;
    std::optional<double> sim_qaoi, sim_qaoi_ci95, sim_tr, sim_sm;
    std::optional<double> wall_ms;
    std::string status = "ok";
};

struct ResultTable {
    SweepParam sweep = SweepParam::GammaTr;
    std::vector<ResultRow> rows;  ///< grid-major, policy-minor

    /// Rows whose status does not start with "ok" (a relaxed LP tolerance still counts as ok).
    std::size_t failures() const;
};

struct RunOptions {
    std::size_t threads = 1;
    /// Wall-clock columns make the CSV nondeterministic; off by default.
    bool record_timing = false;
};

ResultTable run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

inline constexpr const char* kCsvHeader =
    "sweep_param,policy,lp_objective,sim_qaoi,sim_qaoi_ci95,sim_tr,sim_sm,wall_ms,status";

void emit_csv(const ResultTable& table, std::ostream& os);
/// Throws std::runtime_error on I/O failure or an empty table.
void emit_csv(const ResultTable& table, const std::string& path);

}  // namespace qaoi
