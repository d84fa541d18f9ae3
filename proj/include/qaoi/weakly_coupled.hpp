#pragma once

// Per-source decomposition of the scheduling CMDP: the per-slot channel
// constraint is relaxed so sources interact only through the shared budget
// rows. The relaxed LP yields a lower bound and per-source randomized
// policies, which a priority-based truncation step turns back into a
// feasible one-transmission-per-slot policy.

#include <span>
#include <vector>

#include "qaoi/lp.hpp"
#include "qaoi/model.hpp"
#include "qaoi/occupancy.hpp"

namespace qaoi {

/// How the sampling budget is shared among generate-at-will sources.
enum class SamplingBudgetMode {
    Shared,     ///< one row: total sampling rate <= gamma_sm
    PerSource,  ///< one row per generate-at-will source, each <= gamma_sm
};

struct DecomposedLp {
    LinearProgram lp;
    std::size_t states_per_source = 0;
    std::vector<std::size_t> offsets;  ///< first variable of each source block
    std::vector<std::vector<ActionKind>> actions;
    /// Index into lp.ineq of the sampling row each source is charged to; npos for random-arrival sources.
    std::vector<std::size_t> sampling_row;

    std::size_t var(std::size_t i, StateIndex s, std::size_t a) const {
        return offsets[i] + s * actions[i].size() + a;
    }
};

/// `per_source_eta[i]` is the first-slot law of source i over its own space.
DecomposedLp build_decomposed_lp(const SystemSpec& spec, const std::vector<std::vector<double>>& per_source_eta,
                                 SamplingBudgetMode mode = SamplingBudgetMode::Shared);
DecomposedLp build_decomposed_lp(const SystemSpec& spec, SamplingBudgetMode mode = SamplingBudgetMode::Shared);

/**
 * Solves the decomposed LP. Auto uses column generation: one pricing
 * problem per source, so the work per round is linear in the source count.
 * Row duals of the budget rows are always reported.
 */
LpSolution solve_decomposed_lp(const SystemSpec& spec, const DecomposedLp& dlp, const CmdpSolveOptions& options,
                               double& used_tol);
LpSolution solve_decomposed_lp(const SystemSpec& spec, const DecomposedLp& dlp, const CmdpSolveOptions& options = {});

class PerSourcePolicy {
public:
    PerSourcePolicy(std::size_t source, SourceKind kind, std::size_t num_states);

    std::size_t source() const { return source_; }
    SourceKind kind() const { return kind_; }
    const std::vector<ActionKind>& actions() const { return actions_; }
    std::size_t num_states() const { return num_states_; }

    std::span<const double> distribution(StateIndex k) const {
        return {probs_.data() + k * actions_.size(), actions_.size()};
    }
    std::span<double> distribution(StateIndex k) { return {probs_.data() + k * actions_.size(), actions_.size()}; }
    ActionKind sample(StateIndex k, double u) const;

    std::vector<double>& raw() { return probs_; }
    const std::vector<double>& raw() const { return probs_; }

private:
    std::size_t source_;
    SourceKind kind_;
    std::vector<ActionKind> actions_;
    std::size_t num_states_;
    std::vector<double> probs_;
};

/// Action taken in states the relaxed solution leaves (numerically) unvisited.
enum class UnvisitedFill {
    Idle,
    /// Greedy action of the per-source MDP with cost c + nu_tr d_tr + nu_sm d_sm,
    /// nu being the budget-row multipliers of the relaxed LP. Falls back to
    /// Idle when the backend reported no duals.
    LagrangianGreedy,
};

std::vector<PerSourcePolicy> extract_per_source_policies(const SystemSpec& spec, const DecomposedLp& dlp,
                                                         const LpSolution& sol,
                                                         double threshold = kUnvisitedMassThreshold,
                                                         UnvisitedFill fill = UnvisitedFill::Idle);

/// Deterministic optimal action per state of source i's Lagrangian MDP.
std::vector<std::size_t> lagrangian_greedy_actions(const SystemSpec& spec, std::size_t i, double nu_tr, double nu_sm);

/// Objective of the relaxed LP: a lower bound on the joint optimum.
double lower_bound_value(const LpSolution& sol);

/// Per-source discounted mass, transmission and sampling usage of a relaxed solution.
struct SourceUsage {
    double mass = 0.0;
    double tr = 0.0;
    double sm = 0.0;
};
std::vector<SourceUsage> per_source_usage(const DecomposedLp& dlp, const LpSolution& sol);

/// h = r (delta - theta) for random-arrival sources, r delta for generate-at-will.
double priority(SourceKind kind, const SourceState& s);

/// Conflict resolution among simultaneously scheduled sources.
enum class TieBreak {
    /// Highest priority; ties go to random-arrival sources (their packets
    /// cannot be regenerated), then to the smallest source index.
    RandomArrivalFirst,
};

/// Source indices ordered from most to least preferred in state `s`.
std::vector<std::size_t> priority_order(const SystemSpec& spec, const JointState& s,
                                        TieBreak tie = TieBreak::RandomArrivalFirst);

/**
 * Keeps at most one of the independently sampled per-source actions: the
 * non-Idle action of the source ranked first by priority_order. Dropped
 * SampleAndTransmit decisions take no sample.
 */
Action truncated_action(const SystemSpec& spec, const JointState& s, std::span<const ActionKind> sampled,
                        TieBreak tie = TieBreak::RandomArrivalFirst);

struct TruncatedPolicy {
    std::vector<PerSourcePolicy> per_source;
    TieBreak tie_break = TieBreak::RandomArrivalFirst;
};

/**
 * The truncated policy is itself stationary: its joint action law in a state
 * is P(winner j plays b) = f_j(b) * prod_{i ranked before j} f_i(Idle). This
 * materializes it so the exact evaluator applies.
 */
RandomizedPolicy to_joint_policy(const SystemSpec& spec, const StateSpace& space, const TruncatedPolicy& policy);

}  // namespace qaoi
