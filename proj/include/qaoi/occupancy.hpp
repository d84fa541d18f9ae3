#pragma once

// Occupation-measure LP of the joint constrained MDP, extraction of the
// stationary randomized policy from its solution, and an exact
// linear-system evaluator used as an independent oracle.

#include <span>
#include <vector>

#include "qaoi/lp.hpp"
#include "qaoi/model.hpp"

namespace qaoi {

/**
 * Variables are laid out state-major over the retained states:
 * var(s, a) = position[s] * num_actions + a. With pruning, only states
 * reachable from the support of eta are retained; the occupation measure of
 * every other state is identically zero, so the optimum is unchanged.
 */
struct JointLp {
    static constexpr std::size_t kPruned = static_cast<std::size_t>(-1);

    LinearProgram lp;
    std::size_t num_states = 0;  ///< full |S|
    std::size_t num_actions = 0;
    std::vector<Action> actions;
    std::vector<StateIndex> states;    ///< retained states, ascending
    std::vector<std::size_t> position;  ///< |S| entries, kPruned for dropped states

    bool retained(StateIndex s) const { return position[s] != kPruned; }
    std::size_t var(StateIndex s, ActionId a) const { return position[s] * num_actions + a; }
};

struct JointLpOptions {
    bool prune_unreachable = true;
};

/// `eta` is the law of the first decision slot (see first_slot_distribution).
JointLp build_joint_lp(const SystemSpec& spec, const StateSpace& space, std::span<const double> eta,
                       const JointLpOptions& options = {});
JointLp build_joint_lp(const SystemSpec& spec, std::uint64_t limit = kDefaultEnumerationLimit);

/// States reachable with positive probability from the support of `eta` under some action sequence.
std::vector<bool> reachable_states(const SystemSpec& spec, const StateSpace& space, std::span<const double> eta);

enum class CmdpMethod {
    Auto,              ///< generic LP backend for small instances, column generation otherwise
    GenericLp,         ///< hand the assembled LP to solve()
    ColumnGeneration,  ///< Dantzig-Wolfe over deterministic stationary policies
};

struct CmdpSolveOptions {
    SolveOptions lp;
    CmdpMethod method = CmdpMethod::Auto;
    /// Auto uses the generic backend up to this many balance rows.
    std::size_t generic_row_limit = 2000;
    std::size_t max_rounds = 500;
    std::size_t max_policy_iterations = 200;
};

/**
 * Solves the joint LP. Column generation keeps a master LP over the
 * occupation measures of deterministic policies (two budget rows plus
 * convexity) and prices new columns by policy iteration on the
 * Lagrangian cost c + nu_tr d_tr + nu_sm d_sm. It stops when no column has
 * negative reduced cost, i.e. the Lagrangian bound meets the master
 * objective. Either way the returned x is laid out as jlp's variables and
 * validated against jlp.lp at options.lp.tol; on NumericalFailure the
 * validation is retried once at kRelaxedLpTolerance and `used_tol` reports
 * the tolerance met.
 */
LpSolution solve_joint_lp(const SystemSpec& spec, const StateSpace& space, const JointLp& jlp,
                          std::span<const double> eta, const CmdpSolveOptions& options, double& used_tol);
LpSolution solve_joint_lp(const SystemSpec& spec, const StateSpace& space, const JointLp& jlp,
                          std::span<const double> eta, const CmdpSolveOptions& options = {});

struct OccupationMeasure {
    SystemSpec spec;
    std::size_t num_states = 0;
    std::vector<Action> actions;
    std::vector<double> x;  // state-major over the full space, |S| * |A|

    double mass(StateIndex s, ActionId a) const { return x[s * actions.size() + a]; }
    double state_mass(StateIndex s) const;
    double total_mass() const;
};

OccupationMeasure make_occupation_measure(const SystemSpec& spec, const JointLp& jlp, const LpSolution& sol);

/// Stationary randomized joint policy: a distribution over `actions` per state.
class RandomizedPolicy {
public:
    RandomizedPolicy() = default;
    RandomizedPolicy(std::vector<Action> actions, std::size_t num_states);

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return actions_.size(); }
    const std::vector<Action>& actions() const { return actions_; }

    std::span<const double> distribution(StateIndex s) const {
        return {probs_.data() + s * actions_.size(), actions_.size()};
    }
    std::span<double> distribution(StateIndex s) { return {probs_.data() + s * actions_.size(), actions_.size()}; }
    double probability(StateIndex s, ActionId a) const { return probs_[s * actions_.size() + a]; }

    /// Inverse-CDF draw with u in [0,1).
    ActionId sample(StateIndex s, double u) const;

    /// Largest |sum - 1| over states.
    double max_normalization_error() const;

    const std::vector<double>& raw() const { return probs_; }
    std::vector<double>& raw() { return probs_; }

private:
    std::vector<Action> actions_;
    std::size_t num_states_ = 0;
    std::vector<double> probs_;
};

inline constexpr double kUnvisitedMassThreshold = 1e-9;

/**
 * f(s,a) = x(s,a) / sum_a' x(s,a'). Round-off negatives are clipped to zero
 * first. States whose mass is at most `threshold` times the total mass are
 * treated as unvisited and get the deterministic Idle action (action 0).
 */
RandomizedPolicy extract_policy(const OccupationMeasure& m, double threshold = kUnvisitedMassThreshold);

/// Row-normalization shared with the per-source extraction.
void normalize_rows(std::span<const double> x, std::size_t num_actions, double abs_threshold,
                    std::span<double> out);

struct PolicyValue {
    double qaoi = 0.0;
    double avg_tr = 0.0;
    double avg_sm = 0.0;
};

/**
 * Discounted averages (1-lambda) * eta . v with (I - lambda P_pi) v = cost,
 * for the QAoI, transmission and sampling costs, by one sparse LU
 * factorization and three back-substitutions.
 */
PolicyValue evaluate_policy_exact(const SystemSpec& spec, const StateSpace& space, const RandomizedPolicy& policy,
                                  std::span<const double> eta);
PolicyValue evaluate_policy_exact(const SystemSpec& spec, const RandomizedPolicy& policy);

/// Every state deterministically Idle.
RandomizedPolicy idle_policy(const SystemSpec& spec, const StateSpace& space);

}  // namespace qaoi
