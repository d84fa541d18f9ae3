#pragma once

// System instance, CMDP state/action spaces, transition kernels and slot costs
// for a heterogeneous status-update system (random-arrival and
// generate-at-will sources sharing one lossy channel).

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qaoi {

using StateIndex = std::size_t;
using ActionId = std::size_t;

/// Thrown when a spec or an argument violates a documented precondition.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two-state query chain with no unique stationary law (rho = rho_bar = 1).
class DegenerateChainError : public ModelError {
public:
    using ModelError::ModelError;
};

class StateSpaceTooLarge : public ModelError {
public:
    StateSpaceTooLarge(std::uint64_t size, std::uint64_t limit);
    std::uint64_t size() const { return size_; }

private:
    std::uint64_t size_;
};

/// Per-source query process. rho: P(1 -> 1), rho_bar: P(0 -> 0).
struct QueryChain {
    double rho = 0.0;
    double rho_bar = 0.0;
};

enum class SourceKind { RandomArrival, GenerateAtWill };

struct SourceSpec {
    SourceKind kind = SourceKind::GenerateAtWill;
    /// Bernoulli arrival rate; only meaningful for random-arrival sources.
    double mu = 0.0;
    QueryChain query;

    static SourceSpec random_arrival(double mu, QueryChain query) {
        return {SourceKind::RandomArrival, mu, query};
    }
    static SourceSpec generate_at_will(QueryChain query) {
        return {SourceKind::GenerateAtWill, 0.0, query};
    }
    bool is_random_arrival() const { return kind == SourceKind::RandomArrival; }
};

struct SystemSpec {
    std::vector<SourceSpec> sources;
    double p = 1.0;            ///< channel success probability
    int age_cap = 1;           ///< N
    double discount = 0.9;     ///< lambda in (0,1)
    double gamma_tr = 1.0;     ///< transmission budget
    double gamma_sm = 1.0;     ///< sampling budget

    double discount_complement() const { return 1.0 - discount; }
    std::size_t num_sources() const { return sources.size(); }
    std::size_t num_random_arrival() const;
    std::size_t num_generate_at_will() const;

    /// Throws ModelError on the first violated invariant.
    void validate() const;
    /// Stable 64-bit fingerprint (FNV-1a over a canonical text rendering).
    std::uint64_t hash() const;
    std::string canonical() const;
};

struct SourceState {
    int r = 0;
    int theta = 0;
    int delta = 0;
    auto operator<=>(const SourceState&) const = default;
};

struct JointState {
    std::vector<SourceState> per_source;
    bool operator==(const JointState&) const = default;
};

enum class ActionKind : std::uint8_t { Idle, Transmit, Retransmit, SampleAndTransmit };

/// One scheduling decision per slot. `source` is ignored for Idle.
struct Action {
    ActionKind kind = ActionKind::Idle;
    std::size_t source = 0;

    static constexpr Action idle() { return {}; }
    static constexpr Action transmit(std::size_t i) { return {ActionKind::Transmit, i}; }
    static constexpr Action retransmit(std::size_t i) { return {ActionKind::Retransmit, i}; }
    static constexpr Action sample_and_transmit(std::size_t i) {
        return {ActionKind::SampleAndTransmit, i};
    }

    constexpr bool is_idle() const { return kind == ActionKind::Idle; }
    bool operator==(const Action& o) const {
        return kind == o.kind && (kind == ActionKind::Idle || source == o.source);
    }
    /// Role this action plays for source `i` (Idle unless it targets i).
    constexpr ActionKind role_for(std::size_t i) const { return (!is_idle() && source == i) ? kind : ActionKind::Idle; }
};

std::string to_string(const Action& a);
std::string to_string(ActionKind k);

template <class T>
struct Outcome {
    T value;
    double probability;
};

/// Throws ModelError if `a` is not admissible for `spec`.
void check_action(const SystemSpec& spec, const Action& a);
bool is_valid_action(const SystemSpec& spec, const Action& a);

/// Dense joint action enumeration: Idle first, then per source in spec order
/// (Transmit for random-arrival, Retransmit and SampleAndTransmit for
/// generate-at-will).
std::vector<Action> joint_actions(const SystemSpec& spec);
ActionId action_id(const SystemSpec& spec, const Action& a);

/// Per-source action set: {Idle, Transmit} or {Idle, Retransmit, SampleAndTransmit}.
std::vector<ActionKind> source_actions(SourceKind kind);

// ---------------------------------------------------------------------------
// Kernels and costs

constexpr int clamp_age(int v, int cap) { return v < cap ? v : cap; }

/// Distribution of the next query flag given the current one.
std::vector<Outcome<int>> query_transition(const QueryChain& chain, int r);

/// Stationary probability of r = 1.
double query_steady_state(const QueryChain& chain);

/**
 * Next-state law of one source under its action role: product of the query
 * kernel and the age-pair kernel. Duplicate support points (which appear when
 * the age cap collapses two branches) are merged; zero-probability branches
 * are dropped. Support is sorted by (r, theta, delta).
 */
std::vector<Outcome<SourceState>> source_transition(const SourceSpec& source, double p, int cap,
                                                    const SourceState& state, ActionKind role);

std::vector<Outcome<JointState>> joint_transition(const SystemSpec& spec, const JointState& s,
                                                  const Action& a);

int qaoi_cost(const JointState& s);
int qaoi_cost(const SourceState& s);
constexpr int tr_cost(const Action& a) { return a.is_idle() ? 0 : 1; }
constexpr int sm_cost(const Action& a) { return a.kind == ActionKind::SampleAndTransmit ? 1 : 0; }
constexpr int tr_cost(ActionKind k) { return k == ActionKind::Idle ? 0 : 1; }
constexpr int sm_cost(ActionKind k) { return k == ActionKind::SampleAndTransmit ? 1 : 0; }

// ---------------------------------------------------------------------------
// State spaces

/// Dense (r, theta, delta) indexing of one source: r outermost, delta innermost.
class SourceStateSpace {
public:
    explicit SourceStateSpace(int cap) : cap_(cap), side_(static_cast<std::size_t>(cap) + 1) {}

    std::size_t size() const { return 2 * side_ * side_; }
    int age_cap() const { return cap_; }

    StateIndex index_of(const SourceState& s) const {
        return (static_cast<std::size_t>(s.r) * side_ + static_cast<std::size_t>(s.theta)) * side_ +
               static_cast<std::size_t>(s.delta);
    }
    SourceState state(StateIndex k) const {
        SourceState s;
        s.delta = static_cast<int>(k % side_);
        k /= side_;
        s.theta = static_cast<int>(k % side_);
        s.r = static_cast<int>(k / side_);
        return s;
    }

private:
    int cap_;
    std::size_t side_;
};

inline constexpr std::uint64_t kDefaultEnumerationLimit = 10'000'000;

/// Exact size of the joint state space, saturating at UINT64_MAX.
std::uint64_t joint_state_count(const SystemSpec& spec);

/**
 * Mixed-radix enumeration of joint states (source 0 outermost). States are
 * decoded on demand rather than materialized, so a space with ~10^6 states
 * costs no more than the SystemSpec itself.
 */
class StateSpace {
public:
    StateSpace(const SystemSpec& spec, std::uint64_t limit = kDefaultEnumerationLimit);

    std::size_t size() const { return size_; }
    std::size_t num_sources() const { return num_sources_; }
    const SourceStateSpace& source_space() const { return source_space_; }

    JointState state(StateIndex k) const;
    StateIndex index_of(const JointState& s) const;

    /// Per-source state index of source `i` inside joint index `k`.
    StateIndex source_index(StateIndex k, std::size_t i) const {
        return (k / strides_[i]) % source_space_.size();
    }
    std::size_t stride(std::size_t i) const { return strides_[i]; }

private:
    SourceStateSpace source_space_;
    std::size_t num_sources_;
    std::size_t size_;
    std::vector<std::size_t> strides_;
};

inline StateSpace enumerate_states(const SystemSpec& spec, std::uint64_t limit = kDefaultEnumerationLimit) {
    return StateSpace(spec, limit);
}

/**
 * Precomputed per-source kernels indexed by (source, per-source state, role).
 * Joint transitions are products of these rows; building them once avoids
 * re-deriving branches for every joint (state, action) pair.
 */
class KernelTable {
public:
    KernelTable(const SystemSpec& spec, const SourceStateSpace& space);

    using Row = std::vector<Outcome<StateIndex>>;
    /// Row for source `i` in per-source state `k` under `role`.
    const Row& row(std::size_t i, StateIndex k, ActionKind role) const;

    /// Sparse joint next-state law over joint indices, written into `out`
    /// (cleared first). Products are accumulated without merging: distinct
    /// per-source outcomes always map to distinct joint indices.
    void joint_row(const StateSpace& space, StateIndex s, const Action& a,
                   std::vector<Outcome<StateIndex>>& out) const;

private:
    std::size_t per_source_;
    std::vector<std::vector<Row>> rows_;  // [source][k * 4 + role]
};

/// Law of the zero-age state s(0): flags independent, steady-state marginals.
std::vector<double> initial_distribution(const SystemSpec& spec, const StateSpace& space);

/**
 * Law of s(1), the first decision slot: one Idle step from
 * initial_distribution. Costs are accounted from this slot onward, so this is
 * the initial distribution fed to the occupation-measure LPs, the exact
 * evaluator and the simulator.
 */
std::vector<double> first_slot_distribution(const SystemSpec& spec, const StateSpace& space);

/// Per-source analogues over a SourceStateSpace.
std::vector<double> source_initial_distribution(const SourceSpec& source, const SourceStateSpace& space);
std::vector<double> source_first_slot_distribution(const SourceSpec& source, double p,
                                                   const SourceStateSpace& space);

}  // namespace qaoi
