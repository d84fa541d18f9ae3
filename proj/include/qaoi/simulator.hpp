#pragma once

// Slotted Monte-Carlo simulation of the status-update system under any
// scheduling policy, with discounted QAoI / transmission / sampling
// estimators and normal-approximation confidence intervals.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "qaoi/model.hpp"
#include "qaoi/occupancy.hpp"
#include "qaoi/rng.hpp"
#include "qaoi/weakly_coupled.hpp"

namespace qaoi {

/// Independent streams for one replication, one per (purpose, source).
struct RandomStreams {
    std::vector<CounterRng> arrival;
    std::vector<CounterRng> query;
    CounterRng channel;
    CounterRng policy;
    CounterRng initial;

    static RandomStreams make(std::uint64_t seed, std::uint64_t replication, std::size_t num_sources);
};

struct StepOutcome {
    std::vector<int> q;         ///< 1 iff source i was transmitted and received
    std::vector<int> arrivals;  ///< 1 iff a packet arrived (random-arrival sources only)
    JointState next;
};

/**
 * One slot forward. Every slot draws one query uniform per source and one
 * arrival uniform per random-arrival source; the channel stream is consumed
 * only when `a` transmits. Next-state law equals joint_transition(spec, s, a).
 */
StepOutcome step(const SystemSpec& spec, const JointState& s, const Action& a, RandomStreams& rng);

/// State of the discounted running usage, available to adaptive policies.
struct DecisionContext {
    std::size_t t = 1;
    double running_tr = 0.0;  ///< (1-lambda) sum_{tau<t} lambda^{tau-1} 1{a(tau) != Idle}
    double running_sm = 0.0;
};

class SchedulingPolicy {
public:
    virtual ~SchedulingPolicy() = default;
    /// Must be safe to call concurrently from several replications.
    virtual Action decide(const JointState& s, const DecisionContext& ctx, CounterRng& rng) const = 0;
    virtual std::string name() const = 0;
};

class IdleScheduler final : public SchedulingPolicy {
public:
    Action decide(const JointState&, const DecisionContext&, CounterRng&) const override { return Action::idle(); }
    std::string name() const override { return "idle"; }
};

/// Draws from a stationary joint RandomizedPolicy.
class StationaryScheduler final : public SchedulingPolicy {
public:
    StationaryScheduler(const SystemSpec& spec, std::shared_ptr<const RandomizedPolicy> policy,
                        std::string name = "optimal");
    Action decide(const JointState& s, const DecisionContext& ctx, CounterRng& rng) const override;
    std::string name() const override { return name_; }

private:
    StateSpace space_;
    std::shared_ptr<const RandomizedPolicy> policy_;
    std::string name_;
};

/// Per-source draws followed by priority truncation.
class TruncatedScheduler final : public SchedulingPolicy {
public:
    TruncatedScheduler(const SystemSpec& spec, std::shared_ptr<const TruncatedPolicy> policy);
    Action decide(const JointState& s, const DecisionContext& ctx, CounterRng& rng) const override;
    std::string name() const override { return "truncated"; }

private:
    SystemSpec spec_;
    SourceStateSpace space_;
    std::shared_ptr<const TruncatedPolicy> policy_;
};

/**
 * Greedy benchmark: while the running transmission usage is within budget,
 * serve the highest-priority source; a generate-at-will winner gets a fresh
 * sample while the running sampling usage is within budget, otherwise a
 * retransmission. Idle once the transmission budget is exceeded.
 */
Action baseline_action(const SystemSpec& spec, const JointState& s, double running_tr, double running_sm);

class BaselineScheduler final : public SchedulingPolicy {
public:
    explicit BaselineScheduler(SystemSpec spec) : spec_(std::move(spec)) {}
    Action decide(const JointState& s, const DecisionContext& ctx, CounterRng&) const override {
        return baseline_action(spec_, s, ctx.running_tr, ctx.running_sm);
    }
    std::string name() const override { return "baseline"; }

private:
    SystemSpec spec_;
};

struct SimConfig {
    std::size_t horizon = 0;  ///< 0: derive from tail_tolerance
    double tail_tolerance = 1e-6;
    std::size_t max_horizon = 1'000'000;
    std::size_t replications = 1000;
    std::uint64_t seed = 1;
    bool record_traces = false;
    std::size_t threads = 1;
};

/// ceil(ln(eps (1-lambda) / (2 n N)) / ln lambda), capped at max_horizon.
std::size_t horizon_for(const SystemSpec& spec, double tail_tolerance, std::size_t max_horizon);
/// Upper bound on the discounted cost mass beyond slot T: lambda^T n N.
double tail_bias_bound(const SystemSpec& spec, std::size_t horizon);

struct TraceRow {
    std::size_t replication;
    std::size_t t;
    JointState state;
    Action action;
    std::vector<int> q;
    int cost;
};

struct SimMetrics {
    double qaoi_mean = 0.0, qaoi_ci95 = 0.0;
    double tr_mean = 0.0, tr_ci95 = 0.0;
    double sm_mean = 0.0, sm_ci95 = 0.0;
    std::vector<double> qaoi_raw, tr_raw, sm_raw;
    std::size_t horizon = 0;
    double tail_bias = 0.0;
    /// Max over slots of non-Idle actions taken (at most 1 by construction).
    std::size_t max_transmissions_per_slot = 0;
    std::size_t illegal_slots = 0;
    std::vector<TraceRow> traces;
};

/// Deterministic in (policy, spec, config); independent of config.threads.
SimMetrics run(const SchedulingPolicy& policy, const SystemSpec& spec, const SimConfig& config);

/// Samples s(1): zero ages with steady-state flags at slot 0, then one Idle step.
JointState sample_first_state(const SystemSpec& spec, RandomStreams& rng);

void write_trace_csv(const SystemSpec& spec, const std::vector<TraceRow>& rows, std::ostream& os);
std::string trace_header(const SystemSpec& spec);

}  // namespace qaoi
