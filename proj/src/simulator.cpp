#include "qaoi/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

namespace qaoi {

RandomStreams RandomStreams::make(std::uint64_t seed, std::uint64_t replication, std::size_t num_sources) {
    RandomStreams r;
    for (std::size_t i = 0; i < num_sources; ++i) {
        r.arrival.push_back(CounterRng::derive(seed, replication, StreamPurpose::Arrival, i));
        r.query.push_back(CounterRng::derive(seed, replication, StreamPurpose::Query, i));
    }
    r.channel = CounterRng::derive(seed, replication, StreamPurpose::Channel);
    r.policy = CounterRng::derive(seed, replication, StreamPurpose::Policy);
    r.initial = CounterRng::derive(seed, replication, StreamPurpose::Initial);
    return r;
}

StepOutcome step(const SystemSpec& spec, const JointState& s, const Action& a, RandomStreams& rng) {
    const std::size_t n = spec.num_sources();
    const int cap = spec.age_cap;
    StepOutcome out;
    out.q.assign(n, 0);
    out.arrivals.assign(n, 0);
    out.next.per_source.resize(n);

    if (!a.is_idle()) out.q[a.source] = rng.channel.bernoulli(spec.p) ? 1 : 0;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& src = spec.sources[i];
        const SourceState& cur = s.per_source[i];
        SourceState& nx = out.next.per_source[i];

        const double u = rng.query[i].uniform();
        nx.r = cur.r == 1 ? (u < src.query.rho ? 1 : 0) : (u < src.query.rho_bar ? 0 : 1);

        const int th1 = clamp_age(cur.theta + 1, cap);
        const int de1 = clamp_age(cur.delta + 1, cap);
        const bool delivered = out.q[i] == 1;
        const ActionKind role = a.role_for(i);
        if (src.is_random_arrival()) {
            out.arrivals[i] = rng.arrival[i].bernoulli(src.mu) ? 1 : 0;
            nx.theta = out.arrivals[i] ? 0 : th1;
            nx.delta = delivered ? th1 : de1;
        } else if (role == ActionKind::SampleAndTransmit) {
            nx.theta = clamp_age(1, cap);
            nx.delta = delivered ? clamp_age(1, cap) : de1;
        } else {
            nx.theta = th1;
            nx.delta = delivered ? th1 : de1;
        }
    }
    return out;
}

JointState sample_first_state(const SystemSpec& spec, RandomStreams& rng) {
    JointState s0;
    for (const auto& src : spec.sources)
        s0.per_source.push_back({rng.initial.bernoulli(query_steady_state(src.query)) ? 1 : 0, 0, 0});
    return step(spec, s0, Action::idle(), rng).next;
}

StationaryScheduler::StationaryScheduler(const SystemSpec& spec, std::shared_ptr<const RandomizedPolicy> policy,
                                         std::string name)
    : space_(spec), policy_(std::move(policy)), name_(std::move(name)) {
    if (policy_->num_states() != space_.size()) throw ModelError("policy does not match the system's state space");
}

Action StationaryScheduler::decide(const JointState& s, const DecisionContext&, CounterRng& rng) const {
    return policy_->actions()[policy_->sample(space_.index_of(s), rng.uniform())];
}

TruncatedScheduler::TruncatedScheduler(const SystemSpec& spec, std::shared_ptr<const TruncatedPolicy> policy)
    : spec_(spec), space_(spec.age_cap), policy_(std::move(policy)) {
    if (policy_->per_source.size() != spec.num_sources()) throw ModelError("need one per-source policy per source");
}

Action TruncatedScheduler::decide(const JointState& s, const DecisionContext&, CounterRng& rng) const {
    std::vector<ActionKind> sampled(spec_.num_sources());
    for (std::size_t i = 0; i < sampled.size(); ++i)
        sampled[i] = policy_->per_source[i].sample(space_.index_of(s.per_source[i]), rng.uniform());
    return truncated_action(spec_, s, sampled, policy_->tie_break);
}

Action baseline_action(const SystemSpec& spec, const JointState& s, double running_tr, double running_sm) {
    if (running_tr > spec.gamma_tr) return Action::idle();
    const std::size_t winner = priority_order(spec, s).front();
    if (spec.sources[winner].is_random_arrival()) return Action::transmit(winner);
    return running_sm <= spec.gamma_sm ? Action::sample_and_transmit(winner) : Action::retransmit(winner);
}

std::size_t horizon_for(const SystemSpec& spec, double tail_tolerance, std::size_t max_horizon) {
    const double lambda = spec.discount;
    const double target = tail_tolerance * (1.0 - lambda) /
                          (2.0 * static_cast<double>(spec.num_sources()) * static_cast<double>(spec.age_cap));
    const double t = std::ceil(std::log(target) / std::log(lambda));
    if (!(t >= 1.0)) return 1;
    return std::min(max_horizon, static_cast<std::size_t>(t));
}

double tail_bias_bound(const SystemSpec& spec, std::size_t horizon) {
    return std::pow(spec.discount, static_cast<double>(horizon)) * static_cast<double>(spec.num_sources()) *
           static_cast<double>(spec.age_cap);
}

namespace {

struct ReplicationResult {
    double qaoi = 0.0, tr = 0.0, sm = 0.0;
    std::size_t max_tx = 0;
    std::size_t illegal = 0;
    std::vector<TraceRow> trace;
};

ReplicationResult run_replication(const SchedulingPolicy& policy, const SystemSpec& spec, const SimConfig& cfg,
                                  std::size_t horizon, std::size_t rep) {
    ReplicationResult res;
    RandomStreams rng = RandomStreams::make(cfg.seed, rep, spec.num_sources());
    JointState s = sample_first_state(spec, rng);
    const double lambda = spec.discount;
    const double scale = spec.discount_complement();
    DecisionContext ctx;
    double weight = scale;  // (1-lambda) lambda^{t-1}
    for (std::size_t t = 1; t <= horizon; ++t) {
        ctx.t = t;
        const Action a = policy.decide(s, ctx, rng.policy);
        if (!is_valid_action(spec, a)) ++res.illegal;
        const int cost = qaoi_cost(s);
        res.qaoi += weight * cost;
        res.tr += weight * tr_cost(a);
        res.sm += weight * sm_cost(a);
        ctx.running_tr += weight * tr_cost(a);
        ctx.running_sm += weight * sm_cost(a);
        res.max_tx = std::max<std::size_t>(res.max_tx, static_cast<std::size_t>(tr_cost(a)));
        StepOutcome o = step(spec, s, a, rng);
        if (cfg.record_traces) res.trace.push_back({rep, t, s, a, o.q, cost});
        s = std::move(o.next);
        weight *= lambda;
    }
    return res;
}

void summarize(const std::vector<double>& v, double& mean, double& ci) {
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    mean = sum / n;
    if (v.size() < 2) {
        ci = 0.0;
        return;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    ci = 1.96 * std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

SimMetrics run(const SchedulingPolicy& policy, const SystemSpec& spec, const SimConfig& cfg) {
    spec.validate();
    if (cfg.replications == 0) throw ModelError("replications must be >= 1");
    const std::size_t horizon = cfg.horizon > 0 ? cfg.horizon : horizon_for(spec, cfg.tail_tolerance, cfg.max_horizon);
    if (horizon == 0) throw ModelError("horizon must be >= 1");

    std::vector<ReplicationResult> results(cfg.replications);
    const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.replications));
    if (threads == 1) {
        for (std::size_t r = 0; r < cfg.replications; ++r) results[r] = run_replication(policy, spec, cfg, horizon, r);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t r = w; r < cfg.replications; r += threads)
                    results[r] = run_replication(policy, spec, cfg, horizon, r);
            });
    }

    SimMetrics m;
    m.horizon = horizon;
    m.tail_bias = tail_bias_bound(spec, horizon);
    for (auto& r : results) {
        m.qaoi_raw.push_back(r.qaoi);
        m.tr_raw.push_back(r.tr);
        m.sm_raw.push_back(r.sm);
        m.max_transmissions_per_slot = std::max(m.max_transmissions_per_slot, r.max_tx);
        m.illegal_slots += r.illegal;
        if (cfg.record_traces) std::move(r.trace.begin(), r.trace.end(), std::back_inserter(m.traces));
    }
    summarize(m.qaoi_raw, m.qaoi_mean, m.qaoi_ci95);
    summarize(m.tr_raw, m.tr_mean, m.tr_ci95);
    summarize(m.sm_raw, m.sm_mean, m.sm_ci95);
    return m;
}

std::string trace_header(const SystemSpec& spec) {
    std::string h = "replication,t";
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        const auto k = std::to_string(i);
        h += ",r" + k + ",theta" + k + ",delta" + k;
    }
    h += ",action";
    for (std::size_t i = 0; i < spec.num_sources(); ++i) h += ",q" + std::to_string(i);
    h += ",cost";
    return h;
}

void write_trace_csv(const SystemSpec& spec, const std::vector<TraceRow>& rows, std::ostream& os) {
    os << trace_header(spec) << "\n";
    for (const auto& row : rows) {
        os << row.replication << "," << row.t;
        for (const auto& s : row.state.per_source) os << "," << s.r << "," << s.theta << "," << s.delta;
        os << "," << to_string(row.action);
        for (int q : row.q) os << "," << q;
        os << "," << row.cost << "\n";
    }
}

}  // namespace qaoi
