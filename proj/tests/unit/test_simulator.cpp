#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "qaoi/simulator.hpp"

using namespace qaoi;

namespace {

SystemSpec spec2(int cap, double p = 0.8, double lambda = 0.9) {
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(0.6, {0.7, 0.4}), SourceSpec::generate_at_will({0.7, 0.4})};
    s.p = p;
    s.age_cap = cap;
    s.discount = lambda;
    s.gamma_tr = 0.5;
    s.gamma_sm = 0.3;
    return s;
}

// Upper 0.999 quantile of chi-square with k degrees of freedom (Wilson-Hilferty).
double chi2_999(double k) {
    const double z = 3.090232306;
    const double a = 2.0 / (9.0 * k);
    return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

class FixedScheduler final : public SchedulingPolicy {
public:
    explicit FixedScheduler(Action a) : a_(a) {}
    Action decide(const JointState&, const DecisionContext&, CounterRng&) const override { return a_; }
    std::string name() const override { return "fixed"; }

private:
    Action a_;
};

}  // namespace

TEST(CounterRng, DeterministicAndIndependentStreams) {
    auto a = CounterRng::derive(1, 2, StreamPurpose::Channel);
    auto b = CounterRng::derive(1, 2, StreamPurpose::Channel);
    auto c = CounterRng::derive(1, 3, StreamPurpose::Channel);
    auto d = CounterRng::derive(1, 2, StreamPurpose::Query, 0);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        EXPECT_NE(x, c());
        EXPECT_NE(x, d());
    }
    double sum = 0;
    CounterRng u(42);
    for (int i = 0; i < 100000; ++i) {
        const double v = u.uniform();
        ASSERT_GE(v, 0.0);
        ASSERT_LT(v, 1.0);
        sum += v;
    }
    EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Step, PerfectChannelSample) {
    const auto s = spec2(20, 1.0);
    auto rng = RandomStreams::make(7, 0, 2);
    const JointState js{{{1, 3, 9}, {1, 9, 7}}};
    for (int i = 0; i < 200; ++i) {
        const auto o = step(s, js, Action::sample_and_transmit(1), rng);
        EXPECT_EQ(o.q[1], 1);
        EXPECT_EQ(o.q[0], 0);
        EXPECT_EQ(o.next.per_source[1].delta, 1);
        EXPECT_EQ(o.next.per_source[1].theta, 1);
    }
}

TEST(Step, IdleSlot) {
    const auto s = spec2(5);
    auto rng = RandomStreams::make(7, 0, 2);
    const JointState js{{{1, 3, 5}, {0, 2, 4}}};
    const auto channel_before = rng.channel.counter();
    for (int i = 0; i < 100; ++i) {
        const auto o = step(s, js, Action::idle(), rng);
        EXPECT_EQ(o.q, (std::vector<int>{0, 0}));
        EXPECT_EQ(o.next.per_source[0].delta, 5);
        EXPECT_EQ(o.next.per_source[1].delta, 5);
        EXPECT_EQ(o.arrivals[1], 0);
    }
    EXPECT_EQ(rng.channel.counter(), channel_before) << "channel stream only consumed on transmissions";
}

TEST(Step, EmpiricalFrequenciesMatchKernel) {
    const auto s = spec2(4, 0.6);
    const std::vector<std::pair<JointState, Action>> cases{
        {JointState{{{1, 1, 3}, {0, 2, 2}}}, Action::transmit(0)},
        {JointState{{{0, 4, 4}, {1, 0, 3}}}, Action::sample_and_transmit(1)},
        {JointState{{{1, 2, 2}, {1, 1, 4}}}, Action::retransmit(1)},
    };
    const int draws = 200000;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& [js, a] = cases[c];
        std::map<std::vector<int>, int> counts;
        auto key = [](const JointState& j) {
            std::vector<int> k;
            for (auto& p : j.per_source) k.insert(k.end(), {p.r, p.theta, p.delta});
            return k;
        };
        for (int i = 0; i < draws; ++i) {
            auto rng = RandomStreams::make(99 + c, static_cast<std::uint64_t>(i), 2);
            ++counts[key(step(s, js, a, rng).next)];
        }
        const auto law = joint_transition(s, js, a);
        double chi2 = 0;
        int seen = 0;
        for (const auto& o : law) {
            const double e = draws * o.probability;
            const double n = counts[key(o.value)];
            seen += static_cast<int>(n);
            chi2 += (n - e) * (n - e) / e;
            EXPECT_LT(std::abs(n - e), 4.0 * std::sqrt(e * (1 - o.probability)));
        }
        EXPECT_EQ(seen, draws) << "draws outside the kernel support";
        EXPECT_LT(chi2, chi2_999(static_cast<double>(law.size() - 1)));
    }
}

TEST(Run, IdleAlwaysQueryClosedFormZeroVariance) {
    SystemSpec s = spec2(2, 0.8, 0.5);
    for (auto& src : s.sources) src.query = {1.0, 0.0};
    SimConfig cfg;
    cfg.replications = 50;
    cfg.tail_tolerance = 1e-12;
    const auto m = run(IdleScheduler(), s, cfg);
    EXPECT_NEAR(m.qaoi_mean, 3.0, std::max(m.tail_bias, 1e-12));
    EXPECT_LE(m.tail_bias, 1e-12);
    EXPECT_EQ(m.qaoi_ci95, 0.0);
    for (double v : m.qaoi_raw) EXPECT_EQ(v, m.qaoi_raw.front());
    EXPECT_EQ(m.tr_mean, 0.0);
}

TEST(Run, ReproducibleAndThreadIndependent) {
    const auto s = spec2(4);
    SimConfig cfg;
    cfg.replications = 64;
    cfg.seed = 1234;
    const BaselineScheduler pol(s);
    const auto a = run(pol, s, cfg);
    cfg.threads = 4;
    const auto b = run(pol, s, cfg);
    EXPECT_EQ(a.qaoi_raw, b.qaoi_raw);
    EXPECT_EQ(a.tr_raw, b.tr_raw);
    EXPECT_EQ(a.qaoi_mean, b.qaoi_mean);
    EXPECT_EQ(a.qaoi_ci95, b.qaoi_ci95);
    cfg.seed = 1235;
    EXPECT_NE(run(pol, s, cfg).qaoi_raw, a.qaoi_raw);
}

TEST(Run, MeansWithinRawHull) {
    const auto s = spec2(4);
    SimConfig cfg;
    cfg.replications = 30;
    const auto m = run(BaselineScheduler(s), s, cfg);
    EXPECT_GE(m.qaoi_ci95, 0.0);
    EXPECT_GE(m.qaoi_mean, *std::min_element(m.qaoi_raw.begin(), m.qaoi_raw.end()));
    EXPECT_LE(m.qaoi_mean, *std::max_element(m.qaoi_raw.begin(), m.qaoi_raw.end()));
}

TEST(Run, OptimalPolicyMatchesExactValue) {
    const auto s = spec2(3);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto jlp = build_joint_lp(s, space, eta);
    const auto sol = solve_joint_lp(s, space, jlp, eta);
    ASSERT_TRUE(sol.optimal());
    auto pol = std::make_shared<RandomizedPolicy>(extract_policy(make_occupation_measure(s, jlp, sol)));
    const auto exact = evaluate_policy_exact(s, space, *pol, eta);
    SimConfig cfg;
    cfg.replications = 10000;
    cfg.threads = 4;
    const auto m = run(StationaryScheduler(s, pol), s, cfg);
    EXPECT_NEAR(m.qaoi_mean, exact.qaoi, 3 * m.qaoi_ci95 + m.tail_bias);
    EXPECT_NEAR(m.tr_mean, exact.avg_tr, 3 * m.tr_ci95 + 1e-9);
    EXPECT_NEAR(m.sm_mean, exact.avg_sm, 3 * m.sm_ci95 + 1e-9);
    EXPECT_LE(m.tr_mean, s.gamma_tr + m.tr_ci95);
    EXPECT_EQ(m.max_transmissions_per_slot, 1u);
    EXPECT_EQ(m.illegal_slots, 0u);
}

// 95% intervals should cover the exact value in roughly 95% of independent runs.
TEST(Run, ConfidenceIntervalCoverage) {
    const auto s = spec2(3);
    auto pol = std::make_shared<RandomizedPolicy>(idle_policy(s, StateSpace(s)));
    for (StateIndex k = 0; k < pol->num_states(); ++k) {
        auto d = pol->distribution(k);
        d[0] = 0.5;
        d[1] = 0.25;
        d[3] = 0.25;
    }
    const auto exact = evaluate_policy_exact(s, *pol).qaoi;
    const StationaryScheduler sched(s, pol);
    int covered = 0;
    const int runs = 100;
    for (int r = 0; r < runs; ++r) {
        SimConfig cfg;
        cfg.replications = 200;
        cfg.seed = 1000 + static_cast<std::uint64_t>(r);
        const auto m = run(sched, s, cfg);
        covered += std::abs(m.qaoi_mean - exact) <= m.qaoi_ci95;
    }
    // Binomial(100, 0.95): 88 is more than 3 standard deviations below the mean.
    EXPECT_GE(covered, 88);
}

TEST(Run, TruncatedSchedulerMatchesItsJointForm) {
    const auto s = spec2(3);
    const auto dlp = build_decomposed_lp(s);
    const auto sol = solve_decomposed_lp(s, dlp);
    ASSERT_TRUE(sol.optimal());
    auto tp = std::make_shared<TruncatedPolicy>();
    tp->per_source =
        extract_per_source_policies(s, dlp, sol, kUnvisitedMassThreshold, UnvisitedFill::LagrangianGreedy);
    const StateSpace space(s);
    const auto exact = evaluate_policy_exact(s, to_joint_policy(s, space, *tp));
    SimConfig cfg;
    cfg.replications = 10000;
    cfg.threads = 4;
    cfg.record_traces = false;
    const auto m = run(TruncatedScheduler(s, tp), s, cfg);
    EXPECT_NEAR(m.qaoi_mean, exact.qaoi, 3 * m.qaoi_ci95 + m.tail_bias);
    EXPECT_NEAR(m.tr_mean, exact.avg_tr, 3 * m.tr_ci95 + 1e-9);
    EXPECT_EQ(m.max_transmissions_per_slot, 1u);
    EXPECT_EQ(m.illegal_slots, 0u);
    EXPECT_GE(m.qaoi_mean + 3 * m.qaoi_ci95, lower_bound_value(sol));
}

TEST(Baseline, DecisionRule) {
    const auto s = spec2(20);
    const JointState ra_wins{{{1, 2, 9}, {1, 0, 3}}};
    const JointState gaw_wins{{{1, 2, 3}, {1, 0, 5}}};
    EXPECT_EQ(baseline_action(s, ra_wins, 0.6, 0.0), Action::idle());
    EXPECT_EQ(baseline_action(s, ra_wins, 0.5, 0.0), Action::transmit(0));
    EXPECT_EQ(baseline_action(s, gaw_wins, 0.1, 0.1), Action::sample_and_transmit(1));
    EXPECT_EQ(baseline_action(s, gaw_wins, 0.1, 0.31), Action::retransmit(1));
}

TEST(Baseline, RunningUsageStaysNearBudget) {
    auto s = spec2(6, 0.8, 0.95);
    s.gamma_tr = 0.2;
    SimConfig cfg;
    cfg.replications = 200;
    const auto m = run(BaselineScheduler(s), s, cfg);
    EXPECT_EQ(m.max_transmissions_per_slot, 1u);
    // Each slot adds at most (1-lambda) to the running usage once it is under budget.
    EXPECT_LE(m.tr_mean, s.gamma_tr + (1 - s.discount) + 1e-12);
}

TEST(Horizon, Formula) {
    const auto s = spec2(20, 0.8, 0.99);
    const auto t = horizon_for(s, 1e-6, 1'000'000);
    EXPECT_EQ(t, static_cast<std::size_t>(std::ceil(std::log(1e-6 * 0.01 / 80.0) / std::log(0.99))));
    EXPECT_LE(tail_bias_bound(s, t) * (1 - s.discount), 1e-6);
    auto slow = s;
    slow.discount = 0.99999;
    EXPECT_EQ(horizon_for(slow, 1e-6, 1'000'000), 1'000'000u);
}

TEST(Traces, HeaderAndRows) {
    const auto s = spec2(3);
    SimConfig cfg;
    cfg.replications = 2;
    cfg.horizon = 5;
    cfg.record_traces = true;
    const auto m = run(BaselineScheduler(s), s, cfg);
    ASSERT_EQ(m.traces.size(), 10u);
    std::ostringstream os;
    write_trace_csv(s, m.traces, os);
    const auto text = os.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "replication,t,r0,theta0,delta0,r1,theta1,delta1,action,q0,q1,cost");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 11);
    for (const auto& row : m.traces) {
        EXPECT_EQ(row.cost, qaoi_cost(row.state));
        int q = 0;
        for (std::size_t i = 0; i < row.q.size(); ++i) {
            q += row.q[i];
            if (row.q[i]) EXPECT_EQ(row.action.source, i);
        }
        EXPECT_LE(q, 1);
        if (row.action.is_idle()) EXPECT_EQ(q, 0);
    }
}

TEST(FirstState, LawMatchesFirstSlotDistribution) {
    const auto s = spec2(3);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    std::map<StateIndex, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto rng = RandomStreams::make(5, static_cast<std::uint64_t>(i), 2);
        ++counts[space.index_of(sample_first_state(s, rng))];
    }
    for (StateIndex k = 0; k < space.size(); ++k) {
        if (eta[k] == 0) {
            EXPECT_EQ(counts[k], 0);
            continue;
        }
        const double e = n * eta[k];
        EXPECT_LT(std::abs(counts[k] - e), 4.0 * std::sqrt(e * (1 - eta[k])));
    }
}

TEST(FixedScheduler, AlwaysTransmitUsage) {
    const auto s = spec2(3);
    SimConfig cfg;
    cfg.replications = 3;
    cfg.tail_tolerance = 1e-9;
    const auto m = run(FixedScheduler(Action::transmit(0)), s, cfg);
    EXPECT_NEAR(m.tr_mean, 1.0, 1e-8);
    EXPECT_EQ(m.sm_mean, 0.0);
}
