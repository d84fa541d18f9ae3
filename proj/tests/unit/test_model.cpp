#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "qaoi/model.hpp"

using namespace qaoi;

namespace {

SystemSpec two_source_spec(int cap, double p = 0.5) {
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(0.6, {0.7, 0.4}), SourceSpec::generate_at_will({0.7, 0.4})};
    s.p = p;
    s.age_cap = cap;
    s.discount = 0.9;
    s.gamma_tr = 0.5;
    s.gamma_sm = 0.3;
    return s;
}

std::map<std::pair<int, int>, double> age_pairs(const std::vector<Outcome<SourceState>>& out) {
    std::map<std::pair<int, int>, double> m;
    for (const auto& o : out) m[{o.value.theta, o.value.delta}] += o.probability;
    return m;
}

// Reference age-pair kernel written directly from the branch table.
std::map<std::pair<int, int>, double> reference_ages(const SourceSpec& src, double p, int n, int theta, int delta,
                                                     ActionKind a) {
    std::map<std::pair<int, int>, double> m;
    auto c = [n](int v) { return std::min(v, n); };
    if (src.is_random_arrival()) {
        const double mu = src.mu;
        if (a == ActionKind::Idle) {
            m[{0, c(delta + 1)}] += mu;
            m[{c(theta + 1), c(delta + 1)}] += 1 - mu;
        } else {
            m[{0, c(theta + 1)}] += mu * p;
            m[{0, c(delta + 1)}] += mu * (1 - p);
            m[{c(theta + 1), c(theta + 1)}] += (1 - mu) * p;
            m[{c(theta + 1), c(delta + 1)}] += (1 - mu) * (1 - p);
        }
    } else {
        if (a == ActionKind::Idle) {
            m[{c(theta + 1), c(delta + 1)}] += 1;
        } else if (a == ActionKind::Retransmit) {
            m[{c(theta + 1), c(theta + 1)}] += p;
            m[{c(theta + 1), c(delta + 1)}] += 1 - p;
        } else {
            m[{1, 1}] += p;
            m[{1, c(delta + 1)}] += 1 - p;
        }
    }
    std::erase_if(m, [](const auto& kv) { return kv.second == 0.0; });
    return m;
}

}  // namespace

TEST(ClampAge, Examples) {
    EXPECT_EQ(clamp_age(5, 20), 5);
    EXPECT_EQ(clamp_age(21, 20), 20);
    EXPECT_EQ(clamp_age(20, 20), 20);
}

TEST(QueryTransition, Examples) {
    auto a = query_transition({0.7, 0.4}, 1);
    std::map<int, double> m;
    for (auto& o : a) m[o.value] = o.probability;
    EXPECT_DOUBLE_EQ(m[1], 0.7);
    EXPECT_NEAR(m[0], 0.3, 1e-15);

    m.clear();
    for (auto& o : query_transition({0.7, 0.4}, 0)) m[o.value] = o.probability;
    EXPECT_DOUBLE_EQ(m[0], 0.4);
    EXPECT_DOUBLE_EQ(m[1], 0.6);

    auto c = query_transition({1.0, 0.0}, 1);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].value, 1);
    EXPECT_EQ(c[0].probability, 1.0);
}

TEST(QuerySteadyState, Examples) {
    EXPECT_NEAR(query_steady_state({0.7, 0.4}), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(query_steady_state({0.7, 0.7}), 0.5, 1e-15);
    EXPECT_EQ(query_steady_state({1.0, 0.0}), 1.0);
    EXPECT_EQ(query_steady_state({1.0, 0.5}), 1.0);
    EXPECT_EQ(query_steady_state({0.5, 1.0}), 0.0);
    EXPECT_THROW(query_steady_state({1.0, 1.0}), DegenerateChainError);
}

TEST(QuerySteadyState, SatisfiesBalance) {
    for (double rho : {0.0, 0.2, 0.7, 0.95})
        for (double rb : {0.0, 0.3, 0.9}) {
            const double pi1 = query_steady_state({rho, rb});
            EXPECT_NEAR(pi1 * rho + (1 - pi1) * (1 - rb), pi1, 1e-14);
        }
}

TEST(SourceTransition, RandomArrivalTransmit) {
    const auto src = SourceSpec::random_arrival(0.6, {0.7, 0.4});
    const auto out = source_transition(src, 0.5, 20, {1, 2, 5}, ActionKind::Transmit);
    const auto m = age_pairs(out);
    ASSERT_EQ(m.size(), 4u);
    EXPECT_NEAR(m.at({0, 3}), 0.30, 1e-15);
    EXPECT_NEAR(m.at({0, 6}), 0.30, 1e-15);
    EXPECT_NEAR(m.at({3, 3}), 0.20, 1e-15);
    EXPECT_NEAR(m.at({3, 6}), 0.20, 1e-15);
}

TEST(SourceTransition, GenerateAtWillSample) {
    const auto src = SourceSpec::generate_at_will({0.7, 0.4});
    const auto m = age_pairs(source_transition(src, 0.5, 20, {1, 9, 7}, ActionKind::SampleAndTransmit));
    ASSERT_EQ(m.size(), 2u);
    EXPECT_NEAR(m.at({1, 1}), 0.5, 1e-15);
    EXPECT_NEAR(m.at({1, 8}), 0.5, 1e-15);
}

TEST(SourceTransition, SaturatedIdle) {
    const auto src = SourceSpec::generate_at_will({1.0, 0.0});
    const auto out = source_transition(src, 0.5, 7, {1, 7, 7}, ActionKind::Idle);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].value, (SourceState{1, 7, 7}));
    EXPECT_EQ(out[0].probability, 1.0);
}

TEST(SourceTransition, KindMismatchThrows) {
    const auto ra = SourceSpec::random_arrival(0.5, {0.5, 0.5});
    const auto gaw = SourceSpec::generate_at_will({0.5, 0.5});
    EXPECT_THROW(source_transition(ra, 0.5, 3, {0, 1, 1}, ActionKind::SampleAndTransmit), ModelError);
    EXPECT_THROW(source_transition(ra, 0.5, 3, {0, 1, 1}, ActionKind::Retransmit), ModelError);
    EXPECT_THROW(source_transition(gaw, 0.5, 3, {0, 1, 1}, ActionKind::Transmit), ModelError);
}

// Exhaustive comparison with the branch table, query factor included.
TEST(SourceTransition, MatchesReferenceKernelEverywhere) {
    const int n = 4;
    for (const auto& src : {SourceSpec::random_arrival(0.35, {0.8, 0.3}), SourceSpec::generate_at_will({0.8, 0.3})})
        for (double p : {0.25, 1.0})
            for (int r = 0; r <= 1; ++r)
                for (int th = 0; th <= n; ++th)
                    for (int de = 0; de <= n; ++de)
                        for (ActionKind a : source_actions(src.kind)) {
                            const auto out = source_transition(src, p, n, {r, th, de}, a);
                            const auto ref = reference_ages(src, p, n, th, de, a);
                            std::map<SourceState, double> got, want;
                            for (const auto& o : out) {
                                ASSERT_GT(o.probability, 0.0);
                                got[o.value] += o.probability;
                            }
                            ASSERT_EQ(got.size(), out.size()) << "duplicate support points";
                            for (const auto& q : query_transition(src.query, r))
                                for (const auto& [ages, pr] : ref)
                                    if (q.probability * pr > 0)
                                        want[{q.value, ages.first, ages.second}] += q.probability * pr;
                            ASSERT_EQ(got.size(), want.size());
                            for (const auto& [st, pr] : want) EXPECT_NEAR(got[st], pr, 1e-14);
                            EXPECT_TRUE(std::is_sorted(out.begin(), out.end(),
                                                       [](auto& x, auto& y) { return x.value < y.value; }));
                        }
}

TEST(SourceTransition, GenerateAtWillThetaDeterministicUnderIdleAndRetransmit) {
    const auto src = SourceSpec::generate_at_will({0.6, 0.6});
    for (int th = 0; th <= 5; ++th)
        for (ActionKind a : {ActionKind::Idle, ActionKind::Retransmit})
            for (const auto& o : source_transition(src, 0.7, 5, {1, th, 5}, a))
                EXPECT_EQ(o.value.theta, clamp_age(th + 1, 5));
}

TEST(JointTransition, IdleTwoSources) {
    SystemSpec s = two_source_spec(5);
    JointState js{{{1, 2, 3}, {0, 4, 5}}};
    const auto out = joint_transition(s, js, Action::idle());
    double total = 0;
    for (const auto& o : out) {
        total += o.probability;
        EXPECT_EQ(o.value.per_source[0].delta, 4);
        EXPECT_EQ(o.value.per_source[1].delta, 5);
        EXPECT_EQ(o.value.per_source[1].theta, 5);
        EXPECT_TRUE(o.value.per_source[0].theta == 0 || o.value.per_source[0].theta == 3);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    // 2 flags x 2 flags x 2 arrival branches
    EXPECT_EQ(out.size(), 8u);
}

TEST(JointTransition, SixteenEquiprobablePoints) {
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(0.5, {0.5, 0.5}), SourceSpec::generate_at_will({0.5, 0.5})};
    s.p = 0.5;
    s.age_cap = 3;
    JointState js{{{1, 0, 2}, {0, 1, 1}}};
    const auto out = joint_transition(s, js, Action::transmit(0));
    ASSERT_EQ(out.size(), 16u);
    for (const auto& o : out) EXPECT_NEAR(o.probability, 1.0 / 16, 1e-15);
}

TEST(JointTransition, InvalidActionThrows) {
    SystemSpec s = two_source_spec(3);
    JointState js{{{0, 0, 0}, {0, 0, 0}}};
    EXPECT_THROW(joint_transition(s, js, Action::sample_and_transmit(0)), ModelError);
    EXPECT_THROW(joint_transition(s, js, Action::transmit(1)), ModelError);
    EXPECT_THROW(joint_transition(s, js, Action::transmit(2)), ModelError);
}

TEST(JointTransition, StochasticOverWholeSpace) {
    SystemSpec s = two_source_spec(3, 0.7);
    const StateSpace space(s);
    const auto actions = joint_actions(s);
    for (StateIndex k = 0; k < space.size(); ++k) {
        const auto js = space.state(k);
        for (const auto& a : actions) {
            double total = 0;
            for (const auto& o : joint_transition(s, js, a)) {
                ASSERT_GE(o.probability, 0.0);
                for (const auto& ps : o.value.per_source) {
                    ASSERT_GE(ps.theta, 0);
                    ASSERT_LE(ps.theta, 3);
                    ASSERT_GE(ps.delta, 0);
                    ASSERT_LE(ps.delta, 3);
                }
                total += o.probability;
            }
            ASSERT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST(KernelTable, JointRowMatchesJointTransition) {
    SystemSpec s = two_source_spec(3, 0.7);
    const StateSpace space(s);
    const KernelTable kt(s, space.source_space());
    std::vector<Outcome<StateIndex>> row;
    for (StateIndex k = 0; k < space.size(); k += 7)
        for (const auto& a : joint_actions(s)) {
            kt.joint_row(space, k, a, row);
            std::map<StateIndex, double> got;
            for (auto& o : row) got[o.value] += o.probability;
            std::map<StateIndex, double> want;
            for (auto& o : joint_transition(s, space.state(k), a)) want[space.index_of(o.value)] += o.probability;
            ASSERT_EQ(got.size(), want.size());
            for (auto& [i, p] : want) EXPECT_NEAR(got[i], p, 1e-15);
        }
}

TEST(Costs, Examples) {
    EXPECT_EQ(qaoi_cost(JointState{{{1, 0, 5}, {0, 0, 9}}}), 5);
    EXPECT_EQ(qaoi_cost(JointState{{{0, 3, 5}, {0, 1, 9}}}), 0);
    EXPECT_EQ(qaoi_cost(JointState{{{1, 0, 3}, {1, 0, 4}}}), 7);
    EXPECT_EQ(tr_cost(Action::idle()), 0);
    EXPECT_EQ(sm_cost(Action::idle()), 0);
    EXPECT_EQ(tr_cost(Action::retransmit(1)), 1);
    EXPECT_EQ(sm_cost(Action::retransmit(1)), 0);
    EXPECT_EQ(tr_cost(Action::sample_and_transmit(1)), 1);
    EXPECT_EQ(sm_cost(Action::sample_and_transmit(1)), 1);
    EXPECT_EQ(tr_cost(Action::transmit(0)), 1);
}

TEST(Actions, EnumerationOrder) {
    SystemSpec s = two_source_spec(2);
    const auto acts = joint_actions(s);
    ASSERT_EQ(acts.size(), 4u);
    EXPECT_EQ(acts[0], Action::idle());
    EXPECT_EQ(acts[1], Action::transmit(0));
    EXPECT_EQ(acts[2], Action::retransmit(1));
    EXPECT_EQ(acts[3], Action::sample_and_transmit(1));
    for (ActionId i = 0; i < acts.size(); ++i) EXPECT_EQ(action_id(s, acts[i]), i);
}

TEST(StateSpace, Sizes) {
    SystemSpec s = two_source_spec(3);
    EXPECT_EQ(StateSpace(s).size(), 1024u);
    SystemSpec one = s;
    one.sources.resize(1);
    one.age_cap = 1;
    EXPECT_EQ(StateSpace(one).size(), 8u);
    SystemSpec big = two_source_spec(20);
    EXPECT_EQ(joint_state_count(big), 777924u);
}

TEST(StateSpace, TooLargeReportsSize) {
    SystemSpec s = two_source_spec(20);
    try {
        StateSpace sp(s, 1000);
        FAIL() << "expected StateSpaceTooLarge";
    } catch (const StateSpaceTooLarge& e) {
        EXPECT_EQ(e.size(), 777924u);
    }
}

TEST(StateSpace, IndexRoundTripAndOrder) {
    SystemSpec s = two_source_spec(2);
    const StateSpace space(s);
    for (StateIndex k = 0; k < space.size(); ++k) ASSERT_EQ(space.index_of(space.state(k)), k);
    // source 0 outermost, then r, theta, delta
    EXPECT_EQ(space.state(1).per_source[1], (SourceState{0, 0, 1}));
    EXPECT_EQ(space.state(18).per_source[0], (SourceState{0, 0, 1}));
    EXPECT_EQ(space.state(18).per_source[1], (SourceState{0, 0, 0}));
}

TEST(InitialDistribution, ProductOfSteadyStates) {
    SystemSpec s = two_source_spec(3);
    s.sources[0].query = {0.7, 0.4};
    s.sources[1].query = {0.7, 0.4};
    const StateSpace space(s);
    const auto eta = initial_distribution(s, space);
    auto at = [&](int r0, int r1) { return eta[space.index_of(JointState{{{r0, 0, 0}, {r1, 0, 0}}})]; };
    EXPECT_NEAR(at(1, 1), 4.0 / 9, 1e-15);
    EXPECT_NEAR(at(1, 0), 2.0 / 9, 1e-15);
    EXPECT_NEAR(at(0, 1), 2.0 / 9, 1e-15);
    EXPECT_NEAR(at(0, 0), 1.0 / 9, 1e-15);
    EXPECT_NEAR(std::accumulate(eta.begin(), eta.end(), 0.0), 1.0, 1e-15);
}

TEST(InitialDistribution, AlwaysQuery) {
    SystemSpec s = two_source_spec(2);
    for (auto& src : s.sources) src.query = {1.0, 0.0};
    const StateSpace space(s);
    const auto eta = initial_distribution(s, space);
    EXPECT_EQ(eta[space.index_of(JointState{{{1, 0, 0}, {1, 0, 0}}})], 1.0);
}

TEST(FirstSlotDistribution, OneIdleStepFromZeroAges) {
    SystemSpec s = two_source_spec(3);
    const StateSpace space(s);
    const auto eta0 = initial_distribution(s, space);
    const auto eta1 = first_slot_distribution(s, space);
    std::vector<double> want(space.size(), 0.0);
    for (StateIndex k = 0; k < space.size(); ++k)
        if (eta0[k] > 0)
            for (auto& o : joint_transition(s, space.state(k), Action::idle()))
                want[space.index_of(o.value)] += eta0[k] * o.probability;
    for (StateIndex k = 0; k < space.size(); ++k) EXPECT_NEAR(eta1[k], want[k], 1e-15);
}

TEST(SystemSpec, ValidationAndHash) {
    SystemSpec s = two_source_spec(3);
    EXPECT_NO_THROW(s.validate());
    SystemSpec bad = s;
    bad.discount = 1.0;
    EXPECT_THROW(bad.validate(), ModelError);
    bad = s;
    bad.p = 1.5;
    EXPECT_THROW(bad.validate(), ModelError);
    bad = s;
    bad.sources[0].mu = -0.1;
    EXPECT_THROW(bad.validate(), ModelError);
    bad = s;
    bad.age_cap = 0;
    EXPECT_THROW(bad.validate(), ModelError);
    SystemSpec other = s;
    EXPECT_EQ(other.hash(), s.hash());
    other.gamma_tr += 1e-9;
    EXPECT_NE(other.hash(), s.hash());
}
