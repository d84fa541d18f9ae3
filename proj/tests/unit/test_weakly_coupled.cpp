#include <gtest/gtest.h>

#include <random>

#include "qaoi/weakly_coupled.hpp"

using namespace qaoi;

namespace {

SystemSpec spec_n(std::size_t n, int cap, double gtr = 0.5, double gsm = 0.3, double lambda = 0.9) {
    SystemSpec s;
    for (std::size_t i = 0; i < n; ++i)
        s.sources.push_back(i % 2 == 0 ? SourceSpec::random_arrival(0.6, {0.7, 0.4})
                                       : SourceSpec::generate_at_will({0.7, 0.4}));
    s.p = 0.8;
    s.age_cap = cap;
    s.discount = lambda;
    s.gamma_tr = gtr;
    s.gamma_sm = gsm;
    return s;
}

SystemSpec random_spec(std::mt19937_64& g, int cap, double lambda) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(u(g), {u(g), u(g)}), SourceSpec::generate_at_will({u(g), u(g)})};
    s.p = u(g);
    s.age_cap = cap;
    s.discount = lambda;
    s.gamma_tr = u(g);
    s.gamma_sm = u(g) * s.gamma_tr;
    return s;
}

double joint_optimum(const SystemSpec& s) {
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto jlp = build_joint_lp(s, space, eta);
    const auto sol = solve_joint_lp(s, space, jlp, eta);
    EXPECT_TRUE(sol.optimal()) << sol.message;
    return sol.objective_value;
}

JointState js2(SourceState a, SourceState b) { return JointState{{a, b}}; }

}  // namespace

TEST(DecomposedLp, Sizes) {
    const auto d2 = build_decomposed_lp(spec_n(2, 20));
    EXPECT_EQ(d2.states_per_source, 882u);
    EXPECT_EQ(d2.lp.num_vars, 4410u);
    EXPECT_EQ(d2.lp.eq.size(), 1764u);
    EXPECT_EQ(d2.lp.ineq.size(), 2u);
    const auto d10 = build_decomposed_lp(spec_n(10, 20));
    EXPECT_EQ(d10.lp.eq.size(), 8820u);
    EXPECT_EQ(d10.lp.ineq.size(), 2u);
    const auto per = build_decomposed_lp(spec_n(4, 3), SamplingBudgetMode::PerSource);
    EXPECT_EQ(per.lp.ineq.size(), 3u);
    EXPECT_EQ(per.sampling_row[0], static_cast<std::size_t>(-1));
    EXPECT_EQ(per.sampling_row[1], 1u);
    EXPECT_EQ(per.sampling_row[3], 2u);
}

TEST(DecomposedLp, PerSourceMassesAreUnit) {
    const auto s = spec_n(3, 5);
    const auto dlp = build_decomposed_lp(s);
    const auto sol = solve_decomposed_lp(s, dlp);
    ASSERT_TRUE(sol.optimal()) << sol.message;
    for (const auto& u : per_source_usage(dlp, sol)) EXPECT_NEAR(u.mass, 1.0, 1e-6);
    double tr = 0, sm = 0;
    for (const auto& u : per_source_usage(dlp, sol)) {
        tr += u.tr;
        sm += u.sm;
    }
    EXPECT_LE(tr, s.gamma_tr + 1e-6);
    EXPECT_LE(sm, s.gamma_sm + 1e-6);
}

TEST(DecomposedLp, ColumnGenerationMatchesGenericBackends) {
    std::mt19937_64 g(17);
    for (int trial = 0; trial < 5; ++trial) {
        auto s = random_spec(g, 3 + trial, trial % 2 ? 0.95 : 0.9);
        if (trial == 4) s.sources.push_back(SourceSpec::generate_at_will({0.6, 0.5}));
        for (auto mode : {SamplingBudgetMode::Shared, SamplingBudgetMode::PerSource}) {
            const auto dlp = build_decomposed_lp(s, mode);
            CmdpSolveOptions cg, gen;
            cg.method = CmdpMethod::ColumnGeneration;
            gen.method = CmdpMethod::GenericLp;
            const auto a = solve_decomposed_lp(s, dlp, cg);
            const auto b = solve_decomposed_lp(s, dlp, gen);
            ASSERT_TRUE(a.optimal()) << a.message;
            ASSERT_TRUE(b.optimal()) << b.message;
            EXPECT_NEAR(a.objective_value, b.objective_value, 1e-7 * b.objective_value) << trial;
            const auto r = validate(dlp.lp, a.x);
            EXPECT_LE(r.max_eq_residual, 1e-8);
            EXPECT_LE(r.max_ineq_violation, 1e-8);
            ASSERT_EQ(a.ineq_duals.size(), dlp.lp.ineq.size());
            for (double y : a.ineq_duals) EXPECT_LE(y, 0.0);
        }
    }
}

TEST(LowerBound, BelowJointOptimum) {
    std::mt19937_64 g(5);
    for (int trial = 0; trial < 6; ++trial) {
        const auto s = random_spec(g, 2 + trial % 3, trial % 2 ? 0.95 : 0.9);
        const auto dlp = build_decomposed_lp(s);
        const auto sol = solve_decomposed_lp(s, dlp);
        ASSERT_TRUE(sol.optimal());
        EXPECT_LE(lower_bound_value(sol), joint_optimum(s) + 1e-6) << trial;
    }
}

TEST(LowerBound, SingleSourceIsExact) {
    for (bool ra : {true, false}) {
        SystemSpec s = spec_n(1, 5);
        if (!ra) s.sources[0] = SourceSpec::generate_at_will({0.7, 0.4});
        const auto dlp = build_decomposed_lp(s);
        const auto sol = solve_decomposed_lp(s, dlp);
        ASSERT_TRUE(sol.optimal());
        EXPECT_NEAR(lower_bound_value(sol), joint_optimum(s), 1e-7);
    }
}

// With slack budgets the relaxation separates into unconstrained per-source MDPs.
TEST(LowerBound, SlackBudgetsGiveUnconstrainedOptimum) {
    SystemSpec s = spec_n(1, 6, 1.0, 1.0);
    s.sources[0] = SourceSpec::generate_at_will({0.7, 0.4});
    s.p = 1.0;
    const auto dlp = build_decomposed_lp(s);
    const auto sol = solve_decomposed_lp(s, dlp);
    ASSERT_TRUE(sol.optimal());
    const StateSpace space(s);
    const auto greedy = lagrangian_greedy_actions(s, 0, 0.0, 0.0);
    RandomizedPolicy p(joint_actions(s), space.size());
    for (StateIndex k = 0; k < space.size(); ++k) p.distribution(k)[greedy[k]] = 1.0;
    EXPECT_NEAR(lower_bound_value(sol), evaluate_policy_exact(s, p).qaoi, 1e-8);
}

TEST(ExtractPerSource, Normalization) {
    const auto s = spec_n(2, 2);
    const auto dlp = build_decomposed_lp(s);
    LpSolution sol;
    sol.status = LpStatus::Optimal;
    sol.x.assign(dlp.lp.num_vars, 0.0);
    sol.x[dlp.var(1, 5, 0)] = 0.01;
    sol.x[dlp.var(1, 5, 1)] = 0.02;
    sol.x[dlp.var(1, 5, 2)] = 0.01;
    sol.x[dlp.var(0, 3, 1)] = 0.5;
    const auto pols = extract_per_source_policies(s, dlp, sol);
    ASSERT_EQ(pols.size(), 2u);
    const auto f = pols[1].distribution(5);
    EXPECT_DOUBLE_EQ(f[0], 0.25);
    EXPECT_DOUBLE_EQ(f[1], 0.5);
    EXPECT_DOUBLE_EQ(f[2], 0.25);
    EXPECT_EQ(pols[0].distribution(3)[1], 1.0);
    EXPECT_EQ(pols[0].distribution(4)[0], 1.0) << "unvisited falls back to Idle";
    EXPECT_EQ(pols[1].distribution(0)[0], 1.0);
}

TEST(ExtractPerSource, SingleSourceMatchesJointExtraction) {
    SystemSpec s = spec_n(1, 4);
    s.sources[0] = SourceSpec::generate_at_will({0.7, 0.4});
    CmdpSolveOptions o;
    o.method = CmdpMethod::GenericLp;
    o.lp.backend = LpBackend::DenseSimplex;
    const auto dlp = build_decomposed_lp(s);
    const auto dsol = solve_decomposed_lp(s, dlp, o);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto jlp = build_joint_lp(s, space, eta, {.prune_unreachable = false});
    const auto jsol = solve_joint_lp(s, space, jlp, eta, o);
    ASSERT_TRUE(dsol.optimal());
    ASSERT_TRUE(jsol.optimal());
    EXPECT_NEAR(dsol.objective_value, jsol.objective_value, 1e-9);
    const auto per = extract_per_source_policies(s, dlp, dsol);
    const auto joint = extract_policy(make_occupation_measure(s, jlp, jsol));
    for (StateIndex k = 0; k < space.size(); ++k)
        for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(per[0].distribution(k)[a], joint.probability(k, a), 1e-9);
}

TEST(ExtractPerSource, LagrangianFillTouchesOnlyUnvisitedStates) {
    const auto s = spec_n(2, 6);
    const auto dlp = build_decomposed_lp(s);
    const auto sol = solve_decomposed_lp(s, dlp);
    ASSERT_TRUE(sol.optimal());
    const auto idle = extract_per_source_policies(s, dlp, sol, kUnvisitedMassThreshold, UnvisitedFill::Idle);
    const auto lag =
        extract_per_source_policies(s, dlp, sol, kUnvisitedMassThreshold, UnvisitedFill::LagrangianGreedy);
    double total = 0;
    for (double v : sol.x) total += std::max(0.0, v);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < 2; ++i)
        for (StateIndex k = 0; k < dlp.states_per_source; ++k) {
            double mass = 0;
            for (std::size_t a = 0; a < dlp.actions[i].size(); ++a) mass += std::max(0.0, sol.x[dlp.var(i, k, a)]);
            const auto x = idle[i].distribution(k), y = lag[i].distribution(k);
            const bool same = std::equal(x.begin(), x.end(), y.begin());
            if (mass > kUnvisitedMassThreshold * total)
                EXPECT_TRUE(same);
            else
                changed += !same;
        }
    EXPECT_GT(changed, 0u);
}

TEST(LagrangianGreedy, ExtremeMultipliers) {
    const auto s = spec_n(2, 5);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto expensive = lagrangian_greedy_actions(s, i, 1e6, 1e6);
        for (auto a : expensive) EXPECT_EQ(a, 0u);
    }
    // Free transmissions: a queried stale generate-at-will source samples.
    const auto free_gaw = lagrangian_greedy_actions(s, 1, 0.0, 0.0);
    const SourceStateSpace sp(5);
    EXPECT_EQ(free_gaw[sp.index_of({1, 5, 5})], 2u);
}

TEST(Priority, Examples) {
    EXPECT_EQ(priority(SourceKind::RandomArrival, {1, 2, 5}), 3.0);
    EXPECT_EQ(priority(SourceKind::GenerateAtWill, {1, 7, 2}), 2.0);
    EXPECT_EQ(priority(SourceKind::RandomArrival, {0, 2, 5}), 0.0);
    EXPECT_EQ(priority(SourceKind::GenerateAtWill, {0, 7, 9}), 0.0);
}

TEST(TruncatedAction, Examples) {
    const auto s = spec_n(2, 20);
    const std::vector<ActionKind> both{ActionKind::Transmit, ActionKind::Retransmit};
    EXPECT_EQ(truncated_action(s, js2({1, 2, 5}, {1, 0, 2}), both), Action::transmit(0));
    EXPECT_EQ(truncated_action(s, js2({1, 2, 3}, {1, 0, 2}), both), Action::retransmit(1));
    const std::vector<ActionKind> one{ActionKind::Idle, ActionKind::SampleAndTransmit};
    EXPECT_EQ(truncated_action(s, js2({1, 2, 5}, {1, 0, 2}), one), Action::sample_and_transmit(1));
    // h equal: the random-arrival source wins.
    EXPECT_EQ(truncated_action(s, js2({1, 1, 3}, {1, 0, 2}), both), Action::transmit(0));
    const std::vector<ActionKind> none{ActionKind::Idle, ActionKind::Idle};
    EXPECT_EQ(truncated_action(s, js2({1, 1, 3}, {1, 0, 2}), none), Action::idle());
}

TEST(TruncatedAction, TieAmongSameKindGoesToLowestIndex) {
    SystemSpec s = spec_n(3, 10);
    s.sources[2] = SourceSpec::generate_at_will({0.5, 0.5});
    JointState js{{{0, 0, 0}, {1, 0, 4}, {1, 0, 4}}};
    const std::vector<ActionKind> a{ActionKind::Idle, ActionKind::SampleAndTransmit, ActionKind::Retransmit};
    EXPECT_EQ(truncated_action(s, js, a), Action::sample_and_transmit(1));
}

TEST(TruncatedAction, UnqueriedSourcesNeverOutrankQueriedOnes) {
    SystemSpec s = spec_n(4, 10);
    JointState js{{{0, 0, 9}, {0, 0, 9}, {0, 0, 9}, {1, 0, 1}}};
    const std::vector<ActionKind> a{ActionKind::Transmit, ActionKind::Retransmit, ActionKind::Transmit,
                                    ActionKind::Retransmit};
    EXPECT_EQ(truncated_action(s, js, a), Action::retransmit(3));
}

TEST(ToJointPolicy, ProductFormula) {
    const auto s = spec_n(2, 2);
    TruncatedPolicy tp;
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < 2; ++i) {
        PerSourcePolicy p(i, s.sources[i].kind, SourceStateSpace(2).size());
        for (StateIndex k = 0; k < p.num_states(); ++k) {
            auto d = p.distribution(k);
            double t = 0;
            for (auto& v : d) t += (v = u(g));
            for (auto& v : d) v /= t;
        }
        tp.per_source.push_back(p);
    }
    const StateSpace space(s);
    const auto joint = to_joint_policy(s, space, tp);
    EXPECT_LE(joint.max_normalization_error(), 1e-14);
    // Brute force over the product of independent per-source draws.
    for (StateIndex k = 0; k < space.size(); ++k) {
        const auto js = space.state(k);
        std::vector<double> want(joint.num_actions(), 0.0);
        const auto f0 = tp.per_source[0].distribution(space.source_index(k, 0));
        const auto f1 = tp.per_source[1].distribution(space.source_index(k, 1));
        for (std::size_t a = 0; a < f0.size(); ++a)
            for (std::size_t b = 0; b < f1.size(); ++b) {
                const std::vector<ActionKind> sampled{tp.per_source[0].actions()[a], tp.per_source[1].actions()[b]};
                want[action_id(s, truncated_action(s, js, sampled))] += f0[a] * f1[b];
            }
        for (std::size_t a = 0; a < want.size(); ++a) ASSERT_NEAR(joint.probability(k, a), want[a], 1e-14);
    }
}
