#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "qaoi/occupancy.hpp"

using namespace qaoi;

namespace {

SystemSpec small_spec(int cap, double gamma_tr = 0.5, double gamma_sm = 0.3, double lambda = 0.9) {
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(0.6, {0.7, 0.4}), SourceSpec::generate_at_will({0.7, 0.4})};
    s.p = 0.8;
    s.age_cap = cap;
    s.discount = lambda;
    s.gamma_tr = gamma_tr;
    s.gamma_sm = gamma_sm;
    return s;
}

struct Solved {
    StateSpace space;
    std::vector<double> eta;
    JointLp jlp;
    LpSolution sol;
};

Solved solve_spec(const SystemSpec& s, CmdpSolveOptions o = {}, JointLpOptions jo = {}) {
    StateSpace space(s);
    auto eta = first_slot_distribution(s, space);
    auto jlp = build_joint_lp(s, space, eta, jo);
    auto sol = solve_joint_lp(s, space, jlp, eta, o);
    return {std::move(space), std::move(eta), std::move(jlp), std::move(sol)};
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

}  // namespace

TEST(JointLp, UnprunedSizes) {
    const auto s = small_spec(3);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto jlp = build_joint_lp(s, space, eta, {.prune_unreachable = false});
    EXPECT_EQ(jlp.lp.eq.size(), 1024u);
    EXPECT_EQ(jlp.lp.ineq.size(), 2u);
    EXPECT_EQ(jlp.lp.num_vars, 4096u);
}

TEST(JointLp, PrunedKeepsReachableStatesOnly) {
    const auto s = small_spec(3);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto reach = reachable_states(s, space, eta);
    const auto jlp = build_joint_lp(s, space, eta);
    EXPECT_EQ(jlp.lp.eq.size(), static_cast<std::size_t>(std::count(reach.begin(), reach.end(), true)));
    EXPECT_LT(jlp.lp.eq.size(), 1024u);
    for (StateIndex k = 0; k < space.size(); ++k) {
        EXPECT_EQ(jlp.retained(k), reach[k]);
        if (eta[k] > 0) EXPECT_TRUE(reach[k]);
    }
    // Closed under every action.
    for (StateIndex k : jlp.states)
        for (const auto& a : jlp.actions)
            for (const auto& o : joint_transition(s, space.state(k), a)) EXPECT_TRUE(reach[space.index_of(o.value)]);
}

TEST(JointLp, PrunedAndUnprunedOptimaAgree) {
    const auto s = small_spec(3);
    CmdpSolveOptions o;
    o.method = CmdpMethod::GenericLp;
    const auto a = solve_spec(s, o, {.prune_unreachable = true});
    const auto b = solve_spec(s, o, {.prune_unreachable = false});
    ASSERT_TRUE(a.sol.optimal());
    ASSERT_TRUE(b.sol.optimal());
    EXPECT_NEAR(a.sol.objective_value, b.sol.objective_value, 1e-8);
}

TEST(JointLp, IdleOccupationMeasureIsFeasible) {
    const auto s = small_spec(3, 0.01, 0.01);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto jlp = build_joint_lp(s, space, eta);
    // Idle occupation measure: x = (1-lambda) eta (I - lambda P_idle)^-1, by fixed-point iteration.
    std::vector<double> d(space.size(), 0.0), cur(eta.begin(), eta.end());
    double w = 1 - s.discount;
    for (int t = 0; t < 400; ++t) {
        std::vector<double> nxt(space.size(), 0.0);
        for (StateIndex k = 0; k < space.size(); ++k)
            if (cur[k] > 0) {
                d[k] += w * cur[k];
                for (auto& o : joint_transition(s, space.state(k), Action::idle()))
                    nxt[space.index_of(o.value)] += cur[k] * o.probability;
            }
        cur.swap(nxt);
        w *= s.discount;
    }
    std::vector<double> x(jlp.lp.num_vars, 0.0);
    for (StateIndex k = 0; k < space.size(); ++k)
        if (d[k] > 0) {
            ASSERT_TRUE(jlp.retained(k));
            x[jlp.var(k, 0)] = d[k];
        }
    const auto r = validate(jlp.lp, x);
    EXPECT_LT(r.max_eq_residual, 1e-12);
    EXPECT_LT(r.max_ineq_violation, 1e-12);

    const auto sol = solve_joint_lp(s, space, jlp, eta);
    ASSERT_TRUE(sol.optimal());
    EXPECT_LE(sol.objective_value, r.objective + 1e-9);
}

TEST(JointLp, BalanceRowsTelescopeToUnitMass) {
    const auto s = small_spec(2);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    const auto jlp = build_joint_lp(s, space, eta, {.prune_unreachable = false});
    std::vector<double> colsum(jlp.lp.num_vars, 0.0);
    double rhs = 0;
    for (const auto& c : jlp.lp.eq) {
        rhs += c.rhs;
        for (const auto& e : c.row) colsum[e.index] += e.value;
    }
    EXPECT_NEAR(rhs, 1 - s.discount, 1e-14);
    for (double v : colsum) EXPECT_NEAR(v, 1 - s.discount, 1e-14);
}

TEST(JointLp, NormalizationAndBudgets) {
    const auto s = small_spec(4);
    const auto r = solve_spec(s);
    ASSERT_TRUE(r.sol.optimal());
    const auto m = make_occupation_measure(s, r.jlp, r.sol);
    EXPECT_NEAR(m.total_mass(), 1.0, 1e-6);
    double tr = 0, sm = 0;
    for (StateIndex k = 0; k < m.num_states; ++k)
        for (ActionId a = 0; a < m.actions.size(); ++a) {
            EXPECT_GE(m.mass(k, a), -1e-9);
            tr += m.mass(k, a) * tr_cost(m.actions[a]);
            sm += m.mass(k, a) * sm_cost(m.actions[a]);
        }
    EXPECT_LE(tr, s.gamma_tr + 1e-6);
    EXPECT_LE(sm, s.gamma_sm + 1e-6);
}

TEST(JointLp, SolverPathsAgree) {
    std::mt19937_64 g(99);
    for (int trial = 0; trial < 4; ++trial) {
        const auto s = random_spec(g, 2 + trial % 2, trial % 2 ? 0.95 : 0.9);
        CmdpSolveOptions cg, dense, hi;
        cg.method = CmdpMethod::ColumnGeneration;
        dense.method = CmdpMethod::GenericLp;
        dense.lp.backend = LpBackend::DenseSimplex;
        hi.method = CmdpMethod::GenericLp;
        hi.lp.backend = LpBackend::Highs;
        const auto a = solve_spec(s, cg);
        const auto b = solve_spec(s, dense);
        ASSERT_TRUE(a.sol.optimal()) << a.sol.message;
        ASSERT_TRUE(b.sol.optimal()) << b.sol.message;
        EXPECT_NEAR(a.sol.objective_value, b.sol.objective_value, 1e-7 * b.sol.objective_value);
        if (highs_available()) {
            const auto c = solve_spec(s, hi);
            ASSERT_TRUE(c.sol.optimal());
            EXPECT_NEAR(c.sol.objective_value, b.sol.objective_value, 1e-7 * b.sol.objective_value);
        }
    }
}

TEST(JointLp, ObjectiveNonIncreasingInBudgets) {
    double prev = 1e300;
    for (double gtr : {0.05, 0.2, 0.4, 0.7, 1.0}) {
        const auto r = solve_spec(small_spec(3, gtr, 0.2));
        ASSERT_TRUE(r.sol.optimal());
        EXPECT_LE(r.sol.objective_value, prev + 1e-9);
        prev = r.sol.objective_value;
    }
    prev = 1e300;
    for (double gsm : {0.01, 0.1, 0.3, 0.5}) {
        const auto r = solve_spec(small_spec(3, 0.5, gsm));
        ASSERT_TRUE(r.sol.optimal());
        EXPECT_LE(r.sol.objective_value, prev + 1e-9);
        prev = r.sol.objective_value;
    }
}

TEST(ExtractPolicy, Examples) {
    SystemSpec s = small_spec(1);
    OccupationMeasure m;
    m.spec = s;
    m.actions = joint_actions(s);
    m.num_states = 3;
    m.x.assign(m.num_states * 4, 0.0);
    m.x[0] = 0.002;
    m.x[1] = 0.006;
    m.x[4 + 2] = -1e-12;
    m.x[4 + 3] = 0.5;
    m.x[8 + 0] = 0.4;
    const auto f = extract_policy(m);
    EXPECT_DOUBLE_EQ(f.probability(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(f.probability(0, 1), 0.75);
    EXPECT_EQ(f.probability(1, 2), 0.0);
    EXPECT_EQ(f.probability(1, 3), 1.0);
    EXPECT_EQ(f.probability(2, 0), 1.0);
    EXPECT_LE(f.max_normalization_error(), 1e-15);

    m.x.assign(m.num_states * 4, 0.0);
    m.x[4] = 1.0;
    const auto g = extract_policy(m);
    EXPECT_EQ(g.probability(0, 0), 1.0) << "unvisited state falls back to Idle";
    EXPECT_EQ(g.probability(2, 0), 1.0);
}

TEST(RandomizedPolicy, InverseCdfSampling) {
    SystemSpec s = small_spec(1);
    RandomizedPolicy p(joint_actions(s), 1);
    auto d = p.distribution(0);
    d[0] = 0.25;
    d[2] = 0.75;
    EXPECT_EQ(p.sample(0, 0.0), 0u);
    EXPECT_EQ(p.sample(0, 0.2499), 0u);
    EXPECT_EQ(p.sample(0, 0.25), 2u);
    EXPECT_EQ(p.sample(0, 0.999999), 2u);
}

TEST(EvaluateExact, IdleAlwaysQueryClosedForm) {
    SystemSpec s = small_spec(2, 0.5, 0.3, 0.5);
    for (auto& src : s.sources) src.query = {1.0, 0.0};
    const auto v = evaluate_policy_exact(s, idle_policy(s, StateSpace(s)));
    EXPECT_NEAR(v.qaoi, 3.0, 1e-12);
    EXPECT_EQ(v.avg_tr, 0.0);
    EXPECT_EQ(v.avg_sm, 0.0);
}

TEST(EvaluateExact, NeverQueryIsFree) {
    SystemSpec s = small_spec(3);
    for (auto& src : s.sources) src.query = {0.0, 1.0};
    EXPECT_NEAR(evaluate_policy_exact(s, idle_policy(s, StateSpace(s))).qaoi, 0.0, 1e-15);
}

// Unrolled discounted sum over the exact state distribution as an independent check.
TEST(EvaluateExact, MatchesForwardRecursion) {
    const auto s = small_spec(2, 0.5, 0.3, 0.8);
    const StateSpace space(s);
    const auto eta = first_slot_distribution(s, space);
    RandomizedPolicy pol(joint_actions(s), space.size());
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (StateIndex k = 0; k < space.size(); ++k) {
        auto d = pol.distribution(k);
        double t = 0;
        for (auto& v : d) t += (v = u(g));
        for (auto& v : d) v /= t;
    }
    const auto v = evaluate_policy_exact(s, space, pol, eta);
    std::vector<double> cur(eta.begin(), eta.end());
    double q = 0, tr = 0, sm = 0, w = 1 - s.discount;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> nxt(space.size(), 0.0);
        for (StateIndex k = 0; k < space.size(); ++k) {
            if (cur[k] == 0) continue;
            const auto js = space.state(k);
            q += w * cur[k] * qaoi_cost(js);
            for (ActionId a = 0; a < pol.num_actions(); ++a) {
                const double pa = pol.probability(k, a);
                tr += w * cur[k] * pa * tr_cost(pol.actions()[a]);
                sm += w * cur[k] * pa * sm_cost(pol.actions()[a]);
                for (auto& o : joint_transition(s, js, pol.actions()[a]))
                    nxt[space.index_of(o.value)] += cur[k] * pa * o.probability;
            }
        }
        cur.swap(nxt);
        w *= s.discount;
    }
    EXPECT_NEAR(v.qaoi, q, 1e-10);
    EXPECT_NEAR(v.avg_tr, tr, 1e-10);
    EXPECT_NEAR(v.avg_sm, sm, 1e-10);
}

TEST(ExtractedPolicy, RealizesLpObjective) {
    std::mt19937_64 g(2024);
    for (int trial = 0; trial < 6; ++trial) {
        const double lambda = trial % 2 ? 0.95 : 0.9;
        const auto s = random_spec(g, 2 + trial % 3, lambda);
        const auto r = solve_spec(s);
        ASSERT_TRUE(r.sol.optimal()) << r.sol.message;
        const auto f = extract_policy(make_occupation_measure(s, r.jlp, r.sol));
        const auto v = evaluate_policy_exact(s, r.space, f, r.eta);
        EXPECT_NEAR(v.qaoi, r.sol.objective_value, 1e-6 * r.sol.objective_value) << "trial " << trial;
        EXPECT_LE(v.avg_tr, s.gamma_tr + 1e-6);
        EXPECT_LE(v.avg_sm, s.gamma_sm + 1e-6);
    }
}

// Single-source CMDP solved by enumerating every deterministic stationary
// policy and mixing up to three of them (two budget rows).
TEST(JointLp, BruteForceOverDeterministicPolicies) {
    for (bool ra : {true, false}) {
        SystemSpec s;
        s.sources = {ra ? SourceSpec::random_arrival(0.4, {0.8, 0.3}) : SourceSpec::generate_at_will({0.8, 0.3})};
        s.p = 0.7;
        s.age_cap = 1;
        s.discount = 0.85;
        s.gamma_tr = 0.35;
        s.gamma_sm = 0.15;
        const StateSpace space(s);
        const auto eta = first_slot_distribution(s, space);
        const auto acts = joint_actions(s);
        const std::size_t na = acts.size(), ns = space.size();
        std::vector<PolicyValue> vals;
        std::vector<std::size_t> choice(ns, 0);
        for (;;) {
            RandomizedPolicy p(acts, ns);
            for (StateIndex k = 0; k < ns; ++k) p.distribution(k)[choice[k]] = 1.0;
            vals.push_back(evaluate_policy_exact(s, space, p, eta));
            std::size_t k = 0;
            while (k < ns && ++choice[k] == na) choice[k++] = 0;
            if (k == ns) break;
        }
        double best = 1e300;
        auto feasible = [&](double tr, double sm) { return tr <= s.gamma_tr + 1e-12 && sm <= s.gamma_sm + 1e-12; };
        for (auto& v : vals)
            if (feasible(v.avg_tr, v.avg_sm)) best = std::min(best, v.qaoi);
        // Pairs: best point on each segment under both budget rows.
        for (std::size_t i = 0; i < vals.size(); ++i)
            for (std::size_t j = 0; j < vals.size(); ++j) {
                const auto &a = vals[i], &b = vals[j];
                double lo = 0, hi = 1;
                auto clip = [&](double ca, double cb, double cap) {
                    // (1-w) ca + w cb <= cap
                    const double d = cb - ca;
                    if (std::abs(d) < 1e-15) {
                        if (ca > cap + 1e-12) hi = -1;
                    } else if (d > 0) {
                        hi = std::min(hi, (cap - ca) / d);
                    } else {
                        lo = std::max(lo, (cap - ca) / d);
                    }
                };
                clip(a.avg_tr, b.avg_tr, s.gamma_tr);
                clip(a.avg_sm, b.avg_sm, s.gamma_sm);
                if (lo > hi) continue;
                for (double w : {lo, hi}) best = std::min(best, (1 - w) * a.qaoi + w * b.qaoi);
            }
        if (!ra) {
            // Triples only matter when both rows bind: solve the 3-point mix exactly.
            LinearProgram lp;
            lp.num_vars = vals.size();
            Constraint conv, tr, sm;
            for (std::size_t i = 0; i < vals.size(); ++i) {
                lp.objective.push_back({i, vals[i].qaoi});
                conv.row.push_back({i, 1.0});
                tr.row.push_back({i, vals[i].avg_tr});
                sm.row.push_back({i, vals[i].avg_sm});
            }
            conv.rhs = 1;
            tr.rhs = s.gamma_tr;
            sm.rhs = s.gamma_sm;
            lp.eq.push_back(conv);
            lp.ineq = {tr, sm};
            SolveOptions o;
            o.backend = LpBackend::DenseSimplex;
            const auto mix = solve(lp, o);
            ASSERT_TRUE(mix.optimal());
            EXPECT_LE(mix.objective_value, best + 1e-9);
            best = std::min(best, mix.objective_value);
        }
        const auto jlp = build_joint_lp(s, space, eta);
        const auto sol = solve_joint_lp(s, space, jlp, eta);
        ASSERT_TRUE(sol.optimal());
        EXPECT_NEAR(sol.objective_value, best, 1e-9) << (ra ? "random arrival" : "generate at will");
    }
}
