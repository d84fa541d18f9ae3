#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "qaoi/lp.hpp"

using namespace qaoi;

namespace {

SolveOptions dense() {
    SolveOptions o;
    o.backend = LpBackend::DenseSimplex;
    return o;
}

SolveOptions highs() {
    SolveOptions o;
    o.backend = LpBackend::Highs;
    return o;
}

// Random feasible bounded LP: box rows keep it bounded, a known interior
// point keeps it feasible.
LinearProgram random_lp(std::mt19937_64& g, std::size_t n, std::size_t m_ineq, std::size_t m_eq) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.1, 1.0);
    LinearProgram lp;
    lp.num_vars = n;
    std::vector<double> x0(n);
    for (auto& v : x0) v = pos(g);
    for (std::size_t j = 0; j < n; ++j) lp.objective.push_back({j, u(g)});
    for (std::size_t i = 0; i < m_eq; ++i) {
        Constraint c;
        double s = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (g() % 3 == 0) {
                const double a = u(g);
                c.row.push_back({j, a});
                s += a * x0[j];
            }
        c.rhs = s;
        lp.eq.push_back(c);
    }
    for (std::size_t i = 0; i < m_ineq; ++i) {
        Constraint c;
        double s = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (g() % 2 == 0) {
                const double a = u(g);
                c.row.push_back({j, a});
                s += a * x0[j];
            }
        c.rhs = s + pos(g);
        lp.ineq.push_back(c);
    }
    Constraint box;
    for (std::size_t j = 0; j < n; ++j) box.row.push_back({j, 1.0});
    box.rhs = 10.0 * n;
    lp.ineq.push_back(box);
    return lp;
}

}  // namespace

TEST(LpSolve, BoundaryOptimum) {
    LinearProgram lp;
    lp.num_vars = 1;
    lp.objective = {{0, 1.0}};
    for (auto o : {dense(), highs()}) {
        if (o.backend == LpBackend::Highs && !highs_available()) continue;
        auto s = solve(lp, o);
        ASSERT_TRUE(s.optimal());
        EXPECT_NEAR(s.x[0], 0.0, 1e-12);
        EXPECT_NEAR(s.objective_value, 0.0, 1e-12);
    }
}

TEST(LpSolve, SingleConstraint) {
    LinearProgram lp;
    lp.num_vars = 1;
    lp.objective = {{0, -1.0}};
    lp.ineq.push_back({{{0, 1.0}}, 1.0, ""});
    auto s = solve(lp, dense());
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.x[0], 1.0, 1e-12);
    EXPECT_NEAR(s.objective_value, -1.0, 1e-12);
    ASSERT_EQ(s.ineq_duals.size(), 1u);
    EXPECT_NEAR(s.ineq_duals[0], -1.0, 1e-12);
}

TEST(LpSolve, VertexSolution) {
    LinearProgram lp;
    lp.num_vars = 2;
    lp.objective = {{0, 2.0}, {1, 1.0}};
    lp.eq.push_back({{{0, 1.0}, {1, 1.0}}, 1.0, ""});
    auto s = solve(lp, dense());
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.x[0], 0.0, 1e-12);
    EXPECT_NEAR(s.x[1], 1.0, 1e-12);
    EXPECT_NEAR(s.objective_value, 1.0, 1e-12);
}

TEST(LpSolve, DetectsInfeasible) {
    LinearProgram lp;
    lp.num_vars = 2;
    lp.objective = {{0, 1.0}};
    lp.eq.push_back({{{0, 1.0}, {1, 1.0}}, 1.0, ""});
    lp.ineq.push_back({{{0, 1.0}, {1, 1.0}}, 0.5, ""});
    EXPECT_EQ(solve(lp, dense()).status, LpStatus::Infeasible);
    if (highs_available()) EXPECT_EQ(solve(lp, highs()).status, LpStatus::Infeasible);
}

TEST(LpSolve, DetectsUnbounded) {
    LinearProgram lp;
    lp.num_vars = 2;
    lp.objective = {{0, -1.0}};
    lp.ineq.push_back({{{1, 1.0}}, 1.0, ""});
    EXPECT_EQ(solve(lp, dense()).status, LpStatus::Unbounded);
    if (highs_available()) EXPECT_EQ(solve(lp, highs()).status, LpStatus::Unbounded);
}

TEST(LpSolve, NegativeRhsEquality) {
    LinearProgram lp;
    lp.num_vars = 2;
    lp.objective = {{0, 1.0}, {1, 3.0}};
    lp.eq.push_back({{{0, -1.0}, {1, -2.0}}, -4.0, ""});
    auto s = solve(lp, dense());
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.objective_value, 4.0, 1e-10);
}

TEST(LpSolve, RejectsMalformed) {
    LinearProgram lp;
    lp.num_vars = 1;
    lp.objective = {{3, 1.0}};
    EXPECT_THROW(solve(lp), LpError);
    lp.objective = {{0, std::nan("")}};
    EXPECT_THROW(solve(lp), LpError);
}

TEST(LpValidate, Examples) {
    LinearProgram lp;
    lp.num_vars = 2;
    lp.objective = {{0, 1.0}, {1, 1.0}};
    lp.eq.push_back({{{0, 1.0}, {1, 1.0}}, 1.0, ""});
    lp.ineq.push_back({{{0, 1.0}}, 0.7, ""});
    std::vector<double> x{0.5, 0.5};
    auto r = validate(lp, x);
    EXPECT_LE(r.max_eq_residual, 1e-9);
    EXPECT_LE(r.max_ineq_violation, 1e-9);
    std::vector<double> zero{0.0, 0.0};
    EXPECT_DOUBLE_EQ(validate(lp, zero).max_eq_residual, 1.0);
    std::vector<double> bad(3, 0.0);
    EXPECT_THROW(validate(lp, bad), LpError);
}

TEST(LpSolve, RandomDenseAgreesWithHighsAndSelfValidates) {
    if (!highs_available()) GTEST_SKIP() << "HiGHS not linked";
    std::mt19937_64 g(7);
    for (int trial = 0; trial < 40; ++trial) {
        const auto lp = random_lp(g, 4 + trial % 12, 1 + trial % 5, trial % 4);
        const auto a = solve(lp, dense());
        const auto b = solve(lp, highs());
        ASSERT_TRUE(a.optimal()) << trial << " " << a.message;
        ASSERT_TRUE(b.optimal()) << trial << " " << b.message;
        EXPECT_NEAR(a.objective_value, b.objective_value, 1e-7 * (1 + std::abs(b.objective_value))) << trial;
        const auto r = validate(lp, a.x);
        EXPECT_NEAR(r.max_eq_residual, a.max_eq_residual, 1e-12);
        EXPECT_NEAR(r.max_ineq_violation, a.max_ineq_violation, 1e-12);
        EXPECT_NEAR(r.objective, a.objective_value, 1e-12);
        for (double v : a.x) EXPECT_GE(v, -1e-9);
    }
}

// Strong duality and dual feasibility of the reported row multipliers.
TEST(LpSolve, DualsCertifyOptimality) {
    std::mt19937_64 g(11);
    for (int trial = 0; trial < 25; ++trial) {
        const auto lp = random_lp(g, 6 + trial % 7, 2 + trial % 3, 1 + trial % 3);
        for (auto o : {dense(), highs()}) {
            if (o.backend == LpBackend::Highs && !highs_available()) continue;
            const auto s = solve(lp, o);
            ASSERT_TRUE(s.optimal());
            ASSERT_EQ(s.ineq_duals.size(), lp.ineq.size());
            ASSERT_EQ(s.eq_duals.size(), lp.eq.size());
            double dual_obj = 0;
            std::vector<double> reduced(lp.num_vars, 0.0);
            for (auto& e : lp.objective) reduced[e.index] += e.value;
            for (std::size_t i = 0; i < lp.ineq.size(); ++i) {
                EXPECT_LE(s.ineq_duals[i], 1e-9);
                dual_obj += s.ineq_duals[i] * lp.ineq[i].rhs;
                for (auto& e : lp.ineq[i].row) reduced[e.index] -= s.ineq_duals[i] * e.value;
            }
            for (std::size_t i = 0; i < lp.eq.size(); ++i) {
                dual_obj += s.eq_duals[i] * lp.eq[i].rhs;
                for (auto& e : lp.eq[i].row) reduced[e.index] -= s.eq_duals[i] * e.value;
            }
            for (double r : reduced) EXPECT_GE(r, -1e-7);
            EXPECT_NEAR(dual_obj, s.objective_value, 1e-7 * (1 + std::abs(s.objective_value)));
        }
    }
}

TEST(LpSolve, ObjectiveScaling) {
    std::mt19937_64 g(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto lp = random_lp(g, 8, 3, 2);
        const auto a = solve(lp, dense());
        for (auto& e : lp.objective) e.value *= 4.5;
        const auto b = solve(lp, dense());
        ASSERT_TRUE(a.optimal());
        ASSERT_TRUE(b.optimal());
        EXPECT_NEAR(b.objective_value, 4.5 * a.objective_value, 1e-9 * (1 + std::abs(b.objective_value)));
        const auto r = validate(lp, b.x);
        EXPECT_LE(r.max_eq_residual, 1e-8);
        EXPECT_LE(r.max_ineq_violation, 1e-8);
    }
}

TEST(LpSolve, Deterministic) {
    std::mt19937_64 g(5);
    const auto lp = random_lp(g, 12, 4, 3);
    const auto a = solve(lp, dense());
    const auto b = solve(lp, dense());
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.objective_value, b.objective_value);
}

TEST(LpSolve, DegenerateCyclingExample) {
    // Beale's example cycles under the textbook largest-coefficient rule.
    LinearProgram lp;
    lp.num_vars = 4;
    lp.objective = {{0, -0.75}, {1, 150.0}, {2, -0.02}, {3, 6.0}};
    lp.ineq.push_back({{{0, 0.25}, {1, -60.0}, {2, -0.04}, {3, 9.0}}, 0.0, ""});
    lp.ineq.push_back({{{0, 0.5}, {1, -90.0}, {2, -0.02}, {3, 3.0}}, 0.0, ""});
    lp.ineq.push_back({{{2, 1.0}}, 1.0, ""});
    const auto s = solve(lp, dense());
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.objective_value, -0.05, 1e-10);
}

TEST(LpText, FixedPointFormat) {
    LinearProgram lp;
    lp.num_vars = 2;
    lp.objective = {{0, 1.0 / 3.0}, {1, -2.0}};
    lp.eq.push_back({{{0, 1.0}, {1, 1.0}}, 1.0, "bal"});
    lp.ineq.push_back({{{1, 1e-5}}, 0.5, ""});
    std::ostringstream os;
    write_lp_text(lp, os);
    const auto s = os.str();
    EXPECT_NE(s.find("Minimize"), std::string::npos);
    EXPECT_NE(s.find("0.333333333333 x0 - 2 x1"), std::string::npos);
    EXPECT_NE(s.find("bal: 1 x0 + 1 x1 = 1"), std::string::npos);
    EXPECT_NE(s.find("i0: 0.00001 x1 <= 0.5"), std::string::npos);
    EXPECT_EQ(s.find('e', s.find("i0:")), std::string::npos) << "no exponent notation";
}
