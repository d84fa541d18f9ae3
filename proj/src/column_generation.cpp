#include "column_generation.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <memory>

namespace qaoi::detail {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

// Solves (I - lambda P_pi) v = b and its transpose. Small blocks are
// factored directly. Large ones fill in badly, but the matrix is strictly
// diagonally dominant by rows, so Jacobi-preconditioned BiCGSTAB works there.
class Evaluator {
public:
    static constexpr std::size_t kDirectLimit = 5000;

    explicit Evaluator(const MdpBlock& m) : m_(m), direct_(m.n <= kDirectLimit) {}

    bool factor(const std::vector<std::uint8_t>& pi) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(m_.n * (direct_ ? 4 * m_.na + 1 : 8));
        for (std::size_t k = 0; k < m_.n; ++k) {
            const std::size_t row = k * m_.na + pi[k];
            double diag = 1.0;
            for (std::size_t t = m_.start[row]; t < m_.start[row + 1]; ++t) {
                if (m_.next[t] == k)
                    diag -= m_.lambda * m_.prob[t];
                else
                    trip.emplace_back(static_cast<int>(k), static_cast<int>(m_.next[t]), -m_.lambda * m_.prob[t]);
            }
            trip.emplace_back(static_cast<int>(k), static_cast<int>(k), diag);
            // Explicit zeros on every action's successors keep the sparsity
            // pattern fixed across policies, so one symbolic analysis serves all.
            if (direct_)
                for (std::size_t t = m_.start[k * m_.na]; t < m_.start[(k + 1) * m_.na]; ++t)
                    trip.emplace_back(static_cast<int>(k), static_cast<int>(m_.next[t]), 0.0);
        }
        a_.resize(static_cast<Eigen::Index>(m_.n), static_cast<Eigen::Index>(m_.n));
        a_.setFromTriplets(trip.begin(), trip.end());
        a_.makeCompressed();
        have_transposed_ = false;
        if (direct_) {
            if (!lu_analyzed_) {
                lu_.analyzePattern(a_);
                lu_analyzed_ = true;
            }
            lu_.factorize(a_);
            return lu_.info() == Eigen::Success;
        }
        fwd_.compute(a_);
        return fwd_.info() == Eigen::Success;
    }

    Vec solve(const Vec& b) { return direct_ ? refine_direct(a_, b, false) : refine(fwd_, a_, b); }
    Vec solve_transposed(const Vec& b) {
        if (direct_) return refine_direct(a_, b, true);
        if (!have_transposed_) {
            at_ = a_.transpose();
            at_.makeCompressed();
            bwd_.compute(at_);
            have_transposed_ = true;
        }
        return refine(bwd_, at_, b);
    }
    bool ok() const { return ok_; }

private:
    using Solver = Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>>;

    Vec refine(Solver& s, const SpMat& a, const Vec& b) {
        s.setTolerance(1e-14);
        s.setMaxIterations(1000);
        Vec x = s.solve(b);
        const Vec r = b - a * x;
        x += s.solve(r);
        if ((b - a * x).lpNorm<Eigen::Infinity>() > 1e-11 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) ok_ = false;
        return x;
    }

    Vec refine_direct(const SpMat& a, const Vec& b, bool transposed) {
        auto once = [&](const Vec& rhs) -> Vec {
            if (transposed) return lu_.transpose().solve(rhs);
            return lu_.solve(rhs);
        };
        auto resid = [&](const Vec& x) -> Vec { return transposed ? Vec(b - a.transpose() * x) : Vec(b - a * x); };
        Vec x = once(b);
        x += once(resid(x));
        if (resid(x).lpNorm<Eigen::Infinity>() > 1e-11 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) ok_ = false;
        return x;
    }

    const MdpBlock& m_;
    bool direct_;
    bool lu_analyzed_ = false;
    Eigen::SparseLU<SpMat> lu_;
    SpMat a_, at_;
    Solver fwd_, bwd_;
    bool ok_ = true;
    bool have_transposed_ = false;
};

double lagrangian_cost(const MdpBlock& m, std::size_t sa, std::span<const double> nu) {
    double g = m.cost[sa];
    for (std::size_t r = 0; r < nu.size(); ++r)
        if (!m.usage[r].empty()) g += nu[r] * m.usage[r][sa];
    return g;
}

// Policy iteration on the Lagrangian cost, warm-started from `pi`.
bool price(const MdpBlock& m, Evaluator& ev, std::span<const double> nu, std::size_t max_iter,
           std::vector<std::uint8_t>& pi, std::size_t& evaluations) {
    Vec g(static_cast<Eigen::Index>(m.n));
    for (std::size_t it = 0; it < max_iter; ++it) {
        ++evaluations;
        if (!ev.factor(pi)) return false;
        for (std::size_t k = 0; k < m.n; ++k) g[static_cast<Eigen::Index>(k)] = lagrangian_cost(m, k * m.na + pi[k], nu);
        const Vec v = ev.solve(g);
        auto q = [&](std::size_t k, std::size_t a) {
            const std::size_t sa = k * m.na + a;
            double e = 0.0;
            for (std::size_t t = m.start[sa]; t < m.start[sa + 1]; ++t) e += m.prob[t] * v[m.next[t]];
            return lagrangian_cost(m, sa, nu) + m.lambda * e;
        };
        bool changed = false;
        for (std::size_t k = 0; k < m.n; ++k) {
            const double current = q(k, pi[k]);
            double best = current;
            std::uint8_t arg = pi[k];
            for (std::size_t a = 0; a < m.na; ++a) {
                const double qa = q(k, a);
                if (qa < best) {
                    best = qa;
                    arg = static_cast<std::uint8_t>(a);
                }
            }
            // Switch only on a clear improvement so round-off cannot cycle.
            if (arg != pi[k] && best < current - 1e-12 * (1.0 + std::abs(current))) {
                pi[k] = arg;
                changed = true;
            }
        }
        if (!changed) return true;
    }
    return false;
}

struct Column {
    std::vector<std::uint8_t> policy;
    Vec mu;
    double cost = 0.0;
    std::vector<double> use;
};

// Expects `ev` to hold the factorization of `pi` when `factored` is set.
Column make_column(const MdpBlock& m, Evaluator& ev, std::vector<std::uint8_t> pi, std::size_t num_rows,
                   bool factored = false) {
    Column col;
    col.policy = std::move(pi);
    col.use.assign(num_rows, 0.0);
    if (!factored) ev.factor(col.policy);
    col.mu = ev.solve_transposed((1.0 - m.lambda) * m.eta);
    for (std::size_t k = 0; k < m.n; ++k) {
        const double w = col.mu[static_cast<Eigen::Index>(k)];
        const std::size_t sa = k * m.na + col.policy[k];
        col.cost += w * m.cost[sa];
        for (std::size_t r = 0; r < num_rows; ++r)
            if (!m.usage[r].empty()) col.use[r] += w * m.usage[r][sa];
    }
    return col;
}

}  // namespace

CgResult column_generation(std::span<const MdpBlock> blocks, std::span<const double> budgets, const CgOptions& options) {
    CgResult res;
    const std::size_t nb = blocks.size(), nr = budgets.size();
    for (const auto& b : blocks)
        if (b.na > 255 || b.usage.size() != nr) {
            res.message = "malformed block";
            return res;
        }

    std::vector<std::vector<Column>> cols(nb);
    std::vector<std::vector<std::uint8_t>> pi(nb);
    std::vector<std::unique_ptr<Evaluator>> ev;
    for (std::size_t b = 0; b < nb; ++b) {
        ev.push_back(std::make_unique<Evaluator>(blocks[b]));
        pi[b].assign(blocks[b].n, 0);
        cols[b].push_back(make_column(blocks[b], *ev[b], pi[b], nr));
    }

    std::vector<double> nu(nr, 0.0);
    LpSolution master;
    std::vector<std::pair<std::size_t, std::size_t>> var_of;  // master var -> (block, column)
    for (std::size_t round = 0;; ++round) {
        LinearProgram mlp;
        var_of.clear();
        mlp.ineq.resize(nr);
        for (std::size_t r = 0; r < nr; ++r) mlp.ineq[r].rhs = budgets[r];
        mlp.eq.resize(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            mlp.eq[b].rhs = 1.0;
            for (std::size_t j = 0; j < cols[b].size(); ++j) {
                const std::size_t v = var_of.size();
                var_of.emplace_back(b, j);
                mlp.objective.push_back({v, cols[b][j].cost});
                for (std::size_t r = 0; r < nr; ++r)
                    if (cols[b][j].use[r] != 0.0) mlp.ineq[r].row.push_back({v, cols[b][j].use[r]});
                mlp.eq[b].row.push_back({v, 1.0});
            }
        }
        mlp.num_vars = var_of.size();
        SolveOptions mo;
        mo.backend = LpBackend::DenseSimplex;
        mo.tol = 1e-11;
        master = solve_dense_simplex(mlp, mo);
        if (!master.optimal() || master.eq_duals.size() != nb) {
            res.status = master.optimal() ? LpStatus::NumericalFailure : master.status;
            res.message = "master LP: " + to_string(master.status);
            return res;
        }
        for (std::size_t r = 0; r < nr; ++r) nu[r] = std::max(0.0, -master.ineq_duals[r]);
        double obj = 0.0;
        for (std::size_t v = 0; v < var_of.size(); ++v) obj += master.x[v] * cols[var_of[v].first][var_of[v].second].cost;
        const double tol = 1e-11 * std::max(1.0, std::abs(obj));

        bool improved = false;
        for (std::size_t b = 0; b < nb; ++b) {
            if (!price(blocks[b], *ev[b], nu, options.max_policy_iterations, pi[b], res.evaluations)) {
                res.message = "policy iteration did not converge";
                return res;
            }
            Column cand = make_column(blocks[b], *ev[b], pi[b], nr, true);
            if (!ev[b]->ok()) {
                res.message = "policy evaluation did not reach the residual target";
                return res;
            }
            double reduced = cand.cost - master.eq_duals[b];
            for (std::size_t r = 0; r < nr; ++r) reduced += nu[r] * cand.use[r];
            // A policy already in the pool prices at its master reduced cost,
            // which is nonnegative up to the master tolerance; re-adding it
            // would cycle on degenerate masters.
            const bool known = std::any_of(cols[b].begin(), cols[b].end(),
                                           [&](const Column& c) { return c.policy == cand.policy; });
            if (reduced < -tol && !known) {
                cols[b].push_back(std::move(cand));
                improved = true;
            }
        }
        res.rounds = round + 1;
        if (!improved) break;
        if (res.rounds >= options.max_rounds) {
            res.message = "column generation round limit reached";
            return res;
        }
    }

    res.x.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) res.x[b].assign(blocks[b].n * blocks[b].na, 0.0);
    for (std::size_t v = 0; v < var_of.size(); ++v) {
        const double w = master.x[v];
        if (w <= 0.0) continue;
        const auto [b, j] = var_of[v];
        const auto& c = cols[b][j];
        for (std::size_t k = 0; k < blocks[b].n; ++k)
            res.x[b][k * blocks[b].na + c.policy[k]] += w * c.mu[static_cast<Eigen::Index>(k)];
    }
    for (const auto& c : cols) res.columns += c.size();
    res.nu = nu;
    res.status = LpStatus::Optimal;
    return res;
}

}  // namespace qaoi::detail
