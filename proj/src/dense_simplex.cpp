// Embedded two-phase revised simplex with an explicit dense basis inverse.
//
// Pricing is Dantzig's rule; after a run of degenerate pivots it falls back to
// Bland's smallest-index rule (entering and leaving) until the objective moves
// again, which rules out cycling. The inverse is updated in product form and
// rebuilt by Gauss-Jordan elimination every `kRefactorPeriod` pivots.

#include <algorithm>
#include <cmath>
#include <limits>

#include "qaoi/lp.hpp"

namespace qaoi::detail {

namespace {

constexpr std::size_t kRefactorPeriod = 64;
constexpr std::size_t kDegenerateRunBeforeBland = 40;
constexpr double kPivotTol = 1e-9;

struct Column {
    std::vector<std::size_t> rows;
    std::vector<double> values;
};

class DenseSimplex {
public:
    DenseSimplex(const LinearProgram& lp, const SolveOptions& opts) : lp_(lp), opts_(opts) { build(); }

    LpSolution run();

private:
    void build();
    bool refactor();
    void compute_duals(const std::vector<double>& cost, std::vector<double>& y) const;
    double reduced_cost(std::size_t j, const std::vector<double>& cost, const std::vector<double>& y) const;
    void ftran(std::size_t j, std::vector<double>& u) const;
    void pivot(std::size_t r, std::size_t q, const std::vector<double>& u);
    // Returns false on unboundedness; throws nothing. `status` set on exit.
    LpStatus optimize(const std::vector<double>& cost, const std::vector<char>& barred);

    const LinearProgram& lp_;
    SolveOptions opts_;

    std::size_t m_ = 0;        // rows
    std::size_t n_struct_ = 0;
    std::size_t n_slack_ = 0;
    std::size_t n_total_ = 0;  // structural + slack + artificial
    std::vector<Column> cols_;
    std::vector<double> b_;

    std::vector<std::size_t> basis_;  // basis_[row position] = column index
    std::vector<char> is_basic_;
    std::vector<double> binv_;        // m x m row-major
    std::vector<double> xb_;
    std::vector<double> sign_;  // rows were negated where rhs < 0
    std::size_t iterations_ = 0;
    std::size_t since_refactor_ = 0;
};

void DenseSimplex::build() {
    n_struct_ = lp_.num_vars;
    n_slack_ = lp_.ineq.size();
    m_ = lp_.ineq.size() + lp_.eq.size();
    n_total_ = n_struct_ + n_slack_ + m_;
    cols_.assign(n_total_, Column{});
    b_.assign(m_, 0.0);

    std::vector<const Constraint*> rows;
    for (const auto& c : lp_.ineq) rows.push_back(&c);
    for (const auto& c : lp_.eq) rows.push_back(&c);

    sign_.assign(m_, 1.0);
    auto& sign = sign_;
    for (std::size_t i = 0; i < m_; ++i) {
        if (rows[i]->rhs < 0.0) sign[i] = -1.0;
        b_[i] = sign[i] * rows[i]->rhs;
        for (const auto& e : rows[i]->row) {
            cols_[e.index].rows.push_back(i);
            cols_[e.index].values.push_back(sign[i] * e.value);
        }
    }
    // Merge duplicate (row, column) entries.
    for (std::size_t j = 0; j < n_struct_; ++j) {
        auto& c = cols_[j];
        std::vector<std::size_t> order(c.rows.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c.rows[a] < c.rows[b]; });
        Column merged;
        for (std::size_t k : order) {
            if (!merged.rows.empty() && merged.rows.back() == c.rows[k])
                merged.values.back() += c.values[k];
            else {
                merged.rows.push_back(c.rows[k]);
                merged.values.push_back(c.values[k]);
            }
        }
        c = std::move(merged);
    }
    for (std::size_t i = 0; i < n_slack_; ++i) {
        cols_[n_struct_ + i].rows = {i};
        cols_[n_struct_ + i].values = {sign[i]};
    }
    for (std::size_t i = 0; i < m_; ++i) {
        cols_[n_struct_ + n_slack_ + i].rows = {i};
        cols_[n_struct_ + n_slack_ + i].values = {1.0};
    }

    basis_.assign(m_, 0);
    is_basic_.assign(n_total_, 0);
    for (std::size_t i = 0; i < m_; ++i) {
        const bool slack_ok = i < n_slack_ && sign[i] > 0.0;
        basis_[i] = slack_ok ? n_struct_ + i : n_struct_ + n_slack_ + i;
        is_basic_[basis_[i]] = 1;
    }
    binv_.assign(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) binv_[i * m_ + i] = 1.0;
    xb_ = b_;
}

bool DenseSimplex::refactor() {
    // Gauss-Jordan with partial pivoting on [B | I].
    std::vector<double> bmat(m_ * m_, 0.0);
    for (std::size_t k = 0; k < m_; ++k) {
        const auto& c = cols_[basis_[k]];
        for (std::size_t t = 0; t < c.rows.size(); ++t) bmat[c.rows[t] * m_ + k] = c.values[t];
    }
    std::vector<double> inv(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) inv[i * m_ + i] = 1.0;
    for (std::size_t col = 0; col < m_; ++col) {
        std::size_t piv = col;
        double best = std::abs(bmat[col * m_ + col]);
        for (std::size_t r = col + 1; r < m_; ++r)
            if (std::abs(bmat[r * m_ + col]) > best) {
                best = std::abs(bmat[r * m_ + col]);
                piv = r;
            }
        if (best < 1e-12) return false;
        if (piv != col) {
            std::swap_ranges(bmat.begin() + piv * m_, bmat.begin() + (piv + 1) * m_, bmat.begin() + col * m_);
            std::swap_ranges(inv.begin() + piv * m_, inv.begin() + (piv + 1) * m_, inv.begin() + col * m_);
        }
        const double d = bmat[col * m_ + col];
        for (std::size_t c = 0; c < m_; ++c) {
            bmat[col * m_ + c] /= d;
            inv[col * m_ + c] /= d;
        }
        for (std::size_t r = 0; r < m_; ++r) {
            if (r == col) continue;
            const double f = bmat[r * m_ + col];
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < m_; ++c) {
                bmat[r * m_ + c] -= f * bmat[col * m_ + c];
                inv[r * m_ + c] -= f * inv[col * m_ + c];
            }
        }
    }
    binv_ = std::move(inv);
    for (std::size_t i = 0; i < m_; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < m_; ++k) s += binv_[i * m_ + k] * b_[k];
        xb_[i] = s;
    }
    since_refactor_ = 0;
    return true;
}

void DenseSimplex::compute_duals(const std::vector<double>& cost, std::vector<double>& y) const {
    y.assign(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
        const double cb = cost[basis_[i]];
        if (cb == 0.0) continue;
        const double* row = &binv_[i * m_];
        for (std::size_t k = 0; k < m_; ++k) y[k] += cb * row[k];
    }
}

double DenseSimplex::reduced_cost(std::size_t j, const std::vector<double>& cost, const std::vector<double>& y) const {
    double d = cost[j];
    const auto& c = cols_[j];
    for (std::size_t t = 0; t < c.rows.size(); ++t) d -= y[c.rows[t]] * c.values[t];
    return d;
}

void DenseSimplex::ftran(std::size_t j, std::vector<double>& u) const {
    u.assign(m_, 0.0);
    const auto& c = cols_[j];
    for (std::size_t i = 0; i < m_; ++i) {
        double s = 0.0;
        const double* row = &binv_[i * m_];
        for (std::size_t t = 0; t < c.rows.size(); ++t) s += row[c.rows[t]] * c.values[t];
        u[i] = s;
    }
}

void DenseSimplex::pivot(std::size_t r, std::size_t q, const std::vector<double>& u) {
    const double ur = u[r];
    double* prow = &binv_[r * m_];
    for (std::size_t k = 0; k < m_; ++k) prow[k] /= ur;
    for (std::size_t i = 0; i < m_; ++i) {
        if (i == r || u[i] == 0.0) continue;
        const double f = u[i];
        double* row = &binv_[i * m_];
        for (std::size_t k = 0; k < m_; ++k) row[k] -= f * prow[k];
    }
    is_basic_[basis_[r]] = 0;
    basis_[r] = q;
    is_basic_[q] = 1;
    ++since_refactor_;
}

LpStatus DenseSimplex::optimize(const std::vector<double>& cost, const std::vector<char>& barred) {
    double cmax = 1.0;
    for (double c : cost) cmax = std::max(cmax, std::abs(c));
    const double dtol = std::min(opts_.tol, 1e-9) * cmax;

    std::vector<double> y, u;
    std::size_t degenerate_run = 0;
    bool bland = false;

    while (true) {
        if (iterations_ >= opts_.max_iterations) return LpStatus::NumericalFailure;
        if (since_refactor_ >= kRefactorPeriod && !refactor()) return LpStatus::NumericalFailure;

        compute_duals(cost, y);
        std::size_t q = n_total_;
        double best = -dtol;
        for (std::size_t j = 0; j < n_total_; ++j) {
            if (is_basic_[j] || barred[j]) continue;
            const double d = reduced_cost(j, cost, y);
            if (d < best) {
                q = j;
                best = d;
                if (bland) break;
            }
        }
        if (q == n_total_) return LpStatus::Optimal;

        ftran(q, u);
        std::size_t r = m_;
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m_; ++i) {
            if (u[i] <= kPivotTol) continue;
            const double ratio = std::max(xb_[i], 0.0) / u[i];
            const bool better = ratio < theta - 1e-12 ||
                                (ratio <= theta + 1e-12 && r < m_ &&
                                 (bland ? basis_[i] < basis_[r] : u[i] > u[r]));
            if (r == m_ || better) {
                r = i;
                theta = ratio;
            }
        }
        if (r == m_) return LpStatus::Unbounded;

        for (std::size_t i = 0; i < m_; ++i) xb_[i] -= theta * u[i];
        xb_[r] = theta;
        pivot(r, q, u);
        ++iterations_;

        if (theta <= 1e-12) {
            if (++degenerate_run >= kDegenerateRunBeforeBland) bland = true;
        } else {
            degenerate_run = 0;
            bland = false;
        }
    }
}

LpSolution DenseSimplex::run() {
    LpSolution sol;
    sol.backend = "dense-simplex";
    const std::size_t art0 = n_struct_ + n_slack_;

    // Phase I: minimize the sum of artificials.
    std::vector<double> cost1(n_total_, 0.0);
    for (std::size_t j = art0; j < n_total_; ++j) cost1[j] = 1.0;
    std::vector<char> barred(n_total_, 0);
    // Artificials that start nonbasic never need to enter.
    for (std::size_t j = art0; j < n_total_; ++j) barred[j] = !is_basic_[j];

    LpStatus st = optimize(cost1, barred);
    if (st != LpStatus::Optimal) {
        sol.status = LpStatus::NumericalFailure;
        sol.iterations = iterations_;
        sol.message = "phase I did not converge";
        return sol;
    }
    if (!refactor()) {
        sol.status = LpStatus::NumericalFailure;
        sol.message = "singular basis after phase I";
        return sol;
    }
    double infeas = 0.0, bmax = 1.0;
    for (std::size_t i = 0; i < m_; ++i)
        if (basis_[i] >= art0) infeas += std::max(xb_[i], 0.0);
    for (double v : b_) bmax = std::max(bmax, std::abs(v));
    if (infeas > std::max(opts_.tol, 1e-9) * bmax) {
        sol.status = LpStatus::Infeasible;
        sol.iterations = iterations_;
        return sol;
    }

    // Drive remaining (zero-valued) artificials out of the basis where possible.
    std::vector<double> u;
    for (std::size_t r = 0; r < m_; ++r) {
        if (basis_[r] < art0) continue;
        for (std::size_t j = 0; j < art0; ++j) {
            if (is_basic_[j]) continue;
            ftran(j, u);
            if (std::abs(u[r]) > 1e-7) {
                const double theta = xb_[r] / u[r];
                for (std::size_t i = 0; i < m_; ++i) xb_[i] -= theta * u[i];
                xb_[r] = theta;
                pivot(r, j, u);
                break;
            }
        }
    }
    for (std::size_t j = art0; j < n_total_; ++j) barred[j] = 1;

    std::vector<double> cost2(n_total_, 0.0);
    for (const auto& e : lp_.objective) cost2[e.index] += e.value;
    st = optimize(cost2, barred);
    sol.iterations = iterations_;
    if (st != LpStatus::Optimal) {
        sol.status = st;
        if (st == LpStatus::NumericalFailure) sol.message = "iteration limit reached";
        return sol;
    }
    if (!refactor()) {
        sol.status = LpStatus::NumericalFailure;
        sol.message = "singular final basis";
        return sol;
    }
    sol.x.assign(n_struct_, 0.0);
    for (std::size_t i = 0; i < m_; ++i)
        if (basis_[i] < n_struct_) sol.x[basis_[i]] = xb_[i];
    std::vector<double> y;
    compute_duals(cost2, y);
    sol.ineq_duals.resize(n_slack_);
    sol.eq_duals.resize(m_ - n_slack_);
    for (std::size_t i = 0; i < m_; ++i)
        (i < n_slack_ ? sol.ineq_duals[i] : sol.eq_duals[i - n_slack_]) = sign_[i] * y[i];
    sol.status = LpStatus::Optimal;
    return sol;
}

}  // namespace

LpSolution solve_dense_simplex(const LinearProgram& lp, const SolveOptions& options) {
    if (lp.eq.empty() && lp.ineq.empty()) {
        // No rows: optimum at x = 0 unless some cost is negative.
        LpSolution sol;
        sol.backend = "dense-simplex";
        sol.x.assign(lp.num_vars, 0.0);
        for (const auto& e : lp.objective)
            if (e.value < 0.0) {
                sol.status = LpStatus::Unbounded;
                return sol;
            }
        sol.status = LpStatus::Optimal;
        return sol;
    }
    DenseSimplex s(lp, options);
    return s.run();
}

}  // namespace qaoi::detail
