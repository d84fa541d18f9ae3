#include "qaoi/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace qaoi {

void LinearProgram::check() const {
    auto check_row = [&](const SparseVector& row, const std::string& what) {
        for (const auto& e : row) {
            if (e.index >= num_vars) throw LpError(what + ": variable index " + std::to_string(e.index) + " out of range");
            if (!std::isfinite(e.value)) throw LpError(what + ": non-finite coefficient");
        }
    };
    check_row(objective, "objective");
    for (std::size_t i = 0; i < ineq.size(); ++i) {
        check_row(ineq[i].row, "inequality row " + std::to_string(i));
        if (!std::isfinite(ineq[i].rhs)) throw LpError("inequality row " + std::to_string(i) + ": non-finite bound");
    }
    for (std::size_t i = 0; i < eq.size(); ++i) {
        check_row(eq[i].row, "equality row " + std::to_string(i));
        if (!std::isfinite(eq[i].rhs)) throw LpError("equality row " + std::to_string(i) + ": non-finite rhs");
    }
}

std::size_t LinearProgram::num_nonzeros() const {
    std::size_t n = 0;
    for (const auto& c : ineq) n += c.row.size();
    for (const auto& c : eq) n += c.row.size();
    return n;
}

std::string to_string(LpStatus s) {
    switch (s) {
        case LpStatus::Optimal: return "optimal";
        case LpStatus::Infeasible: return "infeasible";
        case LpStatus::Unbounded: return "unbounded";
        case LpStatus::NumericalFailure: return "numerical_failure";
    }
    return "?";
}

namespace {

double dot(const SparseVector& row, std::span<const double> x) {
    double s = 0.0;
    for (const auto& e : row) s += e.value * x[e.index];
    return s;
}

}  // namespace

LpResiduals validate(const LinearProgram& lp, std::span<const double> x) {
    if (x.size() != lp.num_vars)
        throw LpError("dimension mismatch: x has " + std::to_string(x.size()) + " entries, LP has " +
                      std::to_string(lp.num_vars) + " variables");
    LpResiduals r;
    r.objective = dot(lp.objective, x);
    for (const auto& c : lp.eq) r.max_eq_residual = std::max(r.max_eq_residual, std::abs(dot(c.row, x) - c.rhs));
    for (const auto& c : lp.ineq) r.max_ineq_violation = std::max(r.max_ineq_violation, dot(c.row, x) - c.rhs);
    for (double v : x) r.max_ineq_violation = std::max(r.max_ineq_violation, -v);
    return r;
}

void detail::finalize_solution(const LinearProgram& lp, double tol, LpSolution& sol) {
    if (sol.status != LpStatus::Optimal) return;
    for (double& v : sol.x) {
        if (v < 0.0 && v >= -1e-9) v = 0.0;
    }
    const auto r = validate(lp, sol.x);
    sol.objective_value = r.objective;
    sol.max_eq_residual = r.max_eq_residual;
    sol.max_ineq_violation = r.max_ineq_violation;
    if (r.max_eq_residual > tol || r.max_ineq_violation > tol) {
        sol.status = LpStatus::NumericalFailure;
        char buf[160];
        std::snprintf(buf, sizeof buf, "residuals eq=%.3e ineq=%.3e exceed tolerance %.1e", r.max_eq_residual,
                      r.max_ineq_violation, tol);
        sol.message = buf;
    }
}

LpSolution detail::finalize_relaxing(const LinearProgram& lp, double tol, const LpSolution& raw, double& used_tol) {
    used_tol = tol;
    LpSolution sol = raw;
    finalize_solution(lp, tol, sol);
    if (sol.status == LpStatus::NumericalFailure && raw.optimal() && tol < kRelaxedLpTolerance) {
        used_tol = kRelaxedLpTolerance;
        sol = raw;
        finalize_solution(lp, kRelaxedLpTolerance, sol);
    }
    return sol;
}

LpSolution solve(const LinearProgram& lp, const SolveOptions& options) {
    lp.check();
    LpBackend backend = options.backend;
    if (backend == LpBackend::Auto) {
        const std::size_t rows = lp.eq.size() + lp.ineq.size();
        backend = (rows <= options.dense_row_limit || !highs_available()) ? LpBackend::DenseSimplex : LpBackend::Highs;
    }
    LpSolution sol = backend == LpBackend::Highs ? detail::solve_highs(lp, options)
                                                 : detail::solve_dense_simplex(lp, options);
    detail::finalize_solution(lp, options.tol, sol);
    return sol;
}

LpSolution solve_relaxing(const LinearProgram& lp, const SolveOptions& options, double& used_tol) {
    used_tol = options.tol;
    LpSolution sol = solve(lp, options);
    if (sol.status == LpStatus::NumericalFailure && options.tol < kRelaxedLpTolerance) {
        SolveOptions relaxed = options;
        relaxed.tol = kRelaxedLpTolerance;
        used_tol = relaxed.tol;
        sol = solve(lp, relaxed);
    }
    return sol;
}

namespace {

// Fixed-point rendering with `digits` significant digits.
std::string fixed_point(double v, int digits = 12) {
    if (v == 0.0) return "0";
    const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(v))));
    const int decimals = std::max(0, digits - 1 - magnitude);
    char buf[512];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    return s;
}

void write_terms(const SparseVector& row, std::ostream& os) {
    if (row.empty()) {
        os << " 0 x0";
        return;
    }
    int on_line = 0;
    bool first = true;
    for (const auto& e : row) {
        if (on_line == 8) {
            os << "\n   ";
            on_line = 0;
        }
        const bool neg = e.value < 0.0;
        if (first)
            os << (neg ? " - " : " ");
        else
            os << (neg ? " - " : " + ");
        os << fixed_point(std::abs(e.value)) << " x" << e.index;
        first = false;
        ++on_line;
    }
}

}  // namespace

void write_lp_text(const LinearProgram& lp, std::ostream& os) {
    os << "\\ " << lp.num_vars << " variables, " << lp.eq.size() << " equalities, " << lp.ineq.size()
       << " inequalities\n";
    os << "Minimize\n obj:";
    write_terms(lp.objective, os);
    os << "\nSubject To\n";
    for (std::size_t i = 0; i < lp.eq.size(); ++i) {
        os << " " << (lp.eq[i].name.empty() ? "e" + std::to_string(i) : lp.eq[i].name) << ":";
        write_terms(lp.eq[i].row, os);
        os << " = " << fixed_point(lp.eq[i].rhs) << "\n";
    }
    for (std::size_t i = 0; i < lp.ineq.size(); ++i) {
        os << " " << (lp.ineq[i].name.empty() ? "i" + std::to_string(i) : lp.ineq[i].name) << ":";
        write_terms(lp.ineq[i].row, os);
        os << " <= " << fixed_point(lp.ineq[i].rhs) << "\n";
    }
    os << "End\n";
}

}  // namespace qaoi
