#pragma once

// Sparse linear programs in inequality/equality form with x >= 0, and the
// solver contract shared by the joint and decomposed occupation-measure LPs.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qaoi {

struct SparseEntry {
    std::size_t index;
    double value;
};
using SparseVector = std::vector<SparseEntry>;

/// row . x (<= or =) rhs, depending on which list of the LP it lives in.
struct Constraint {
    SparseVector row;
    double rhs = 0.0;
    std::string name;
};

/**
 * minimize objective . x
 * subject to ineq[i].row . x <= ineq[i].rhs
 *            eq[j].row   . x  = eq[j].rhs
 *            x >= 0
 */
struct LinearProgram {
    std::size_t num_vars = 0;
    SparseVector objective;
    std::vector<Constraint> ineq;
    std::vector<Constraint> eq;

    /// Throws LpError on out-of-range indices or non-finite coefficients.
    void check() const;
    std::size_t num_nonzeros() const;
};

class LpError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, NumericalFailure };
std::string to_string(LpStatus s);

struct LpSolution {
    LpStatus status = LpStatus::NumericalFailure;
    std::vector<double> x;
    /// Row multipliers y with c - A^T y >= 0 at optimum (so y <= 0 on binding
    /// <= rows). Filled by backends that expose them; empty otherwise.
    std::vector<double> ineq_duals, eq_duals;
    double objective_value = 0.0;
    double max_eq_residual = 0.0;
    double max_ineq_violation = 0.0;
    std::string backend;
    std::size_t iterations = 0;
    std::string message;

    bool optimal() const { return status == LpStatus::Optimal; }
};

enum class LpBackend {
    Auto,          ///< dense simplex for small instances, sparse engine otherwise
    DenseSimplex,  ///< embedded revised simplex
    Highs,         ///< external sparse engine (HiGHS), when compiled in
};

enum class HighsMethod { Choose, Simplex, InteriorPoint };

struct SolveOptions {
    double tol = 1e-8;
    LpBackend backend = LpBackend::Auto;
    HighsMethod highs_method = HighsMethod::Choose;
    /// Auto selects the dense simplex up to this many constraint rows.
    std::size_t dense_row_limit = 400;
    std::size_t max_iterations = 1'000'000;
    bool verbose = false;
};

inline constexpr double kDefaultLpTolerance = 1e-8;
/// Documented fallback for discount factors very close to one.
inline constexpr double kRelaxedLpTolerance = 1e-6;

LpSolution solve(const LinearProgram& lp, const SolveOptions& options = {});

/// solve(), retried once at kRelaxedLpTolerance on NumericalFailure. The
/// tolerance actually met is reported in `used_tol`.
LpSolution solve_relaxing(const LinearProgram& lp, const SolveOptions& options, double& used_tol);

bool highs_available();

struct LpResiduals {
    double max_eq_residual = 0.0;
    /// max(0, max_i row_i . x - rhs_i, max_j -x_j)
    double max_ineq_violation = 0.0;
    double objective = 0.0;
};

/// Throws LpError if x.size() != lp.num_vars.
LpResiduals validate(const LinearProgram& lp, std::span<const double> x);

/// CPLEX-style LP text (fixed-point coefficients, 12 significant digits).
void write_lp_text(const LinearProgram& lp, std::ostream& os);

namespace detail {
LpSolution solve_dense_simplex(const LinearProgram& lp, const SolveOptions& options);
LpSolution solve_highs(const LinearProgram& lp, const SolveOptions& options);
/// Clip round-off negatives, recompute residuals and downgrade to
/// NumericalFailure if the tolerance is not met.
void finalize_solution(const LinearProgram& lp, double tol, LpSolution& sol);
/// finalize_solution at `tol`, retried at kRelaxedLpTolerance when only the tolerance fails.
LpSolution finalize_relaxing(const LinearProgram& lp, double tol, const LpSolution& raw, double& used_tol);
}  // namespace detail

}  // namespace qaoi
