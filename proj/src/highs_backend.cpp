// Adapter from LinearProgram to the HiGHS sparse LP engine.

#include "qaoi/lp.hpp"

#ifdef QAOI_HAVE_HIGHS
#include <Highs.h>
#endif

namespace qaoi {

#ifdef QAOI_HAVE_HIGHS

bool highs_available() { return true; }

LpSolution detail::solve_highs(const LinearProgram& lp, const SolveOptions& options) {
    LpSolution sol;
    sol.backend = "highs";

    const std::size_t m = lp.ineq.size() + lp.eq.size();
    HighsLp model;
    model.num_col_ = static_cast<HighsInt>(lp.num_vars);
    model.num_row_ = static_cast<HighsInt>(m);
    model.sense_ = ObjSense::kMinimize;
    model.col_cost_.assign(lp.num_vars, 0.0);
    for (const auto& e : lp.objective) model.col_cost_[e.index] += e.value;
    model.col_lower_.assign(lp.num_vars, 0.0);
    model.col_upper_.assign(lp.num_vars, kHighsInf);
    model.row_lower_.reserve(m);
    model.row_upper_.reserve(m);
    for (const auto& c : lp.ineq) {
        model.row_lower_.push_back(-kHighsInf);
        model.row_upper_.push_back(c.rhs);
    }
    for (const auto& c : lp.eq) {
        model.row_lower_.push_back(c.rhs);
        model.row_upper_.push_back(c.rhs);
    }

    // Row-wise input transposed to column-wise storage.
    std::vector<HighsInt> count(lp.num_vars + 1, 0);
    auto for_each_row = [&](auto&& fn) {
        std::size_t i = 0;
        for (const auto& c : lp.ineq) fn(i++, c.row);
        for (const auto& c : lp.eq) fn(i++, c.row);
    };
    for_each_row([&](std::size_t, const SparseVector& row) {
        for (const auto& e : row) ++count[e.index + 1];
    });
    for (std::size_t j = 0; j < lp.num_vars; ++j) count[j + 1] += count[j];
    auto& a = model.a_matrix_;
    a.format_ = MatrixFormat::kColwise;
    a.num_col_ = model.num_col_;
    a.num_row_ = model.num_row_;
    a.start_ = count;
    a.index_.resize(static_cast<std::size_t>(count.back()));
    a.value_.resize(static_cast<std::size_t>(count.back()));
    std::vector<HighsInt> fill(count.begin(), count.end() - 1);
    for_each_row([&](std::size_t i, const SparseVector& row) {
        for (const auto& e : row) {
            const auto pos = static_cast<std::size_t>(fill[e.index]++);
            a.index_[pos] = static_cast<HighsInt>(i);
            a.value_[pos] = e.value;
        }
    });

    Highs highs;
    highs.setOptionValue("output_flag", options.verbose);
    highs.setOptionValue("threads", 1);
    highs.setOptionValue("random_seed", 0);
    highs.setOptionValue("primal_feasibility_tolerance", options.tol);
    highs.setOptionValue("dual_feasibility_tolerance", options.tol);
    switch (options.highs_method) {
        case HighsMethod::Simplex: highs.setOptionValue("solver", "simplex"); break;
        case HighsMethod::InteriorPoint:
            highs.setOptionValue("solver", "ipm");
            highs.setOptionValue("run_crossover", "on");
            break;
        case HighsMethod::Choose: break;
    }
    if (highs.passModel(std::move(model)) == HighsStatus::kError) {
        sol.status = LpStatus::NumericalFailure;
        sol.message = "HiGHS rejected the model";
        return sol;
    }
    highs.run();
    const HighsModelStatus ms = highs.getModelStatus();
    const auto& info = highs.getInfo();
    sol.iterations = static_cast<std::size_t>(std::max<HighsInt>(info.simplex_iteration_count, 0) +
                                              std::max<HighsInt>(info.ipm_iteration_count, 0));
    switch (ms) {
        case HighsModelStatus::kOptimal:
            sol.status = LpStatus::Optimal;
        {
            const auto& hs = highs.getSolution();
            sol.x = hs.col_value;
            if (hs.dual_valid) {
                const auto ni = static_cast<std::ptrdiff_t>(lp.ineq.size());
                sol.ineq_duals.assign(hs.row_dual.begin(), hs.row_dual.begin() + ni);
                sol.eq_duals.assign(hs.row_dual.begin() + ni, hs.row_dual.end());
            }
            break;
        }
        case HighsModelStatus::kInfeasible: sol.status = LpStatus::Infeasible; break;
        case HighsModelStatus::kUnbounded: sol.status = LpStatus::Unbounded; break;
        case HighsModelStatus::kUnboundedOrInfeasible: {
            // Resolve the ambiguity by re-solving without presolve.
            highs.setOptionValue("presolve", "off");
            highs.run();
            sol.status = highs.getModelStatus() == HighsModelStatus::kUnbounded ? LpStatus::Unbounded
                                                                                : LpStatus::Infeasible;
            break;
        }
        default:
            sol.status = LpStatus::NumericalFailure;
            sol.message = "HiGHS status: " + highs.modelStatusToString(ms);
    }
    return sol;
}

#else

bool highs_available() { return false; }

LpSolution detail::solve_highs(const LinearProgram& lp, const SolveOptions& options) {
    return solve_dense_simplex(lp, options);
}

#endif

}  // namespace qaoi
