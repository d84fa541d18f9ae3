#pragma once

// Dantzig-Wolfe column generation for block-angular occupation-measure LPs:
// independent discounted MDP blocks linked only by a few <= budget rows. The
// master LP mixes occupation measures of deterministic stationary policies;
// columns are priced by policy iteration on the Lagrangian cost.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qaoi/lp.hpp"

namespace qaoi::detail {

struct MdpBlock {
    std::size_t n = 0, na = 0;
    double lambda = 0.0;
    std::vector<std::size_t> start;  // (s * na + a) -> offset into next/prob; n * na + 1 entries
    std::vector<std::uint32_t> next;
    std::vector<double> prob;
    std::vector<double> cost;                // n * na
    std::vector<std::vector<double>> usage;  // [budget row] -> n * na, or empty if the row ignores this block
    Eigen::VectorXd eta;                     // law of the first decision slot
};

struct CgOptions {
    std::size_t max_rounds = 500;
    std::size_t max_policy_iterations = 200;
};

struct CgResult {
    LpStatus status = LpStatus::NumericalFailure;
    std::string message;
    std::vector<std::vector<double>> x;  // per block, n * na
    std::vector<double> nu;              // budget multipliers, >= 0
    std::size_t rounds = 0, evaluations = 0, columns = 0;

    bool optimal() const { return status == LpStatus::Optimal; }
};

/// Action 0 of every block must use no budget (it seeds a feasible master).
CgResult column_generation(std::span<const MdpBlock> blocks, std::span<const double> budgets, const CgOptions& options);

/// Lays the per-block x out at `offsets` and reports multipliers as <= row duals.
LpSolution from_column_generation(const CgResult& cg, std::vector<std::size_t> offsets, std::size_t num_vars,
                                  std::size_t num_ineq);

}  // namespace qaoi::detail
