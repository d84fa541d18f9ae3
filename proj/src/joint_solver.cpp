#include <algorithm>
#include <cstdio>

#include "column_generation.hpp"
#include "qaoi/occupancy.hpp"

namespace qaoi {

namespace {

detail::MdpBlock joint_block(const SystemSpec& spec, const StateSpace& space, const JointLp& jlp,
                             std::span<const double> eta) {
    detail::MdpBlock m;
    m.n = jlp.states.size();
    m.na = jlp.num_actions;
    m.lambda = spec.discount;
    m.start.reserve(m.n * m.na + 1);
    m.start.push_back(0);
    m.cost.resize(m.n * m.na);
    m.usage.assign(2, std::vector<double>(m.n * m.na, 0.0));
    m.eta.resize(static_cast<Eigen::Index>(m.n));
    const KernelTable kernels(spec, space.source_space());
    std::vector<Outcome<StateIndex>> out;
    for (std::size_t k = 0; k < m.n; ++k) {
        const StateIndex s = jlp.states[k];
        const double c = qaoi_cost(space.state(s));
        m.eta[static_cast<Eigen::Index>(k)] = eta[s];
        for (std::size_t a = 0; a < m.na; ++a) {
            const std::size_t sa = k * m.na + a;
            m.cost[sa] = c;
            m.usage[0][sa] = tr_cost(jlp.actions[a]);
            m.usage[1][sa] = sm_cost(jlp.actions[a]);
            kernels.joint_row(space, s, jlp.actions[a], out);
            std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.value < r.value; });
            for (std::size_t j = 0; j < out.size();) {
                const StateIndex t = out[j].value;
                double p = 0.0;
                for (; j < out.size() && out[j].value == t; ++j) p += out[j].probability;
                if (p > 0.0) {
                    m.next.push_back(static_cast<std::uint32_t>(jlp.position[t]));
                    m.prob.push_back(p);
                }
            }
            m.start.push_back(m.next.size());
        }
    }
    return m;
}

}  // namespace

LpSolution detail::from_column_generation(const CgResult& cg, std::vector<std::size_t> offsets, std::size_t num_vars,
                                          std::size_t num_ineq) {
    LpSolution sol;
    sol.backend = "column-generation";
    sol.status = cg.status;
    sol.iterations = cg.evaluations;
    if (!cg.optimal()) {
        sol.message = cg.message;
        return sol;
    }
    sol.x.assign(num_vars, 0.0);
    for (std::size_t b = 0; b < cg.x.size(); ++b) std::copy(cg.x[b].begin(), cg.x[b].end(), sol.x.begin() + offsets[b]);
    sol.ineq_duals.resize(num_ineq);
    for (std::size_t r = 0; r < num_ineq; ++r) sol.ineq_duals[r] = -cg.nu[r];
    char buf[80];
    std::snprintf(buf, sizeof buf, "%zu rounds, %zu columns, %zu policy evaluations", cg.rounds, cg.columns,
                  cg.evaluations);
    sol.message = buf;
    return sol;
}

LpSolution solve_joint_lp(const SystemSpec& spec, const StateSpace& space, const JointLp& jlp,
                          std::span<const double> eta, const CmdpSolveOptions& options, double& used_tol) {
    used_tol = options.lp.tol;
    CmdpMethod method = options.method;
    if (method == CmdpMethod::Auto)
        method = jlp.lp.eq.size() <= options.generic_row_limit ? CmdpMethod::GenericLp : CmdpMethod::ColumnGeneration;
    if (method == CmdpMethod::GenericLp) return solve_relaxing(jlp.lp, options.lp, used_tol);

    if (jlp.num_actions > 255) throw LpError("column generation supports at most 255 joint actions");
    const std::vector<detail::MdpBlock> blocks{joint_block(spec, space, jlp, eta)};
    const std::vector<double> budgets{spec.gamma_tr, spec.gamma_sm};
    const auto cg = detail::column_generation(blocks, budgets, {options.max_rounds, options.max_policy_iterations});
    const LpSolution raw = detail::from_column_generation(cg, {0}, jlp.lp.num_vars, 2);
    return detail::finalize_relaxing(jlp.lp, options.lp.tol, raw, used_tol);
}

LpSolution solve_joint_lp(const SystemSpec& spec, const StateSpace& space, const JointLp& jlp,
                          std::span<const double> eta, const CmdpSolveOptions& options) {
    double used = 0.0;
    return solve_joint_lp(spec, space, jlp, eta, options, used);
}

}  // namespace qaoi
