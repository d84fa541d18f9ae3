#include "qaoi/weakly_coupled.hpp"

#include "column_generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qaoi {

DecomposedLp build_decomposed_lp(const SystemSpec& spec, const std::vector<std::vector<double>>& per_source_eta,
                                 SamplingBudgetMode mode) {
    spec.validate();
    if (per_source_eta.size() != spec.num_sources()) throw ModelError("need one initial distribution per source");

    const SourceStateSpace space(spec.age_cap);
    const std::size_t ns = space.size();
    const double lambda = spec.discount;

    DecomposedLp out;
    out.states_per_source = ns;
    std::size_t total = 0;
    for (const auto& src : spec.sources) {
        out.offsets.push_back(total);
        out.actions.push_back(source_actions(src.kind));
        total += ns * out.actions.back().size();
    }
    auto& lp = out.lp;
    lp.num_vars = total;

    Constraint tr{{}, spec.gamma_tr, "transmission_budget"};
    Constraint sm_shared{{}, spec.gamma_sm, "sampling_budget"};
    std::vector<Constraint> sm_rows;

    lp.eq.reserve(ns * spec.num_sources());
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        const auto& src = spec.sources[i];
        if (per_source_eta[i].size() != ns) throw ModelError("per-source initial distribution has wrong size");
        const std::size_t row0 = lp.eq.size();
        for (StateIndex s = 0; s < ns; ++s) {
            Constraint c;
            c.rhs = spec.discount_complement() * per_source_eta[i][s];
            c.name = "b" + std::to_string(i) + "_" + std::to_string(s);
            lp.eq.push_back(std::move(c));
        }
        Constraint sm_own{{}, spec.gamma_sm, "sampling_budget_" + std::to_string(i)};
        for (StateIndex s = 0; s < ns; ++s) {
            const SourceState st = space.state(s);
            const double cost = qaoi_cost(st);
            for (std::size_t a = 0; a < out.actions[i].size(); ++a) {
                const ActionKind role = out.actions[i][a];
                const std::size_t v = out.var(i, s, a);
                if (cost != 0.0) lp.objective.push_back({v, cost});
                if (tr_cost(role)) tr.row.push_back({v, 1.0});
                if (sm_cost(role)) (mode == SamplingBudgetMode::Shared ? sm_shared : sm_own).row.push_back({v, 1.0});
                double diag = 1.0;
                for (const auto& o : source_transition(src, spec.p, spec.age_cap, st, role)) {
                    const StateIndex t = space.index_of(o.value);
                    if (t == s)
                        diag -= lambda * o.probability;
                    else
                        lp.eq[row0 + t].row.push_back({v, -lambda * o.probability});
                }
                lp.eq[row0 + s].row.push_back({v, diag});
            }
        }
        if (src.is_random_arrival())
            out.sampling_row.push_back(static_cast<std::size_t>(-1));
        else
            out.sampling_row.push_back(mode == SamplingBudgetMode::Shared ? 1 : 1 + sm_rows.size());
        if (mode == SamplingBudgetMode::PerSource && !src.is_random_arrival()) sm_rows.push_back(std::move(sm_own));
    }
    lp.ineq.push_back(std::move(tr));
    if (mode == SamplingBudgetMode::Shared)
        lp.ineq.push_back(std::move(sm_shared));
    else
        for (auto& r : sm_rows) lp.ineq.push_back(std::move(r));
    return out;
}

DecomposedLp build_decomposed_lp(const SystemSpec& spec, SamplingBudgetMode mode) {
    spec.validate();
    const SourceStateSpace space(spec.age_cap);
    std::vector<std::vector<double>> etas;
    for (const auto& src : spec.sources) etas.push_back(source_first_slot_distribution(src, spec.p, space));
    return build_decomposed_lp(spec, etas, mode);
}

LpSolution solve_decomposed_lp(const SystemSpec& spec, const DecomposedLp& dlp, const CmdpSolveOptions& options,
                               double& used_tol) {
    if (options.method == CmdpMethod::GenericLp) return solve_relaxing(dlp.lp, options.lp, used_tol);

    const SourceStateSpace space(spec.age_cap);
    const KernelTable kernels(spec, space);
    const std::size_t ns = dlp.states_per_source;
    const std::size_t nr = dlp.lp.ineq.size();
    std::vector<detail::MdpBlock> blocks(spec.num_sources());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto& m = blocks[i];
        const auto& acts = dlp.actions[i];
        m.n = ns;
        m.na = acts.size();
        m.lambda = spec.discount;
        m.start.push_back(0);
        m.cost.resize(ns * m.na);
        m.usage.assign(nr, {});
        m.usage[0].assign(ns * m.na, 0.0);
        if (dlp.sampling_row[i] < nr) m.usage[dlp.sampling_row[i]].assign(ns * m.na, 0.0);
        m.eta.resize(static_cast<Eigen::Index>(ns));
        for (StateIndex k = 0; k < ns; ++k) {
            // The balance right-hand side is (1 - lambda) eta.
            m.eta[static_cast<Eigen::Index>(k)] = dlp.lp.eq[i * ns + k].rhs / spec.discount_complement();
            const double c = qaoi_cost(space.state(k));
            for (std::size_t a = 0; a < m.na; ++a) {
                const std::size_t sa = k * m.na + a;
                m.cost[sa] = c;
                m.usage[0][sa] = tr_cost(acts[a]);
                if (dlp.sampling_row[i] < nr) m.usage[dlp.sampling_row[i]][sa] = sm_cost(acts[a]);
                for (const auto& o : kernels.row(i, k, acts[a])) {
                    m.next.push_back(static_cast<std::uint32_t>(o.value));
                    m.prob.push_back(o.probability);
                }
                m.start.push_back(m.next.size());
            }
        }
    }
    std::vector<double> budgets(nr);
    for (std::size_t r = 0; r < nr; ++r) budgets[r] = dlp.lp.ineq[r].rhs;
    const auto cg = detail::column_generation(blocks, budgets, {options.max_rounds, options.max_policy_iterations});
    const LpSolution raw = detail::from_column_generation(cg, dlp.offsets, dlp.lp.num_vars, nr);
    return detail::finalize_relaxing(dlp.lp, options.lp.tol, raw, used_tol);
}

LpSolution solve_decomposed_lp(const SystemSpec& spec, const DecomposedLp& dlp, const CmdpSolveOptions& options) {
    double used = 0.0;
    return solve_decomposed_lp(spec, dlp, options, used);
}

PerSourcePolicy::PerSourcePolicy(std::size_t source, SourceKind kind, std::size_t num_states)
    : source_(source),
      kind_(kind),
      actions_(source_actions(kind)),
      num_states_(num_states),
      probs_(num_states * actions_.size(), 0.0) {}

ActionKind PerSourcePolicy::sample(StateIndex k, double u) const {
    const auto d = distribution(k);
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t a = 0; a < d.size(); ++a) {
        if (d[a] <= 0.0) continue;
        acc += d[a];
        last = a;
        if (u < acc) return actions_[a];
    }
    return actions_[last];
}

std::vector<std::size_t> lagrangian_greedy_actions(const SystemSpec& spec, std::size_t i, double nu_tr, double nu_sm) {
    const SourceStateSpace space(spec.age_cap);
    const KernelTable kernels(spec, space);
    const auto actions = source_actions(spec.sources[i].kind);
    const std::size_t ns = space.size();
    const double lambda = spec.discount;
    std::vector<double> cost(ns);
    for (StateIndex k = 0; k < ns; ++k) cost[k] = qaoi_cost(space.state(k));

    auto q = [&](const std::vector<double>& v, StateIndex k, ActionKind b) {
        double e = 0.0;
        for (const auto& o : kernels.row(i, k, b)) e += o.probability * v[o.value];
        return cost[k] + nu_tr * tr_cost(b) + nu_sm * sm_cost(b) + lambda * e;
    };
    // Value iteration to a sup-norm change below 1e-12 of the value scale.
    std::vector<double> v(ns, 0.0), next(ns);
    for (int it = 0; it < 100000; ++it) {
        double change = 0.0, scale = 1.0;
        for (StateIndex k = 0; k < ns; ++k) {
            double best = q(v, k, actions[0]);
            for (std::size_t a = 1; a < actions.size(); ++a) best = std::min(best, q(v, k, actions[a]));
            next[k] = best;
            change = std::max(change, std::abs(best - v[k]));
            scale = std::max(scale, std::abs(best));
        }
        v.swap(next);
        if (change < 1e-12 * scale) break;
    }
    std::vector<std::size_t> out(ns, 0);
    for (StateIndex k = 0; k < ns; ++k) {
        double best = q(v, k, actions[0]);
        for (std::size_t a = 1; a < actions.size(); ++a) {
            const double qa = q(v, k, actions[a]);
            if (qa < best - 1e-12 * std::max(1.0, std::abs(best))) {
                best = qa;
                out[k] = a;
            }
        }
    }
    return out;
}

std::vector<PerSourcePolicy> extract_per_source_policies(const SystemSpec& spec, const DecomposedLp& dlp,
                                                         const LpSolution& sol, double threshold, UnvisitedFill fill) {
    if (!sol.optimal()) throw LpError("per-source policies require an optimal LP solution");
    if (sol.x.size() != dlp.lp.num_vars) throw LpError("solution size does not match decomposed LP");
    const bool have_duals = sol.ineq_duals.size() == dlp.lp.ineq.size();
    double total = 0.0;
    for (double v : sol.x) total += std::max(0.0, v);
    std::vector<PerSourcePolicy> out;
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        PerSourcePolicy pol(i, spec.sources[i].kind, dlp.states_per_source);
        const std::size_t na = dlp.actions[i].size();
        const std::span<const double> block(sol.x.data() + dlp.offsets[i], dlp.states_per_source * na);
        const double cut = threshold * total;
        normalize_rows(block, na, cut, pol.raw());
        if (fill == UnvisitedFill::LagrangianGreedy && have_duals) {
            const double nu_tr = std::max(0.0, -sol.ineq_duals[0]);
            const std::size_t row = dlp.sampling_row[i];
            const double nu_sm = row < sol.ineq_duals.size() ? std::max(0.0, -sol.ineq_duals[row]) : 0.0;
            const auto greedy = lagrangian_greedy_actions(spec, i, nu_tr, nu_sm);
            for (StateIndex k = 0; k < dlp.states_per_source; ++k) {
                double mass = 0.0;
                for (std::size_t a = 0; a < na; ++a) mass += std::max(0.0, block[k * na + a]);
                if (mass > cut) continue;
                auto d = pol.distribution(k);
                std::fill(d.begin(), d.end(), 0.0);
                d[greedy[k]] = 1.0;
            }
        }
        out.push_back(std::move(pol));
    }
    return out;
}

double lower_bound_value(const LpSolution& sol) {
    if (!sol.optimal()) throw LpError("lower bound requires an optimal LP solution");
    return sol.objective_value;
}

std::vector<SourceUsage> per_source_usage(const DecomposedLp& dlp, const LpSolution& sol) {
    std::vector<SourceUsage> out(dlp.offsets.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        for (StateIndex s = 0; s < dlp.states_per_source; ++s)
            for (std::size_t a = 0; a < dlp.actions[i].size(); ++a) {
                const double v = sol.x[dlp.var(i, s, a)];
                out[i].mass += v;
                out[i].tr += v * tr_cost(dlp.actions[i][a]);
                out[i].sm += v * sm_cost(dlp.actions[i][a]);
            }
    return out;
}

double priority(SourceKind kind, const SourceState& s) {
    return kind == SourceKind::RandomArrival ? static_cast<double>(s.r * (s.delta - s.theta))
                                             : static_cast<double>(s.r * s.delta);
}

std::vector<std::size_t> priority_order(const SystemSpec& spec, const JointState& s, TieBreak) {
    std::vector<std::size_t> order(spec.num_sources());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> h(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) h[i] = priority(spec.sources[i].kind, s.per_source[i]);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (h[a] != h[b]) return h[a] > h[b];
        const bool ra = spec.sources[a].is_random_arrival(), rb = spec.sources[b].is_random_arrival();
        if (ra != rb) return ra;
        return a < b;
    });
    return order;
}

Action truncated_action(const SystemSpec& spec, const JointState& s, std::span<const ActionKind> sampled,
                        TieBreak tie) {
    if (sampled.size() != spec.num_sources()) throw ModelError("need one sampled action per source");
    std::size_t active = 0, only = 0;
    for (std::size_t i = 0; i < sampled.size(); ++i)
        if (sampled[i] != ActionKind::Idle) {
            ++active;
            only = i;
        }
    if (active == 0) return Action::idle();
    if (active == 1) {
        const Action a{sampled[only], only};
        check_action(spec, a);
        return a;
    }
    for (std::size_t i : priority_order(spec, s, tie))
        if (sampled[i] != ActionKind::Idle) {
            const Action a{sampled[i], i};
            check_action(spec, a);
            return a;
        }
    return Action::idle();
}

RandomizedPolicy to_joint_policy(const SystemSpec& spec, const StateSpace& space, const TruncatedPolicy& policy) {
    if (policy.per_source.size() != spec.num_sources()) throw ModelError("need one per-source policy per source");
    const auto actions = joint_actions(spec);
    RandomizedPolicy joint(actions, space.size());
    for (StateIndex s = 0; s < space.size(); ++s) {
        const JointState js = space.state(s);
        auto out = joint.distribution(s);
        double none_before = 1.0;  // P(every higher-ranked source sampled Idle)
        for (std::size_t i : priority_order(spec, js, policy.tie_break)) {
            const auto& pol = policy.per_source[i];
            const auto f = pol.distribution(space.source_index(s, i));
            for (std::size_t a = 1; a < f.size(); ++a)
                out[action_id(spec, Action{pol.actions()[a], i})] += none_before * f[a];
            none_before *= f[0];
        }
        out[0] += none_before;
    }
    return joint;
}

}  // namespace qaoi
