#include "qaoi/occupancy.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace qaoi {

std::vector<bool> reachable_states(const SystemSpec& spec, const StateSpace& space, std::span<const double> eta) {
    if (eta.size() != space.size()) throw ModelError("initial distribution size does not match state space");
    const KernelTable kernels(spec, space.source_space());
    const auto actions = joint_actions(spec);
    std::vector<bool> seen(space.size(), false);
    std::vector<StateIndex> frontier;
    for (StateIndex s = 0; s < space.size(); ++s)
        if (eta[s] > 0.0) {
            seen[s] = true;
            frontier.push_back(s);
        }
    std::vector<Outcome<StateIndex>> next;
    while (!frontier.empty()) {
        const StateIndex s = frontier.back();
        frontier.pop_back();
        for (const auto& act : actions) {
            kernels.joint_row(space, s, act, next);
            for (const auto& o : next)
                if (o.probability > 0.0 && !seen[o.value]) {
                    seen[o.value] = true;
                    frontier.push_back(o.value);
                }
        }
    }
    return seen;
}

JointLp build_joint_lp(const SystemSpec& spec, const StateSpace& space, std::span<const double> eta,
                       const JointLpOptions& options) {
    spec.validate();
    if (eta.size() != space.size()) throw ModelError("initial distribution size does not match state space");

    JointLp out;
    out.actions = joint_actions(spec);
    out.num_states = space.size();
    out.num_actions = out.actions.size();
    out.position.assign(out.num_states, JointLp::kPruned);
    if (options.prune_unreachable) {
        const auto keep = reachable_states(spec, space, eta);
        for (StateIndex s = 0; s < out.num_states; ++s)
            if (keep[s]) out.states.push_back(s);
    } else {
        out.states.resize(out.num_states);
        std::iota(out.states.begin(), out.states.end(), StateIndex{0});
    }
    for (std::size_t k = 0; k < out.states.size(); ++k) out.position[out.states[k]] = k;

    auto& lp = out.lp;
    const std::size_t rows = out.states.size();
    lp.num_vars = rows * out.num_actions;

    const double lambda = spec.discount;
    const KernelTable kernels(spec, space.source_space());

    lp.eq.resize(rows);
    for (std::size_t k = 0; k < rows; ++k) {
        lp.eq[k].rhs = spec.discount_complement() * eta[out.states[k]];
        lp.eq[k].row.reserve(out.num_actions * 3);
    }
    Constraint tr{{}, spec.gamma_tr, "transmission_budget"};
    Constraint sm{{}, spec.gamma_sm, "sampling_budget"};

    std::vector<Outcome<StateIndex>> next;
    for (std::size_t k = 0; k < rows; ++k) {
        const StateIndex s = out.states[k];
        const double cost = qaoi_cost(space.state(s));
        for (ActionId a = 0; a < out.num_actions; ++a) {
            const std::size_t v = k * out.num_actions + a;
            const Action& act = out.actions[a];
            if (cost != 0.0) lp.objective.push_back({v, cost});
            if (tr_cost(act)) tr.row.push_back({v, 1.0});
            if (sm_cost(act)) sm.row.push_back({v, 1.0});

            // Merge outcomes that land on the same successor so each row
            // holds at most one entry per variable.
            kernels.joint_row(space, s, act, next);
            std::sort(next.begin(), next.end(), [](const auto& l, const auto& r) { return l.value < r.value; });
            double diag = 1.0;
            for (std::size_t j = 0; j < next.size();) {
                const StateIndex t = next[j].value;
                double prob = 0.0;
                for (; j < next.size() && next[j].value == t; ++j) prob += next[j].probability;
                if (t == s)
                    diag -= lambda * prob;
                else if (prob > 0.0)
                    lp.eq[out.position[t]].row.push_back({v, -lambda * prob});
            }
            lp.eq[k].row.push_back({v, diag});
        }
    }
    lp.ineq.push_back(std::move(tr));
    lp.ineq.push_back(std::move(sm));
    return out;
}

JointLp build_joint_lp(const SystemSpec& spec, std::uint64_t limit) {
    const StateSpace space(spec, limit);
    const auto eta = first_slot_distribution(spec, space);
    return build_joint_lp(spec, space, eta);
}

double OccupationMeasure::state_mass(StateIndex s) const {
    double m = 0.0;
    for (std::size_t a = 0; a < actions.size(); ++a) m += std::max(0.0, x[s * actions.size() + a]);
    return m;
}

double OccupationMeasure::total_mass() const { return std::accumulate(x.begin(), x.end(), 0.0); }

OccupationMeasure make_occupation_measure(const SystemSpec& spec, const JointLp& jlp, const LpSolution& sol) {
    if (!sol.optimal()) throw LpError("occupation measure requires an optimal LP solution");
    if (sol.x.size() != jlp.lp.num_vars) throw LpError("solution size does not match joint LP");
    OccupationMeasure m{spec, jlp.num_states, jlp.actions, std::vector<double>(jlp.num_states * jlp.num_actions, 0.0)};
    for (std::size_t k = 0; k < jlp.states.size(); ++k)
        std::copy_n(sol.x.begin() + static_cast<std::ptrdiff_t>(k * jlp.num_actions), jlp.num_actions,
                    m.x.begin() + static_cast<std::ptrdiff_t>(jlp.states[k] * jlp.num_actions));
    return m;
}

RandomizedPolicy::RandomizedPolicy(std::vector<Action> actions, std::size_t num_states)
    : actions_(std::move(actions)), num_states_(num_states), probs_(num_states * actions_.size(), 0.0) {}

ActionId RandomizedPolicy::sample(StateIndex s, double u) const {
    const auto d = distribution(s);
    double acc = 0.0;
    ActionId last = 0;
    for (ActionId a = 0; a < d.size(); ++a) {
        if (d[a] <= 0.0) continue;
        acc += d[a];
        last = a;
        if (u < acc) return a;
    }
    return last;
}

double RandomizedPolicy::max_normalization_error() const {
    double worst = 0.0;
    for (StateIndex s = 0; s < num_states_; ++s) {
        const auto d = distribution(s);
        worst = std::max(worst, std::abs(std::accumulate(d.begin(), d.end(), 0.0) - 1.0));
    }
    return worst;
}

void normalize_rows(std::span<const double> x, std::size_t num_actions, double abs_threshold, std::span<double> out) {
    const std::size_t n = x.size() / num_actions;
    for (std::size_t s = 0; s < n; ++s) {
        double total = 0.0;
        for (std::size_t a = 0; a < num_actions; ++a) total += std::max(0.0, x[s * num_actions + a]);
        for (std::size_t a = 0; a < num_actions; ++a) {
            double& f = out[s * num_actions + a];
            if (total > abs_threshold)
                f = std::max(0.0, x[s * num_actions + a]) / total;
            else
                f = a == 0 ? 1.0 : 0.0;
        }
    }
}

RandomizedPolicy extract_policy(const OccupationMeasure& m, double threshold) {
    RandomizedPolicy policy(m.actions, m.num_states);
    double total = 0.0;
    for (double v : m.x) total += std::max(0.0, v);
    normalize_rows(m.x, m.actions.size(), threshold * total, policy.raw());
    return policy;
}

RandomizedPolicy idle_policy(const SystemSpec& spec, const StateSpace& space) {
    RandomizedPolicy policy(joint_actions(spec), space.size());
    for (StateIndex s = 0; s < space.size(); ++s) policy.distribution(s)[0] = 1.0;
    return policy;
}

PolicyValue evaluate_policy_exact(const SystemSpec& spec, const StateSpace& space, const RandomizedPolicy& policy,
                                  std::span<const double> eta) {
    const std::size_t n = space.size();
    if (policy.num_states() != n || eta.size() != n) throw ModelError("policy/state-space size mismatch");
    const KernelTable kernels(spec, space.source_space());
    const double lambda = spec.discount;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(n * 20);
    Eigen::MatrixXd costs(static_cast<Eigen::Index>(n), 3);
    std::vector<Outcome<StateIndex>> next;
    for (StateIndex s = 0; s < n; ++s) {
        const auto f = policy.distribution(s);
        double tr = 0.0, sm = 0.0;
        triplets.emplace_back(static_cast<int>(s), static_cast<int>(s), 1.0);
        for (ActionId a = 0; a < f.size(); ++a) {
            if (f[a] <= 0.0) continue;
            const Action& act = policy.actions()[a];
            tr += f[a] * tr_cost(act);
            sm += f[a] * sm_cost(act);
            kernels.joint_row(space, s, act, next);
            for (const auto& o : next)
                triplets.emplace_back(static_cast<int>(s), static_cast<int>(o.value), -lambda * f[a] * o.probability);
        }
        const auto row = static_cast<Eigen::Index>(s);
        costs(row, 0) = qaoi_cost(space.state(s));
        costs(row, 1) = tr;
        costs(row, 2) = sm;
    }
    Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(triplets.begin(), triplets.end());  // duplicates are summed
    m.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(m);
    if (lu.info() != Eigen::Success) throw ModelError("singular policy evaluation system");
    const Eigen::MatrixXd v = lu.solve(costs);

    PolicyValue out;
    const double scale = spec.discount_complement();
    for (StateIndex s = 0; s < n; ++s) {
        if (eta[s] == 0.0) continue;
        const auto row = static_cast<Eigen::Index>(s);
        out.qaoi += eta[s] * v(row, 0);
        out.avg_tr += eta[s] * v(row, 1);
        out.avg_sm += eta[s] * v(row, 2);
    }
    out.qaoi *= scale;
    out.avg_tr *= scale;
    out.avg_sm *= scale;
    return out;
}

PolicyValue evaluate_policy_exact(const SystemSpec& spec, const RandomizedPolicy& policy) {
    const StateSpace space(spec);
    const auto eta = first_slot_distribution(spec, space);
    return evaluate_policy_exact(spec, space, policy, eta);
}

}  // namespace qaoi
