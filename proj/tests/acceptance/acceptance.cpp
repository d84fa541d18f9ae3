// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "qaoi/experiments.hpp"
#include "qaoi/occupancy.hpp"
#include "qaoi/simulator.hpp"
#include "qaoi/weakly_coupled.hpp"

using namespace qaoi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [violated: " << what << "]";
        }
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Wilson-Hilferty approximation of the 0.999 chi-square quantile.
double chi2_999(double k) {
    const double z = 3.090232306;
    const double a = 2.0 / (9.0 * k);
    return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

SystemSpec two_sources(int cap, double p, double lambda, double gtr, double gsm) {
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(0.6, {0.7, 0.4}), SourceSpec::generate_at_will({0.7, 0.4})};
    s.p = p;
    s.age_cap = cap;
    s.discount = lambda;
    s.gamma_tr = gtr;
    s.gamma_sm = gsm;
    return s;
}

SystemSpec random_spec(std::mt19937_64& g, int max_cap, std::size_t max_sources) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(g); };
    SystemSpec s;
    const std::size_t n = 2 + g() % (max_sources - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const QueryChain q{in(0.2, 0.95), in(0.1, 0.8)};
        s.sources.push_back(g() % 2 ? SourceSpec::random_arrival(in(0.2, 0.9), q) : SourceSpec::generate_at_will(q));
    }
    s.p = in(0.4, 1.0);
    s.age_cap = 2 + static_cast<int>(g() % static_cast<std::uint64_t>(max_cap - 1));
    if (n > 2) s.age_cap = std::min(s.age_cap, 3);
    s.discount = in(0.9, 0.95);
    s.gamma_tr = in(0.1, 0.9);
    s.gamma_sm = in(0.05, s.gamma_tr);
    return s;
}

struct JointSolve {
    SystemSpec spec;
    StateSpace space;
    std::vector<double> eta;
    JointLp jlp;
    LpSolution sol;
    double seconds = 0.0;

    explicit JointSolve(const SystemSpec& s)
        : spec(s), space(s, UINT64_MAX), eta(first_slot_distribution(spec, space)) {
        const auto t0 = Clock::now();
        jlp = build_joint_lp(spec, space, eta);
        sol = solve_joint_lp(spec, space, jlp, eta);
        seconds = seconds_since(t0);
    }
};

// ---------------------------------------------------------------------------

Verdict kernel_stochasticity() {
    Verdict v;
    const auto t0 = Clock::now();
    std::size_t rows = 0;
    double worst = 0.0;
    bool negative = false;
    for (int cap : {3, 20}) {
        const auto spec = two_sources(cap, 0.8, 0.9, 0.5, 0.3);
        const StateSpace space(spec);
        const auto actions = joint_actions(spec);
        for (StateIndex k = 0; k < space.size(); ++k) {
            const auto s = space.state(k);
            for (const auto& a : actions) {
                double sum = 0.0;
                for (const auto& o : joint_transition(spec, s, a)) {
                    negative |= o.probability < 0.0;
                    sum += o.probability;
                }
                worst = std::max(worst, std::abs(sum - 1.0));
                ++rows;
            }
        }
    }
    const double t = seconds_since(t0);
    v.detail << fmt("%zu rows, max |row sum - 1| = %.2e, %.1f s", rows, worst, t);
    v.require(worst <= 1e-12, "row sums within 1e-12");
    v.require(!negative, "no negative entries");
    v.require(t < 10.0, "runtime < 10 s");
    return v;
}

Verdict lp_normalization() {
    Verdict v;
    std::vector<SystemSpec> specs = {two_sources(10, 0.5, 0.99, 0.5, 0.3), two_sources(10, 0.9, 0.99, 0.5, 0.3),
                                     two_sources(10, 0.9, 0.99, 0.1, 0.05), two_sources(4, 0.8, 0.9, 0.2, 0.1)};
    double worst_mass = 0.0, worst_budget = 0.0, slowest = 0.0;
    for (const auto& spec : specs) {
        const JointSolve js(spec);
        if (!js.sol.optimal()) {
            v.require(false, "solved to optimality");
            continue;
        }
        const auto m = make_occupation_measure(spec, js.jlp, js.sol);
        double tr = 0.0, sm = 0.0;
        for (StateIndex s = 0; s < m.num_states; ++s)
            for (std::size_t a = 0; a < m.actions.size(); ++a) {
                tr += m.mass(s, a) * tr_cost(m.actions[a]);
                sm += m.mass(s, a) * sm_cost(m.actions[a]);
            }
        worst_mass = std::max(worst_mass, std::abs(m.total_mass() - 1.0));
        worst_budget = std::max({worst_budget, tr - spec.gamma_tr, sm - spec.gamma_sm});
        slowest = std::max(slowest, js.seconds);
    }
    v.detail << fmt("%zu instances, max |sum x - 1| = %.2e, max budget excess = %.2e, slowest %.1f s", specs.size(),
                    worst_mass, worst_budget, slowest);
    v.require(worst_mass <= 1e-6, "normalization within 1e-6");
    v.require(worst_budget <= 1e-6, "budgets within 1e-6");
    v.require(slowest < 60.0, "runtime per instance < 60 s");
    return v;
}

Verdict policy_realization() {
    Verdict v;
    const auto t0 = Clock::now();
    std::mt19937_64 g(31);
    double worst = 0.0;
    const int count = 8;
    for (int i = 0; i < count; ++i) {
        auto spec = random_spec(g, 4, 2);
        spec.discount = i % 2 ? 0.95 : 0.9;
        const JointSolve js(spec);
        if (!js.sol.optimal()) {
            v.require(false, "solved to optimality");
            continue;
        }
        const auto policy = extract_policy(make_occupation_measure(spec, js.jlp, js.sol));
        const double exact = evaluate_policy_exact(spec, js.space, policy, js.eta).qaoi;
        worst = std::max(worst, std::abs(exact - js.sol.objective_value) / std::abs(js.sol.objective_value));
    }
    const double t = seconds_since(t0);
    v.detail << fmt("%d specs, max relative gap = %.2e, %.1f s", count, worst, t);
    v.require(worst <= 1e-6, "relative gap within 1e-6");
    v.require(t < 60.0, "runtime < 60 s");
    return v;
}

Verdict closed_form() {
    Verdict v;
    auto spec = two_sources(2, 0.8, 0.5, 0.5, 0.3);
    for (auto& s : spec.sources) s.query = {1.0, 0.0};
    const StateSpace space(spec);
    const double exact = evaluate_policy_exact(spec, idle_policy(spec, space)).qaoi;
    SimConfig cfg;
    cfg.replications = 100;
    cfg.tail_tolerance = 1e-12;
    const auto m = run(IdleScheduler(), spec, cfg);
    v.detail << fmt("oracle %.15g, simulator %.15g (ci95 %.1e, tail bound %.1e)", exact, m.qaoi_mean, m.qaoi_ci95,
                    m.tail_bias);
    v.require(std::abs(exact - 3.0) <= 1e-12, "oracle equals 3");
    v.require(std::abs(m.qaoi_mean - 3.0) <= std::max(m.tail_bias, 1e-12), "simulator equals 3");
    v.require(m.qaoi_ci95 == 0.0, "zero variance");
    return v;
}

Verdict relaxation_ordering() {
    Verdict v;
    const auto t0 = Clock::now();
    std::mt19937_64 g(57);
    const int count = 12;
    double worst_lb = -1e300, worst_sim = -1e300;
    for (int i = 0; i < count; ++i) {
        const auto spec = random_spec(g, 6, 3);
        const JointSolve js(spec);
        const auto dlp = build_decomposed_lp(spec);
        const auto dsol = solve_decomposed_lp(spec, dlp);
        if (!js.sol.optimal() || !dsol.optimal()) {
            v.require(false, "solved to optimality");
            continue;
        }
        const double opt = js.sol.objective_value;
        const double lb = lower_bound_value(dsol);
        auto tp = std::make_shared<TruncatedPolicy>();
        tp->per_source =
            extract_per_source_policies(spec, dlp, dsol, kUnvisitedMassThreshold, UnvisitedFill::LagrangianGreedy);
        SimConfig cfg;
        cfg.replications = 2000;
        cfg.seed = 100 + static_cast<std::uint64_t>(i);
        const auto m = run(TruncatedScheduler(spec, tp), spec, cfg);
        worst_lb = std::max(worst_lb, lb - opt);
        worst_sim = std::max(worst_sim, opt - (m.qaoi_mean + 3.0 * m.qaoi_ci95));
    }
    const double t = seconds_since(t0);
    v.detail << fmt("%d specs, max(lb - opt) = %.2e, max(opt - sim - 3ci) = %.3g, %.1f s", count, worst_lb, worst_sim,
                    t);
    v.require(worst_lb <= 1e-6, "lower bound <= optimum + 1e-6");
    v.require(worst_sim <= 0.0, "optimum <= simulated truncated + 3 ci");
    v.require(t < 300.0, "runtime < 5 min");
    return v;
}

// Shared sweep tables for the near-optimality, baseline and trend criteria.
struct Sweeps {
    std::map<std::string, ResultTable> tables;
    std::map<std::string, double> seconds;

    const ResultRow& row(const std::string& name, double value, PolicyKind kind) const {
        for (const auto& r : tables.at(name).rows)
            if (r.policy == kind && std::abs(r.sweep_value - value) < 1e-12) return r;
        throw std::runtime_error("missing row");
    }
};

Sweeps run_sweeps() {
    Sweeps s;
    for (const char* name : {"budget_p05", "budget_p09", "reliability"}) {
        const auto cfg = load_config(std::string(QAOI_SOURCE_DIR) + "/configs/" + name + ".json");
        const auto t0 = Clock::now();
        s.tables[name] = run_experiment(cfg);
        s.seconds[name] = seconds_since(t0);
    }
    return s;
}

Verdict near_optimality(const Sweeps& sw) {
    Verdict v;
    double worst = 0.0, t = 0.0;
    for (const char* name : {"budget_p05", "budget_p09"}) {
        const auto& opt = sw.row(name, 0.5, PolicyKind::Optimal);
        const auto& tr = sw.row(name, 0.5, PolicyKind::Truncated);
        const double excess = *tr.sim_qaoi / *opt.lp_objective - 1.0;
        v.detail << fmt("%s: optimal %.4f truncated %.4f (%+.2f%%); ", name, *opt.lp_objective, *tr.sim_qaoi,
                        100.0 * excess);
        worst = std::max(worst, excess);
        t += sw.seconds.at(name);
    }
    v.detail << fmt("%.0f s for both sweeps", t);
    v.require(worst <= 0.05, "truncated within 5% of optimum");
    v.require(t < 600.0, "runtime < 10 min");
    return v;
}

Verdict baseline_dominance(const Sweeps& sw) {
    Verdict v;
    double least = 1e300;
    v.detail << "baseline excess over optimum:";
    for (const char* name : {"budget_p05", "budget_p09"})
        for (double g : {0.1, 0.2, 0.3}) {
            const double opt = *sw.row(name, g, PolicyKind::Optimal).lp_objective;
            const double base = *sw.row(name, g, PolicyKind::Baseline).sim_qaoi;
            least = std::min(least, base / opt - 1.0);
            v.detail << fmt(" %s gamma_tr=%.1f %+.1f%%;", name, g, 100.0 * (base / opt - 1.0));
        }
    v.require(least >= 0.10, "baseline >= 1.10 x optimum for gamma_tr <= 0.3");
    return v;
}

Verdict trends(const Sweeps& sw) {
    Verdict v;
    std::size_t checks = 0;
    for (const auto& [name, table] : sw.tables) {
        for (PolicyKind kind : {PolicyKind::Optimal, PolicyKind::Truncated}) {
            std::vector<const ResultRow*> rows;
            for (const auto& r : table.rows)
                if (r.policy == kind) rows.push_back(&r);
            for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
                const auto& a = *rows[i];
                const auto& b = *rows[i + 1];
                const double slack = *a.sim_qaoi_ci95 + *b.sim_qaoi_ci95;
                ++checks;
                if (*b.sim_qaoi > *a.sim_qaoi + slack)
                    v.require(false, fmt("%s %s sim rises %.4f -> %.4f", name.c_str(), to_string(kind).c_str(),
                                         *a.sim_qaoi, *b.sim_qaoi));
                if (kind == PolicyKind::Optimal) {
                    ++checks;
                    if (*b.lp_objective > *a.lp_objective + 1e-6 * std::abs(*a.lp_objective))
                        v.require(false, fmt("%s optimum rises %.8f -> %.8f", name.c_str(), *a.lp_objective,
                                             *b.lp_objective));
                }
            }
        }
    }
    v.detail << fmt("%zu adjacent-pair checks over gamma_tr (p=0.5, p=0.9) and p sweeps", checks);
    return v;
}

SystemSpec scaling_spec(int n, double gtr, double gsm) {
    SystemSpec s;
    s.p = 0.99999;
    s.age_cap = 20;
    s.discount = 0.99;
    s.gamma_tr = gtr;
    s.gamma_sm = gsm;
    for (int i = 0; i < n; ++i)
        s.sources.push_back(i % 2 == 0 ? SourceSpec::random_arrival(0.5, {0.7, 0.7})
                                       : SourceSpec::generate_at_will({0.7, 0.7}));
    return s;
}

Verdict scaling() {
    Verdict v;
    const auto t0 = Clock::now();
    std::map<int, double> median;
    for (int n = 2; n <= 10; n += 2) {
        const auto spec = scaling_spec(n, 0.8, 0.3);
        std::vector<double> ts;
        for (int r = 0; r < 5; ++r) {
            const auto s0 = Clock::now();
            const auto dlp = build_decomposed_lp(spec);
            const auto sol = solve_decomposed_lp(spec, dlp);
            ts.push_back(seconds_since(s0));
            if (!sol.optimal()) v.require(false, fmt("decomposed LP optimal at n=%d", n));
        }
        std::sort(ts.begin(), ts.end());
        median[n] = ts[2];
    }
    v.detail << "median build+solve s:";
    for (const auto& [n, t] : median) {
        const double ratio = t / median[2], allowed = 1.3 * n / 2.0;
        v.detail << fmt(" n=%d %.3f (x%.2f, allowed x%.2f)", n, t, ratio, allowed);
        if (ratio > allowed) v.require(false, fmt("time ratio at n=%d", n));
    }

    const auto spec = scaling_spec(2, 1.0, 1.0);
    const auto dlp = build_decomposed_lp(spec);
    const auto sol = solve_decomposed_lp(spec, dlp);
    const double lb = lower_bound_value(sol);
    auto tp = std::make_shared<TruncatedPolicy>();
    tp->per_source = extract_per_source_policies(spec, dlp, sol, kUnvisitedMassThreshold, UnvisitedFill::LagrangianGreedy);
    SimConfig cfg;
    cfg.replications = 2000;
    cfg.seed = 9;
    const auto m = run(TruncatedScheduler(spec, tp), spec, cfg);
    v.detail << fmt("; slack budgets, 2 sources: lower bound %.4f, truncated %.4f +- %.4f", lb, m.qaoi_mean,
                    m.qaoi_ci95);
    v.require(std::abs(m.qaoi_mean - lb) <= 3.0 * m.qaoi_ci95, "truncated within 3 ci of lower bound");
    const double t = seconds_since(t0);
    v.detail << fmt("; %.0f s", t);
    v.require(t < 900.0, "runtime < 15 min");
    return v;
}

Verdict simulator_fidelity() {
    Verdict v;
    const auto spec = two_sources(3, 0.8, 0.9, 0.5, 0.3);
    const std::vector<std::pair<JointState, Action>> cases = {
        {JointState{{{1, 1, 2}, {0, 2, 3}}}, Action::idle()},
        {JointState{{{1, 0, 3}, {1, 1, 2}}}, Action::transmit(0)},
        {JointState{{{0, 2, 2}, {1, 3, 3}}}, Action::sample_and_transmit(1)},
        {JointState{{{1, 3, 3}, {0, 1, 3}}}, Action::retransmit(1)},
    };
    const std::size_t draws = 1'000'000;
    double worst_z = 0.0;
    std::size_t c = 0;
    for (const auto& [s, a] : cases) {
        const auto law = joint_transition(spec, s, a);
        std::map<std::vector<int>, std::size_t> counts;
        auto key = [](const JointState& j) {
            std::vector<int> k;
            for (const auto& p : j.per_source) k.insert(k.end(), {p.r, p.theta, p.delta});
            return k;
        };
        for (std::size_t i = 0; i < draws; ++i) {
            auto rng = RandomStreams::make(1000 + c, i, spec.num_sources());
            ++counts[key(step(spec, s, a, rng).next)];
        }
        double chi2 = 0.0;
        std::size_t matched = 0;
        for (const auto& o : law) {
            const double expected = o.probability * static_cast<double>(draws);
            const auto it = counts.find(key(o.value));
            const double observed = it == counts.end() ? 0.0 : static_cast<double>(it->second);
            matched += static_cast<std::size_t>(observed);
            chi2 += (observed - expected) * (observed - expected) / expected;
            worst_z = std::max(worst_z, std::abs(observed - expected) / std::sqrt(expected * (1.0 - o.probability)));
        }
        const double limit = chi2_999(static_cast<double>(law.size() - 1));
        v.detail << fmt("%s: %zu outcomes chi2 %.1f (limit %.1f); ", to_string(a).c_str(), law.size(), chi2, limit);
        v.require(matched == draws, "every draw inside the kernel support");
        v.require(chi2 <= limit, "chi-square at 0.999");
        ++c;
    }
    v.detail << fmt("max |z| = %.2f", worst_z);
    v.require(worst_z <= 4.0, "every point within 4 sigma");
    return v;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* title, const std::function<Verdict()>& check) {
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << "exception: " << e.what();
        }
        failures += v.pass ? 0 : 1;
        std::printf("criterion %2d %s  %s (%.1f s): %s\n", id, v.pass ? "PASS" : "FAIL", title, seconds_since(t0),
                    v.detail.str().c_str());
        std::fflush(stdout);
    };

    report(1, "kernel stochasticity", kernel_stochasticity);
    report(2, "LP normalization and budgets", lp_normalization);
    report(3, "extracted policy attains the LP value", policy_realization);
    report(4, "closed-form idle oracle", closed_form);
    report(5, "relaxation ordering", relaxation_ordering);

    const auto t0 = Clock::now();
    const Sweeps sweeps = run_sweeps();
    std::printf("(sweeps for criteria 6-8 took %.0f s)\n", seconds_since(t0));
    report(6, "truncated policy near-optimal", [&] { return near_optimality(sweeps); });
    report(7, "baseline dominated at tight budgets", [&] { return baseline_dominance(sweeps); });
    report(8, "monotone trends", [&] { return trends(sweeps); });

    report(9, "multi-source scaling", scaling);
    report(10, "simulator fidelity", simulator_fidelity);

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
