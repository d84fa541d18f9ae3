#include "qaoi/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace qaoi {

namespace {

bool is_probability(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

void require(bool cond, const std::string& what) {
    if (!cond) throw ModelError(what);
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

StateSpaceTooLarge::StateSpaceTooLarge(std::uint64_t size, std::uint64_t limit)
    : ModelError("state space too large: " + std::to_string(size) + " states exceeds limit " +
                 std::to_string(limit)),
      size_(size) {}

std::size_t SystemSpec::num_random_arrival() const {
    return static_cast<std::size_t>(
        std::count_if(sources.begin(), sources.end(), [](const SourceSpec& s) { return s.is_random_arrival(); }));
}

std::size_t SystemSpec::num_generate_at_will() const { return sources.size() - num_random_arrival(); }

void SystemSpec::validate() const {
    require(!sources.empty(), "spec needs at least one source");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& s = sources[i];
        const std::string tag = "source " + std::to_string(i) + ": ";
        require(is_probability(s.query.rho), tag + "rho must lie in [0,1]");
        require(is_probability(s.query.rho_bar), tag + "rho_bar must lie in [0,1]");
        if (s.is_random_arrival())
            require(std::isfinite(s.mu) && s.mu > 0.0 && s.mu <= 1.0, tag + "mu must lie in (0,1]");
    }
    require(std::isfinite(p) && p > 0.0 && p <= 1.0, "p must lie in (0,1]");
    require(age_cap >= 1, "age cap N must be >= 1");
    require(std::isfinite(discount) && discount > 0.0 && discount < 1.0, "lambda must lie in (0,1)");
    require(std::isfinite(gamma_tr) && gamma_tr > 0.0 && gamma_tr <= 1.0, "gamma_tr must lie in (0,1]");
    require(std::isfinite(gamma_sm) && gamma_sm > 0.0 && gamma_sm <= 1.0, "gamma_sm must lie in (0,1]");
}

std::string SystemSpec::canonical() const {
    std::ostringstream os;
    os << "N=" << age_cap << ";p=" << fmt17(p) << ";lambda=" << fmt17(discount) << ";gamma_tr=" << fmt17(gamma_tr)
       << ";gamma_sm=" << fmt17(gamma_sm);
    for (const auto& s : sources) {
        os << ";[" << (s.is_random_arrival() ? "ra" : "gaw");
        if (s.is_random_arrival()) os << ",mu=" << fmt17(s.mu);
        os << ",rho=" << fmt17(s.query.rho) << ",rho_bar=" << fmt17(s.query.rho_bar) << "]";
    }
    return os.str();
}

std::uint64_t SystemSpec::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::Idle: return "idle";
        case ActionKind::Transmit: return "transmit";
        case ActionKind::Retransmit: return "retransmit";
        case ActionKind::SampleAndTransmit: return "sample_transmit";
    }
    return "?";
}

std::string to_string(const Action& a) {
    if (a.is_idle()) return "idle";
    return to_string(a.kind) + "(" + std::to_string(a.source) + ")";
}

bool is_valid_action(const SystemSpec& spec, const Action& a) {
    if (a.is_idle()) return true;
    if (a.source >= spec.num_sources()) return false;
    const bool ra = spec.sources[a.source].is_random_arrival();
    return ra ? a.kind == ActionKind::Transmit : a.kind != ActionKind::Transmit;
}

void check_action(const SystemSpec& spec, const Action& a) {
    if (!is_valid_action(spec, a)) throw ModelError("invalid action for spec: " + to_string(a));
}

std::vector<Action> joint_actions(const SystemSpec& spec) {
    std::vector<Action> out{Action::idle()};
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        if (spec.sources[i].is_random_arrival()) {
            out.push_back(Action::transmit(i));
        } else {
            out.push_back(Action::retransmit(i));
            out.push_back(Action::sample_and_transmit(i));
        }
    }
    return out;
}

ActionId action_id(const SystemSpec& spec, const Action& a) {
    check_action(spec, a);
    if (a.is_idle()) return 0;
    ActionId id = 1;
    for (std::size_t i = 0; i < a.source; ++i) id += spec.sources[i].is_random_arrival() ? 1 : 2;
    if (a.kind == ActionKind::SampleAndTransmit) ++id;
    return id;
}

std::vector<ActionKind> source_actions(SourceKind kind) {
    if (kind == SourceKind::RandomArrival) return {ActionKind::Idle, ActionKind::Transmit};
    return {ActionKind::Idle, ActionKind::Retransmit, ActionKind::SampleAndTransmit};
}

std::vector<Outcome<int>> query_transition(const QueryChain& chain, int r) {
    if (r != 0 && r != 1) throw ModelError("query flag must be 0 or 1");
    std::vector<Outcome<int>> out;
    const double stay = r == 1 ? chain.rho : chain.rho_bar;
    if (stay > 0.0) out.push_back({r, stay});
    if (stay < 1.0) out.push_back({1 - r, 1.0 - stay});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
    return out;
}

double query_steady_state(const QueryChain& chain) {
    const double leave_on = 1.0 - chain.rho;
    const double leave_off = 1.0 - chain.rho_bar;
    if (leave_on == 0.0 && leave_off == 0.0)
        throw DegenerateChainError("query chain with rho = rho_bar = 1 has no unique steady state");
    return leave_off / (leave_on + leave_off);
}

std::vector<Outcome<SourceState>> source_transition(const SourceSpec& source, double p, int cap,
                                                    const SourceState& s, ActionKind role) {
    if (s.theta < 0 || s.theta > cap || s.delta < 0 || s.delta > cap)
        throw ModelError("source state ages outside {0..N}");

    struct AgePair {
        int theta, delta;
        double prob;
    };
    std::vector<AgePair> ages;
    ages.reserve(4);
    const int th1 = clamp_age(s.theta + 1, cap);
    const int de1 = clamp_age(s.delta + 1, cap);

    if (source.is_random_arrival()) {
        const double mu = source.mu;
        const double mu_bar = 1.0 - mu;
        switch (role) {
            case ActionKind::Idle:
                ages = {{0, de1, mu}, {th1, de1, mu_bar}};
                break;
            case ActionKind::Transmit:
                ages = {{0, th1, mu * p}, {0, de1, mu * (1.0 - p)}, {th1, th1, mu_bar * p},
                        {th1, de1, mu_bar * (1.0 - p)}};
                break;
            default:
                throw ModelError("random-arrival source cannot take action " + to_string(role));
        }
    } else {
        switch (role) {
            case ActionKind::Idle:
                ages = {{th1, de1, 1.0}};
                break;
            case ActionKind::Retransmit:
                ages = {{th1, th1, p}, {th1, de1, 1.0 - p}};
                break;
            case ActionKind::SampleAndTransmit:
                ages = {{1, 1, p}, {1, de1, 1.0 - p}};
                break;
            default:
                throw ModelError("generate-at-will source cannot take action " + to_string(role));
        }
    }

    std::vector<Outcome<SourceState>> out;
    out.reserve(8);
    for (const auto& q : query_transition(source.query, s.r))
        for (const auto& a : ages)
            if (a.prob > 0.0) out.push_back({SourceState{q.value, clamp_age(a.theta, cap), a.delta}, q.probability * a.prob});

    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
    std::vector<Outcome<SourceState>> merged;
    merged.reserve(out.size());
    for (const auto& o : out) {
        if (!merged.empty() && merged.back().value == o.value)
            merged.back().probability += o.probability;
        else
            merged.push_back(o);
    }
    return merged;
}

std::vector<Outcome<JointState>> joint_transition(const SystemSpec& spec, const JointState& s, const Action& a) {
    check_action(spec, a);
    if (s.per_source.size() != spec.num_sources()) throw ModelError("joint state arity does not match spec");
    std::vector<Outcome<JointState>> out{{JointState{}, 1.0}};
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        const auto row = source_transition(spec.sources[i], spec.p, spec.age_cap, s.per_source[i], a.role_for(i));
        std::vector<Outcome<JointState>> next;
        next.reserve(out.size() * row.size());
        for (const auto& prefix : out)
            for (const auto& o : row) {
                JointState js = prefix.value;
                js.per_source.push_back(o.value);
                next.push_back({std::move(js), prefix.probability * o.probability});
            }
        out = std::move(next);
    }
    return out;
}

int qaoi_cost(const SourceState& s) { return s.r * s.delta; }

int qaoi_cost(const JointState& s) {
    int c = 0;
    for (const auto& x : s.per_source) c += qaoi_cost(x);
    return c;
}

std::uint64_t joint_state_count(const SystemSpec& spec) {
    const std::uint64_t side = static_cast<std::uint64_t>(spec.age_cap) + 1;
    const std::uint64_t per = 2 * side * side;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        if (total > std::numeric_limits<std::uint64_t>::max() / per) return std::numeric_limits<std::uint64_t>::max();
        total *= per;
    }
    return total;
}

StateSpace::StateSpace(const SystemSpec& spec, std::uint64_t limit)
    : source_space_(spec.age_cap), num_sources_(spec.num_sources()) {
    if (num_sources_ == 0) throw ModelError("spec needs at least one source");
    const std::uint64_t count = joint_state_count(spec);
    if (count > limit) throw StateSpaceTooLarge(count, limit);
    size_ = static_cast<std::size_t>(count);
    strides_.assign(num_sources_, 1);
    for (std::size_t i = num_sources_ - 1; i > 0; --i) strides_[i - 1] = strides_[i] * source_space_.size();
}

JointState StateSpace::state(StateIndex k) const {
    JointState s;
    s.per_source.reserve(num_sources_);
    for (std::size_t i = 0; i < num_sources_; ++i) s.per_source.push_back(source_space_.state(source_index(k, i)));
    return s;
}

StateIndex StateSpace::index_of(const JointState& s) const {
    if (s.per_source.size() != num_sources_) throw ModelError("joint state arity does not match state space");
    StateIndex k = 0;
    for (std::size_t i = 0; i < num_sources_; ++i) k += source_space_.index_of(s.per_source[i]) * strides_[i];
    return k;
}

namespace {

constexpr std::size_t role_slot(ActionKind k) { return static_cast<std::size_t>(k); }

}  // namespace

KernelTable::KernelTable(const SystemSpec& spec, const SourceStateSpace& space)
    : per_source_(space.size()), rows_(spec.num_sources()) {
    for (std::size_t i = 0; i < spec.num_sources(); ++i) {
        const auto& src = spec.sources[i];
        auto& rows = rows_[i];
        rows.resize(per_source_ * 4);
        for (StateIndex k = 0; k < per_source_; ++k) {
            const SourceState s = space.state(k);
            for (ActionKind role : source_actions(src.kind)) {
                auto& row = rows[k * 4 + role_slot(role)];
                for (const auto& o : source_transition(src, spec.p, spec.age_cap, s, role))
                    row.push_back({space.index_of(o.value), o.probability});
            }
        }
    }
}

const KernelTable::Row& KernelTable::row(std::size_t i, StateIndex k, ActionKind role) const {
    const auto& r = rows_.at(i)[k * 4 + role_slot(role)];
    if (r.empty()) throw ModelError("no kernel row for action " + to_string(role) + " on source " + std::to_string(i));
    return r;
}

void KernelTable::joint_row(const StateSpace& space, StateIndex s, const Action& a,
                            std::vector<Outcome<StateIndex>>& out) const {
    out.clear();
    out.push_back({0, 1.0});
    std::vector<Outcome<StateIndex>> next;
    for (std::size_t i = 0; i < space.num_sources(); ++i) {
        const auto& r = row(i, space.source_index(s, i), a.role_for(i));
        const std::size_t stride = space.stride(i);
        next.clear();
        next.reserve(out.size() * r.size());
        for (const auto& prefix : out)
            for (const auto& o : r) next.push_back({prefix.value + o.value * stride, prefix.probability * o.probability});
        out.swap(next);
    }
}

std::vector<double> source_initial_distribution(const SourceSpec& source, const SourceStateSpace& space) {
    std::vector<double> eta(space.size(), 0.0);
    const double on = query_steady_state(source.query);
    eta[space.index_of({1, 0, 0})] = on;
    eta[space.index_of({0, 0, 0})] = 1.0 - on;
    return eta;
}

std::vector<double> source_first_slot_distribution(const SourceSpec& source, double p, const SourceStateSpace& space) {
    const auto eta0 = source_initial_distribution(source, space);
    std::vector<double> eta(space.size(), 0.0);
    for (StateIndex k = 0; k < eta0.size(); ++k) {
        if (eta0[k] == 0.0) continue;
        for (const auto& o : source_transition(source, p, space.age_cap(), space.state(k), ActionKind::Idle))
            eta[space.index_of(o.value)] += eta0[k] * o.probability;
    }
    return eta;
}

namespace {

// Joint law as the product of per-source marginals.
std::vector<double> product_distribution(const StateSpace& space, const std::vector<std::vector<double>>& marginals) {
    std::vector<std::pair<StateIndex, double>> acc{{0, 1.0}};
    for (std::size_t i = 0; i < marginals.size(); ++i) {
        std::vector<std::pair<StateIndex, double>> next;
        for (const auto& [k, w] : acc)
            for (StateIndex j = 0; j < marginals[i].size(); ++j)
                if (marginals[i][j] > 0.0) next.emplace_back(k + j * space.stride(i), w * marginals[i][j]);
        acc = std::move(next);
    }
    std::vector<double> eta(space.size(), 0.0);
    for (const auto& [k, w] : acc) eta[k] += w;
    return eta;
}

}  // namespace

std::vector<double> initial_distribution(const SystemSpec& spec, const StateSpace& space) {
    std::vector<std::vector<double>> marginals;
    for (const auto& src : spec.sources) marginals.push_back(source_initial_distribution(src, space.source_space()));
    return product_distribution(space, marginals);
}

std::vector<double> first_slot_distribution(const SystemSpec& spec, const StateSpace& space) {
    // Idle moves sources independently, so the joint law stays a product.
    std::vector<std::vector<double>> marginals;
    for (const auto& src : spec.sources)
        marginals.push_back(source_first_slot_distribution(src, spec.p, space.source_space()));
    return product_distribution(space, marginals);
}

}  // namespace qaoi
