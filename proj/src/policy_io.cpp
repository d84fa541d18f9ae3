#include "qaoi/policy_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace qaoi {

namespace {

constexpr int kFormatVersion = 1;

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string prob17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_header(const SystemSpec& spec, const char* kind, std::ostream& os) {
    os << "qaoi-policy " << kFormatVersion << "\n";
    os << "spec_hash " << hex64(spec.hash()) << "\n";
    os << "kind " << kind << "\n";
}

void write_rows(std::span<const double> probs, std::size_t num_actions, std::ostream& os) {
    for (std::size_t k = 0; k < probs.size(); ++k)
        if (probs[k] != 0.0) os << k / num_actions << " " << k % num_actions << " " << prob17(probs[k]) << "\n";
    os << "end\n";
}

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::istringstream line() {
        std::string s;
        while (std::getline(is_, s)) {
            ++lineno_;
            if (!s.empty() && s.back() == '\r') s.pop_back();
            if (!s.empty()) return std::istringstream(s);
        }
        fail("unexpected end of input");
    }

    void expect(std::istringstream& ls, const std::string& word) {
        std::string w;
        if (!(ls >> w) || w != word) fail("expected '" + word + "'");
    }

    template <class T>
    T value(std::istringstream& ls, const char* what) {
        T v{};
        if (!(ls >> v)) fail(std::string("expected ") + what);
        return v;
    }

    // Reads "<state> <action> <prob>" rows until "end".
    void rows(std::span<double> probs, std::size_t num_states, std::size_t num_actions) {
        while (true) {
            auto ls = line();
            std::string first;
            ls >> first;
            if (first == "end") return;
            std::size_t s = 0, a = 0;
            try {
                s = std::stoull(first);
            } catch (const std::exception&) {
                fail("bad state index '" + first + "'");
            }
            a = value<std::size_t>(ls, "action id");
            std::string ptxt = value<std::string>(ls, "probability");
            if (s >= num_states || a >= num_actions) fail("state/action index out of range");
            char* end = nullptr;
            const double p = std::strtod(ptxt.c_str(), &end);
            if (end == ptxt.c_str() || *end != '\0' || !(p >= 0.0 && p <= 1.0)) fail("bad probability '" + ptxt + "'");
            probs[s * num_actions + a] = p;
        }
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw PolicyFormatError("policy file line " + std::to_string(lineno_) + ": " + msg);
    }

private:
    std::istream& is_;
    std::size_t lineno_ = 0;
};

}  // namespace

void write_policy(const SystemSpec& spec, const RandomizedPolicy& policy, std::ostream& os) {
    write_header(spec, "joint", os);
    os << "states " << policy.num_states() << " actions " << policy.num_actions() << "\n";
    write_rows(policy.raw(), policy.num_actions(), os);
}

void write_policy(const SystemSpec& spec, const TruncatedPolicy& policy, std::ostream& os) {
    write_header(spec, "per_source", os);
    os << "sources " << policy.per_source.size() << "\n";
    os << "tie_break random_arrival_first\n";
    for (const auto& p : policy.per_source) {
        os << "section " << p.source() << " " << (p.kind() == SourceKind::RandomArrival ? "ra" : "gaw") << " states "
           << p.num_states() << " actions " << p.actions().size() << "\n";
        write_rows(p.raw(), p.actions().size(), os);
    }
}

LoadedPolicy read_policy(const SystemSpec& spec, std::istream& is) {
    Reader rd(is);
    auto l = rd.line();
    rd.expect(l, "qaoi-policy");
    if (rd.value<int>(l, "format version") != kFormatVersion) rd.fail("unsupported format version");

    l = rd.line();
    rd.expect(l, "spec_hash");
    const auto hash = rd.value<std::string>(l, "hash");
    if (hash != hex64(spec.hash())) rd.fail("spec hash " + hash + " does not match " + hex64(spec.hash()));

    l = rd.line();
    rd.expect(l, "kind");
    const auto kind = rd.value<std::string>(l, "kind");
    if (kind == "joint") {
        l = rd.line();
        rd.expect(l, "states");
        const auto ns = rd.value<std::size_t>(l, "state count");
        rd.expect(l, "actions");
        const auto na = rd.value<std::size_t>(l, "action count");
        const auto actions = joint_actions(spec);
        if (na != actions.size()) rd.fail("action count does not match spec");
        if (ns != joint_state_count(spec)) rd.fail("state count does not match spec");
        RandomizedPolicy pol(actions, ns);
        rd.rows(pol.raw(), ns, na);
        return pol;
    }
    if (kind != "per_source") rd.fail("unknown policy kind '" + kind + "'");

    l = rd.line();
    rd.expect(l, "sources");
    const auto n = rd.value<std::size_t>(l, "source count");
    if (n != spec.num_sources()) rd.fail("source count does not match spec");
    l = rd.line();
    rd.expect(l, "tie_break");
    if (rd.value<std::string>(l, "rule") != "random_arrival_first") rd.fail("unknown tie-break rule");

    TruncatedPolicy out;
    const std::size_t per = SourceStateSpace(spec.age_cap).size();
    for (std::size_t i = 0; i < n; ++i) {
        l = rd.line();
        rd.expect(l, "section");
        if (rd.value<std::size_t>(l, "source index") != i) rd.fail("sections must appear in source order");
        const auto tag = rd.value<std::string>(l, "source kind");
        const SourceKind k = spec.sources[i].kind;
        if (tag != (k == SourceKind::RandomArrival ? "ra" : "gaw")) rd.fail("source kind does not match spec");
        rd.expect(l, "states");
        const auto ns = rd.value<std::size_t>(l, "state count");
        rd.expect(l, "actions");
        const auto na = rd.value<std::size_t>(l, "action count");
        PerSourcePolicy pol(i, k, per);
        if (ns != per || na != pol.actions().size()) rd.fail("section dimensions do not match spec");
        rd.rows(pol.raw(), ns, na);
        out.per_source.push_back(std::move(pol));
    }
    return out;
}

}  // namespace qaoi
