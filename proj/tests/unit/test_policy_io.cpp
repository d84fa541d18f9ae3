#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "qaoi/policy_io.hpp"

using namespace qaoi;

namespace {

SystemSpec spec2(int cap) {
    SystemSpec s;
    s.sources = {SourceSpec::random_arrival(0.6, {0.7, 0.4}), SourceSpec::generate_at_will({0.7, 0.4})};
    s.p = 0.8;
    s.age_cap = cap;
    s.discount = 0.9;
    s.gamma_tr = 0.5;
    s.gamma_sm = 0.3;
    return s;
}

RandomizedPolicy random_joint(const SystemSpec& s, std::uint64_t seed) {
    const StateSpace space(s);
    RandomizedPolicy p(joint_actions(s), space.size());
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    for (StateIndex k = 0; k < space.size(); ++k) {
        auto d = p.distribution(k);
        double t = 0;
        for (auto& v : d) t += (v = (g() % 3 == 0) ? 0.0 : u(g));
        if (t == 0) {
            d[0] = 1;
            continue;
        }
        for (auto& v : d) v /= t;
    }
    return p;
}

TruncatedPolicy random_truncated(const SystemSpec& s, std::uint64_t seed) {
    TruncatedPolicy tp;
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < s.num_sources(); ++i) {
        PerSourcePolicy p(i, s.sources[i].kind, SourceStateSpace(s.age_cap).size());
        for (StateIndex k = 0; k < p.num_states(); ++k) {
            auto d = p.distribution(k);
            double t = 0;
            for (auto& v : d) t += (v = u(g));
            for (auto& v : d) v /= t;
        }
        tp.per_source.push_back(std::move(p));
    }
    return tp;
}

}  // namespace

TEST(PolicyIo, JointRoundTripIsBitExact) {
    const auto s = spec2(3);
    const auto p = random_joint(s, 1);
    std::stringstream ss;
    write_policy(s, p, ss);
    const auto loaded = read_policy(s, ss);
    const auto* q = std::get_if<RandomizedPolicy>(&loaded);
    ASSERT_NE(q, nullptr);
    EXPECT_EQ(q->num_states(), p.num_states());
    EXPECT_EQ(q->actions(), p.actions());
    EXPECT_EQ(q->raw(), p.raw());
}

TEST(PolicyIo, TruncatedRoundTripIsBitExact) {
    const auto s = spec2(4);
    const auto p = random_truncated(s, 2);
    std::stringstream ss;
    write_policy(s, p, ss);
    const auto loaded = read_policy(s, ss);
    const auto* q = std::get_if<TruncatedPolicy>(&loaded);
    ASSERT_NE(q, nullptr);
    ASSERT_EQ(q->per_source.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(q->per_source[i].kind(), s.sources[i].kind);
        EXPECT_EQ(q->per_source[i].raw(), p.per_source[i].raw());
    }
    EXPECT_EQ(q->tie_break, p.tie_break);
}

TEST(PolicyIo, WriteIsDeterministicAndVersioned) {
    const auto s = spec2(2);
    const auto p = random_joint(s, 3);
    std::ostringstream a, b;
    write_policy(s, p, a);
    write_policy(s, p, b);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str().rfind("qaoi-policy 1\n", 0), 0u);
    EXPECT_NE(a.str().find("kind joint"), std::string::npos);
}

TEST(PolicyIo, RejectsSpecHashMismatch) {
    const auto s = spec2(3);
    std::stringstream ss;
    write_policy(s, random_joint(s, 4), ss);
    auto other = s;
    other.p = 0.81;
    EXPECT_THROW(read_policy(other, ss), PolicyFormatError);
}

TEST(PolicyIo, RejectsMalformedInput) {
    const auto s = spec2(2);
    std::ostringstream os;
    write_policy(s, random_joint(s, 5), os);
    const std::string good = os.str();

    auto expect_bad = [&](const std::string& text) {
        std::istringstream is(text);
        EXPECT_THROW(read_policy(s, is), PolicyFormatError) << text.substr(0, 80);
    };
    expect_bad("");
    expect_bad("qaoi-policy 2\n" + good.substr(good.find('\n') + 1));
    expect_bad(good.substr(0, good.size() - 4));  // missing end
    // Out-of-range state index.
    {
        std::string t = good;
        const auto pos = t.find("end");
        t.insert(pos, "999999 0 0.5\n");
        expect_bad(t);
    }
    // Probability outside [0,1].
    {
        std::string t = good;
        const auto pos = t.find("end");
        t.insert(pos, "0 1 1.5\n");
        expect_bad(t);
    }
    // Garbage token.
    {
        std::string t = good;
        const auto pos = t.find("end");
        t.insert(pos, "0 x 0.5\n");
        expect_bad(t);
    }
}

TEST(PolicyIo, SolvedPolicySurvivesRoundTrip) {
    const auto s = spec2(3);
    const auto dlp = build_decomposed_lp(s);
    const auto sol = solve_decomposed_lp(s, dlp);
    ASSERT_TRUE(sol.optimal());
    TruncatedPolicy tp;
    tp.per_source = extract_per_source_policies(s, dlp, sol, kUnvisitedMassThreshold, UnvisitedFill::LagrangianGreedy);
    std::stringstream ss;
    write_policy(s, tp, ss);
    const auto q = std::get<TruncatedPolicy>(read_policy(s, ss));
    const StateSpace space(s);
    EXPECT_EQ(evaluate_policy_exact(s, to_joint_policy(s, space, q)).qaoi,
              evaluate_policy_exact(s, to_joint_policy(s, space, tp)).qaoi);
}
