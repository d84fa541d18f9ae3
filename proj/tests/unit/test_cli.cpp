#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run_cli(const std::string& args) {
    const std::string cmd = std::string(QAOI_CLI_PATH) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::map<std::string, std::string> keyed(const std::string& out) {
    std::map<std::string, std::string> m;
    std::istringstream is(out);
    std::string k, v;
    while (is >> k >> v) m[k] = v;
    return m;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("qaoi_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
        write("small.json", R"({
          "sources": [
            {"kind": "random_arrival", "mu": 0.6, "rho": 0.7, "rho_bar": 0.4},
            {"kind": "generate_at_will", "rho": 0.7, "rho_bar": 0.4}
          ],
          "p": 0.8, "N": 3, "lambda": 0.9, "gamma_tr": 0.5, "gamma_sm": 0.3,
          "sweep": {"param": "gamma_tr", "values": [0.2, 0.6]},
          "policies": ["optimal", "truncated", "lower_bound", "baseline"],
          "sim": {"replications": 50, "seed": 5}
        })");
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write(const std::string& name, const std::string& text) {
        std::ofstream(dir_ / name) << text;
        return (dir_ / name).string();
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run_cli("--help").code, 0);
    EXPECT_EQ(run_cli("").code, 1);
    EXPECT_EQ(run_cli("frobnicate").code, 1);
    EXPECT_EQ(run_cli("validate").code, 1) << "--config is required";
    EXPECT_EQ(run_cli("validate --config " + path("missing.json")).code, 1);
    EXPECT_EQ(run_cli("solve --config " + path("small.json") + " --policy magic").code, 1);
    EXPECT_EQ(run_cli("validate --config " + path("small.json") + " --threads 0").code, 1);
}

TEST_F(Cli, ValidateReportsConfigErrors) {
    const auto ok = run_cli("validate --config " + path("small.json"));
    EXPECT_EQ(ok.code, 0);
    EXPECT_EQ(ok.out.rfind("ok: 2 sources, 2 grid points, 4 policies, sweep gamma_tr", 0), 0u) << ok.out;
    EXPECT_EQ(run_cli("validate --config " + write("bad.json", "{ not json")).code, 1);
    EXPECT_EQ(run_cli("validate --config " + write("typo.json", R"({"sourcez": []})")).code, 1);
    const auto big = write("big.json", R"({
      "sources": [
        {"kind": "random_arrival", "mu": 0.6, "rho": 0.7, "rho_bar": 0.4},
        {"kind": "generate_at_will", "rho": 0.7, "rho_bar": 0.4},
        {"kind": "generate_at_will", "rho": 0.7, "rho_bar": 0.4}
      ],
      "p": 0.8, "N": 10, "lambda": 0.9, "gamma_tr": 0.5, "gamma_sm": 0.3,
      "sweep": {"param": "gamma_tr", "values": [0.5]},
      "policies": ["optimal"]
    })");
    EXPECT_EQ(run_cli("validate --config " + big).code, 1);
    EXPECT_EQ(run_cli("validate --config " + big + " --allow-large-joint").code, 0);
}

TEST_F(Cli, SolveThenSimulateRoundTrip) {
    const auto cfg = path("small.json");
    const auto solved = run_cli("solve --config " + cfg + " --out " + path("opt.policy") + " --seed 9");
    ASSERT_EQ(solved.code, 0) << solved.out;
    const auto m = keyed(solved.out);
    EXPECT_EQ(m.at("lp_status"), "optimal");
    EXPECT_GT(std::stod(m.at("lp_objective")), 0.0);
    EXPECT_TRUE(m.count("sim_qaoi"));
    ASSERT_TRUE(fs::exists(path("opt.policy")));

    const auto sim = run_cli("simulate --config " + cfg + " --policy " + path("opt.policy") + " --seed 9");
    ASSERT_EQ(sim.code, 0);
    EXPECT_EQ(keyed(sim.out).at("sim_qaoi"), m.at("sim_qaoi")) << "same policy, same seed";

    // The stored policy belongs to the base spec; another grid point has a different hash.
    EXPECT_EQ(run_cli("simulate --config " + cfg + " --policy " + path("opt.policy") + " --at 0.2").code, 1);

    const auto trunc =
        run_cli("solve --config " + cfg + " --policy truncated --at 0.2 --out " + path("tr.policy"));
    ASSERT_EQ(trunc.code, 0);
    const auto tm = keyed(trunc.out);
    EXPECT_TRUE(tm.count("lower_bound"));
    EXPECT_EQ(run_cli("simulate --config " + cfg + " --policy " + path("tr.policy") + " --at 0.2").code, 0);

    EXPECT_EQ(run_cli("simulate --config " + cfg + " --policy " + write("junk.policy", "hello\n")).code, 1);
}

TEST_F(Cli, SolveWriteFailureIsNotAConfigError) {
    EXPECT_EQ(run_cli("solve --config " + path("small.json") + " --out /nonexistent/dir/p.policy").code, 2);
}

TEST_F(Cli, SweepIsByteStable) {
    const auto cfg = path("small.json");
    ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + path("a.csv")).code, 0);
    ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + path("b.csv") + " --threads 2").code, 0);
    const auto a = slurp(path("a.csv"));
    EXPECT_EQ(a, slurp(path("b.csv")));
    EXPECT_EQ(a.substr(0, a.find('\n')),
              "sweep_param,policy,lp_objective,sim_qaoi,sim_qaoi_ci95,sim_tr,sim_sm,wall_ms,status");
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 9);

    const auto to_stdout = run_cli("sweep --config " + cfg + " --out -");
    EXPECT_EQ(to_stdout.code, 0);
    EXPECT_EQ(to_stdout.out, a);

    ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + path("c.csv") + " --seed 6").code, 0);
    EXPECT_NE(slurp(path("c.csv")), a);

    ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + path("t.csv") + " --timing").code, 0);
    const auto t = slurp(path("t.csv"));
    const auto row = t.substr(t.find('\n') + 1, t.find('\n', t.find('\n') + 1) - t.find('\n') - 1);
    EXPECT_NE(row.find(",ok"), std::string::npos);
    EXPECT_EQ(row.find(",,ok"), std::string::npos) << "wall_ms filled: " << row;
}

TEST_F(Cli, SweepOptimalGuard) {
    const auto big = write("big.json", R"({
      "sources": [
        {"kind": "random_arrival", "mu": 0.6, "rho": 0.7, "rho_bar": 0.4},
        {"kind": "generate_at_will", "rho": 0.7, "rho_bar": 0.4},
        {"kind": "generate_at_will", "rho": 0.7, "rho_bar": 0.4}
      ],
      "p": 0.8, "N": 10, "lambda": 0.9, "gamma_tr": 0.5, "gamma_sm": 0.3,
      "sweep": {"param": "gamma_tr", "values": [0.5]},
      "policies": ["optimal"]
    })");
    EXPECT_EQ(run_cli("sweep --config " + big + " --out " + path("x.csv")).code, 1);
    EXPECT_FALSE(fs::exists(path("x.csv")));
}
