#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <arcprobit/cli.hpp>

using namespace arcprobit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result call(std::vector<std::string> args) {
    args.insert(args.begin(), "arcprobit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("arcprobit_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

const std::string kFeatures = "x1,x2,x3,x4,x5,x6,x7";

} // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(call({"--help"}).code, 0);
    EXPECT_EQ(call({}).code, 2);
    const auto r = call({"fit", "--data", "x.csv", "--row", "r", "--col", "c"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--response"), std::string::npos);
    EXPECT_EQ(call({"fit", "--data", "x.csv", "--response", "y", "--row", "r", "--col", "c", "--se", "jackknife"}).code,
              2);
}

TEST(Cli, SimulateRejectsUnknownSettingAndInfeasibleSize) {
    const auto dir = scratch("sim");
    EXPECT_EQ(call({"simulate", "--setting", "bal-foo-hi", "--n", "1000", "--out", (dir / "a.csv").string()}).code, 2);
    const auto r = call({"simulate", "--setting", "bal-nul-hi", "--n", "3", "--out", (dir / "a.csv").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("hint:"), std::string::npos);
}

TEST(Cli, SimulateWritesDataAndSidecar) {
    const auto dir = scratch("side");
    const auto csv = dir / "d.csv";
    ASSERT_EQ(call({"simulate", "--setting", "imb-lin-lo", "--n", "2000", "--seed", "4", "--out", csv.string()}).code,
              0);
    const auto t = nlohmann::json::parse(slurp(dir / "d.truth.json"));
    EXPECT_EQ(t["setting"], "imb-lin-lo");
    EXPECT_EQ(t["beta"].size(), 8u);
    EXPECT_EQ(t["sigma_a"], 0.5);
    EXPECT_EQ(t["seed"], 4);
    EXPECT_EQ(slurp(csv).substr(0, 20), "row,col,y,x1,x2,x3,x");
}

TEST(Cli, FitReportsAllCoefficients) {
    const auto dir = scratch("fit");
    const auto csv = dir / "d.csv", rep = dir / "r.json";
    ASSERT_EQ(call({"simulate", "--setting", "bal-lin-lo", "--n", "3000", "--seed", "2", "--out", csv.string()}).code, 0);
    const auto r = call({"fit", "--data", csv.string(), "--response", "y", "--row", "row", "--col", "col",
                         "--features", kFeatures, "--out", rep.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(rep));
    EXPECT_EQ(j["report_version"], 1);
    EXPECT_EQ(j["se_basis"], "sandwich");
    ASSERT_EQ(j["coefficients"].size(), 8u);
    EXPECT_EQ(j["coefficients"][0]["name"], "(Intercept)");
    for (const auto& c : j["coefficients"]) {
        EXPECT_GT(c["se_sandwich"].get<double>(), 0.0);
        EXPECT_NEAR(c["z"].get<double>(), c["beta_hat"].get<double>() / c["se_sandwich"].get<double>(), 1e-12);
    }
    EXPECT_FALSE(j.contains("timings"));
    EXPECT_FALSE(j.contains("bootstrap"));
    EXPECT_NE(r.out.find("sigma_a"), std::string::npos);
}

TEST(Cli, FitWithPigeonholeAddsBootstrapBlock) {
    const auto dir = scratch("pig");
    const auto csv = dir / "d.csv", rep = dir / "r.json";
    ASSERT_EQ(call({"simulate", "--setting", "bal-nul-lo", "--n", "2000", "--seed", "3", "--out", csv.string()}).code, 0);
    ASSERT_EQ(call({"fit", "--data", csv.string(), "--response", "y", "--row", "row", "--col", "col", "--features",
                    kFeatures, "--se", "pigeonhole", "--bootstrap", "20", "--timings", "--out", rep.string()})
                  .code,
              0);
    const auto j = nlohmann::json::parse(slurp(rep));
    EXPECT_EQ(j["se_basis"], "pigeonhole");
    EXPECT_EQ(j["bootstrap"]["replicates"], 20);
    EXPECT_TRUE(j["coefficients"][0].contains("se_pigeonhole"));
    EXPECT_TRUE(j.contains("timings"));
}

TEST(Cli, OneHotUsesFirstSortedLevelAsReference) {
    const auto dir = scratch("onehot");
    std::string s = "r,c,y,x,grp\n";
    for (int k = 0; k < 240; ++k) {
        const double x = std::sin(0.9 * k);
        const char* g = k % 3 == 0 ? "blue" : k % 3 == 1 ? "red" : "green";
        const bool y = std::cos(2.3 * k) + 0.7 * x + (k % 3 == 1 ? 0.4 : 0.0) > 0.0;
        s += std::to_string(k % 20) + "," + std::to_string(k % 13) + "," + (y ? "1" : "0") + "," +
             std::to_string(x) + "," + g + "\n";
    }
    write_file(dir / "d.csv", s);
    const auto rep = dir / "r.json";
    const auto r = call({"fit", "--data", (dir / "d.csv").string(), "--response", "y", "--row", "r", "--col", "c",
                         "--features", "x", "--one-hot", "grp", "--se", "naive", "--out", rep.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(rep));
    ASSERT_EQ(j["coefficients"].size(), 4u);
    EXPECT_EQ(j["coefficients"][2]["name"], "grp=green");
    EXPECT_EQ(j["coefficients"][3]["name"], "grp=red");
}

TEST(Cli, SeparationExitsThree) {
    const auto dir = scratch("sep");
    std::string s = "r,c,y,x\n";
    for (int k = 0; k < 200; ++k) {
        const double x = std::sin(1.3 * k);
        s += std::to_string(k % 10) + "," + std::to_string(k % 7) + "," + (x > 0 ? "1" : "0") + "," +
             std::to_string(x) + "\n";
    }
    write_file(dir / "d.csv", s);
    const auto r =
        call({"fit", "--data", (dir / "d.csv").string(), "--response", "y", "--row", "r", "--col", "c", "--features", "x"});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("hint:"), std::string::npos);
}

TEST(Cli, MissingColumnAndBadResponseExitTwo) {
    const auto dir = scratch("schema");
    write_file(dir / "d.csv", "r,c,y,x\n1,1,1,0.5\n1,2,2,0.1\n");
    EXPECT_EQ(call({"fit", "--data", (dir / "d.csv").string(), "--response", "y", "--row", "r", "--col", "c",
                    "--features", "z"})
                  .code,
              2);
    EXPECT_EQ(call({"fit", "--data", (dir / "d.csv").string(), "--response", "y", "--row", "r", "--col", "c",
                    "--features", "x"})
                  .code,
              2);
    EXPECT_EQ(call({"fit", "--data", (dir / "missing.csv").string(), "--response", "y", "--row", "r", "--col", "c"}).code,
              2);
}

TEST(Cli, BaselineOracleNeedsTruth) {
    const auto dir = scratch("oracle");
    const auto csv = dir / "d.csv";
    ASSERT_EQ(call({"simulate", "--setting", "bal-lin-lo", "--n", "1000", "--out", csv.string()}).code, 0);
    const std::vector<std::string> base{"baseline", "--method", "oracle", "--data", csv.string(), "--response", "y",
                                        "--row", "row", "--col", "col", "--features", kFeatures};
    auto ok = call(base);
    ASSERT_EQ(ok.code, 0) << ok.err;
    EXPECT_EQ(nlohmann::json::parse(ok.out)["coefficients"].size(), 8u);
    fs::remove(dir / "d.truth.json");
    const auto r = call(base);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--truth"), std::string::npos);
}

TEST(Cli, BaselineLaplaceGuard) {
    const auto dir = scratch("lapguard");
    const auto csv = dir / "d.csv";
    ASSERT_EQ(call({"simulate", "--setting", "imb-nul-lo", "--n", "10000", "--out", csv.string()}).code, 0);
    const auto r = call({"baseline", "--method", "laplace", "--data", csv.string(), "--response", "y", "--row", "row",
                         "--col", "col", "--features", kFeatures});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("ARC"), std::string::npos);
}

TEST(Cli, BaselineBruteForceOnTwoByTwo) {
    const auto dir = scratch("bf");
    write_file(dir / "d.csv", "r,c,y,x\na,u,1,0.3\na,v,0,-0.4\nb,u,1,1.2\nb,v,1,0.1\n");
    const auto r = call({"baseline", "--method", "bruteforce", "--data", (dir / "d.csv").string(), "--response", "y",
                         "--row", "r", "--col", "c", "--features", "x", "--beta", "0.1,0.5", "--sigma-a", "0.8",
                         "--sigma-b", "0.6"});
    ASSERT_EQ(r.code, 0) << r.err;
    const double ll = nlohmann::json::parse(r.out)["loglik"].get<double>();
    EXPECT_TRUE(std::isfinite(ll));
    EXPECT_LT(ll, 0.0);
    // wrong coefficient count
    EXPECT_EQ(call({"baseline", "--method", "bruteforce", "--data", (dir / "d.csv").string(), "--response", "y", "--row",
                    "r", "--col", "c", "--features", "x", "--beta", "0.1", "--sigma-a", "0.8", "--sigma-b", "0.6"})
                  .code,
              2);
}

TEST(Cli, BenchRunsTinyGrid) {
    const auto dir = scratch("bench");
    const auto csv = dir / "b.csv";
    const auto r = call({"bench", "--settings", "bal-lin-lo", "--grid", "1e3:2e3:3", "--reps", "2", "--estimators",
                         "arc,oracle", "--out", csv.string(), "--threads", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("records in"), std::string::npos);
    EXPECT_EQ(bench::count_records(bench::read_rows(csv.string())), 12u);
    EXPECT_EQ(call({"bench", "--settings", "bal-lin-lo", "--grid", "1e3-1e6", "--out", csv.string()}).code, 2);
}
