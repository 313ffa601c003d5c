#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <arcprobit/bench.hpp>

using namespace arcprobit;
using namespace arcprobit::bench;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("arcprobit_bench_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

BenchRow rec(const std::string& setting, std::size_t n, std::uint64_t seed, const std::string& est, double e, double t,
             double secs = 1.0) {
    BenchRow r;
    r.setting = setting;
    r.n_target = n;
    r.n_attained = n;
    r.seed = seed;
    r.estimator = est;
    r.param = "beta1";
    r.estimate = e;
    r.truth = t;
    r.stage = "total";
    r.seconds = secs;
    return r;
}

BenchPlan tiny_plan() {
    BenchPlan p;
    p.settings = {"bal-lin-lo"};
    p.n_grid = {1000, 1500};
    p.reps = 3;
    p.estimators = {"arc", "oracle"};
    return p;
}

} // namespace

TEST(Grid, LogEquispacedAndRounded) {
    const auto g = log_grid(1e3, 1e6, 13);
    ASSERT_EQ(g.size(), 13u);
    EXPECT_EQ(g.front(), 1000u);
    EXPECT_EQ(g[2], 3162u);
    EXPECT_EQ(g.back(), 1000000u);
}

TEST(Plan, CellCountIsProductOfAxes) {
    const auto cells = plan_cells(tiny_plan());
    EXPECT_EQ(cells.size(), 1u * 2 * 3 * 2);
}

TEST(Plan, LaplaceNeverScheduledBeyondCap) {
    BenchPlan p;
    p.settings = {"bal-lin-lo", "imb-nul-hi"};
    p.n_grid = log_grid(1e3, 1e6, 7);
    p.reps = 1;
    p.laplace_n_cap = 100000;
    for (const auto& c : plan_cells(p)) {
        if (c.estimator != "laplace") continue;
        EXPECT_LE(c.n_target, 100000u);
        const auto s = preset(c.setting);
        EXPECT_LE(sim_dimension(c.n_target, s.rho) + sim_dimension(c.n_target, s.kappa), 2000u);
    }
    // imb at 1e4 already has 3311 rows
    EXPECT_FALSE(laplace_allowed(p, "imb-nul-hi", 10000));
    EXPECT_TRUE(laplace_allowed(p, "bal-lin-lo", 100000));
    EXPECT_FALSE(laplace_allowed(p, "bal-lin-lo", 316228));
}

TEST(Plan, ValidationRejectsBadInput) {
    auto p = tiny_plan();
    p.estimators = {"arc", "glmm"};
    EXPECT_THROW(p.validate(), DomainError);
    p = tiny_plan();
    p.settings = {"bal-lin"};
    EXPECT_THROW(p.validate(), DomainError);
}

TEST(Run, RecordsDeterministicAndResumable) {
    const auto dir = scratch("run");
    const auto plan = tiny_plan();
    const auto s1 = run_plan(plan, 11, 1, (dir / "a.csv").string(), (dir / "a.json").string());
    EXPECT_EQ(s1.cells_run, 12u);
    EXPECT_EQ(s1.cells_failed, 0u);
    const auto rows = read_rows((dir / "a.csv").string());
    EXPECT_EQ(count_records(rows), 12u);

    // a second invocation finds everything done and adds nothing
    const auto s2 = run_plan(plan, 11, 1, (dir / "a.csv").string(), (dir / "a.json").string());
    EXPECT_EQ(s2.cells_skipped, 12u);
    EXPECT_EQ(s2.cells_run, 0u);
    EXPECT_EQ(read_rows((dir / "a.csv").string()).size(), rows.size());

    // estimates do not depend on worker count; compare sorted lines without timings
    run_plan(plan, 11, 3, (dir / "b.csv").string(), (dir / "b.json").string());
    auto strip = [](std::vector<BenchRow> v) {
        std::vector<std::string> out;
        for (auto& r : v) {
            r.seconds = 0.0;
            out.push_back(bench::detail::to_line(r));
        }
        std::sort(out.begin(), out.end());
        return out;
    };
    EXPECT_EQ(strip(rows), strip(read_rows((dir / "b.csv").string())));
}

TEST(Run, InterruptedCellRowsAreDiscardedOnResume) {
    const auto dir = scratch("resume");
    const auto csv = (dir / "r.csv").string(), man = (dir / "r.json").string();
    auto plan = tiny_plan();
    plan.n_grid = {1000};
    run_plan(plan, 5, 1, csv, man);
    const std::size_t full = read_rows(csv).size();
    // simulate a crash: drop one cell from the manifest, leave its rows behind
    auto j = nlohmann::json::parse(slurp(man));
    j["completed"].erase(j["completed"].begin());
    std::ofstream(man) << j.dump();
    const auto s = run_plan(plan, 5, 1, csv, man);
    EXPECT_EQ(s.cells_run, 1u);
    const auto rows = read_rows(csv);
    EXPECT_EQ(rows.size(), full);
    EXPECT_EQ(count_records(rows), 6u);
}

TEST(Run, CsvHeaderAndLongFormat) {
    const auto dir = scratch("fmt");
    auto plan = tiny_plan();
    plan.n_grid = {1000};
    plan.reps = 1;
    plan.estimators = {"arc"};
    run_plan(plan, 2, 1, (dir / "f.csv").string(), (dir / "f.json").string());
    std::ifstream in(dir / "f.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, kCsvHeader);
    const auto rows = read_rows((dir / "f.csv").string());
    std::set<std::string> params, stages;
    for (const auto& r : rows) {
        params.insert(r.param);
        stages.insert(r.stage);
    }
    EXPECT_TRUE(params.count("beta0") && params.count("beta7") && params.count("sigma_a") && params.count("sigma_b"));
    EXPECT_TRUE(stages.count("marginal") && stages.count("row") && stages.count("col") && stages.count("total"));
}

TEST(Mse, TrivialCases) {
    std::vector<BenchRow> v;
    for (std::uint64_t s = 0; s < 4; ++s) v.push_back(rec("x", 100, s, "arc", 0.5, 0.5));
    auto t = mse_table(v, "beta1");
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0].mse, 0.0);
    v.clear();
    for (std::uint64_t s = 0; s < 6; ++s) v.push_back(rec("x", 100, s, "arc", s % 2 ? 1.0 : -1.0, 0.0));
    t = mse_table(v, "beta1");
    EXPECT_DOUBLE_EQ(t.rows[0].mse, 1.0);
    EXPECT_DOUBLE_EQ(t.rows[0].bias, 0.0);
    EXPECT_DOUBLE_EQ(t.rows[0].sd, 1.0);
    // one record is not enough
    t = mse_table({rec("x", 100, 1, "arc", 1.0, 0.0)}, "beta1");
    EXPECT_TRUE(t.rows.empty());
    EXPECT_EQ(t.notes.size(), 1u);
}

TEST(Slope, ExactPowerLaws) {
    std::vector<double> n{1e3, 1e4, 1e5, 1e6}, up, down;
    for (double v : n) {
        up.push_back(3.0 * v);
        down.push_back(7.0 / v);
    }
    auto a = slope_fit(n, up);
    EXPECT_NEAR(a.slope, 1.0, 1e-12);
    EXPECT_NEAR(a.se, 0.0, 1e-12);
    EXPECT_NEAR(slope_fit(n, down).slope, -1.0, 1e-12);
    auto z = slope_fit({1e3, 1e4, 1e5, 1e6}, {0.0, 1e-4, 1e-5, 1e-6});
    EXPECT_EQ(z.n_points, 3u);
    EXPECT_EQ(z.notes.size(), 1u);
    EXPECT_THROW(slope_fit({1e3, 1e4}, {1.0, 2.0}), DomainError);
}

TEST(Slope, TimeAndMseSeries) {
    std::vector<BenchRow> v;
    for (std::size_t n : {1000u, 10000u, 100000u}) {
        for (std::uint64_t s = 0; s < 2; ++s) {
            const double dev = 1.0 / std::sqrt(static_cast<double>(n));
            v.push_back(rec("x", n, s, "arc", s ? dev : -dev, 0.0, 1e-6 * static_cast<double>(n)));
        }
    }
    const auto ts = time_slopes(v);
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_NEAR(ts[0].fit.slope, 1.0, 1e-9);
    const auto ms = mse_slopes(v, {"beta1"});
    ASSERT_EQ(ms.size(), 1u);
    EXPECT_NEAR(ms[0].fit.slope, -1.0, 1e-9);
}
