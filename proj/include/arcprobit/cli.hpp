#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "arc.hpp"
#include "baselines.hpp"
#include "bench.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "inference.hpp"
#include "parallel.hpp"
#include "simulate.hpp"

namespace arcprobit::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitSeparation = 3;
inline constexpr int kExitConvergence = 4;

inline constexpr int kReportVersion = 1;

// ---------------------------------------------------------------------------
// Helpers shared by the subcommands.

struct DataArgs {
    std::string path;
    std::string response;
    std::string row;
    std::string col;
    std::vector<std::string> features;
    std::vector<std::string> one_hot;
    bool no_intercept = false;
};

inline void add_data_flags(CLI::App* app, DataArgs& a) {
    app->add_option("--data", a.path, "CSV file (optionally gzip-compressed)")->required();
    app->add_option("--response", a.response, "binary 0/1 response column")->required();
    app->add_option("--row", a.row, "row-factor id column")->required();
    app->add_option("--col", a.col, "column-factor id column")->required();
    app->add_option("--features", a.features, "numeric feature columns")->delimiter(',');
    app->add_option("--one-hot", a.one_hot, "categorical columns to expand into indicators (first level is the reference)")
        ->delimiter(',');
    app->add_flag("--no-intercept", a.no_intercept, "omit the intercept column");
}

// Replaces each listed categorical column by indicators for every level
// except the first in sorted order. Columns not already among the
// features are appended to them.
inline void expand_one_hot(CsvTable& t, std::vector<std::string>& features, const std::vector<std::string>& cols) {
    for (const auto& name : cols) {
        const auto k = t.column(name);
        if (!k) throw SchemaError("one-hot column '" + name + "' not found in header");
        std::set<std::string> levels;
        for (const auto& rec : t.records) levels.insert(rec[*k]);
        std::vector<std::string> new_names;
        for (auto it = std::next(levels.begin(), levels.empty() ? 0 : 1); it != levels.end(); ++it) {
            const std::string col_name = name + "=" + *it;
            if (t.column(col_name)) throw SchemaError("one-hot column name '" + col_name + "' already exists");
            t.header.push_back(col_name);
            for (auto& rec : t.records) rec.push_back(rec[*k] == *it ? "1" : "0");
            new_names.push_back(col_name);
        }
        auto pos = std::find(features.begin(), features.end(), name);
        if (pos != features.end()) {
            pos = features.erase(pos);
            features.insert(pos, new_names.begin(), new_names.end());
        } else {
            features.insert(features.end(), new_names.begin(), new_names.end());
        }
    }
}

inline SparseBinaryDataset load_data(const DataArgs& a) {
    CsvTable t = read_csv_table(a.path);
    std::vector<std::string> features = a.features;
    if (!a.one_hot.empty()) expand_one_hot(t, features, a.one_hot);
    return dataset_from_table(t, CsvSchema{a.response, a.row, a.col, features, !a.no_intercept});
}

inline std::string sidecar_path(const std::string& data_path) {
    std::string stem = data_path;
    for (const char* ext : {".gz", ".csv"}) {
        const std::string e(ext);
        if (stem.size() > e.size() && stem.compare(stem.size() - e.size(), e.size(), e) == 0) {
            stem.resize(stem.size() - e.size());
        }
    }
    return stem + ".truth.json";
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError("invalid JSON in " + path + ": " + e.what());
    }
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw SchemaError("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    DataArgs data;
    std::string se = "sandwich";
    std::size_t bootstrap = 200;
    std::string bootstrap_mode = "gamma";
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::string out;
    bool timings = false;
};

inline json fit_report(const SparseBinaryDataset& d, const FitArgs& a, unsigned threads, std::ostream& out,
                       std::ostream& err) {
    using clock = std::chrono::steady_clock;
    ArcOptions ao;
    ao.threads = threads;
    const auto fit = fit_arc(d, ao);
    const auto t_inf = clock::now();
    const double s2a = fit.natural.sigma2_a, s2b = fit.natural.sigma2_b;
    const auto naive = naive_result(fit.marginal.info, s2a, s2b);
    const auto sandwich = sandwich_vcov(d, fit.working.gamma, fit.marginal.info, s2a, s2b);
    std::optional<VcovResult> pigeon;
    if (a.se == "pigeonhole" || a.se == "all") {
        BootstrapOptions bo;
        bo.replicates = a.bootstrap;
        bo.seed = a.seed;
        bo.mode = a.bootstrap_mode == "full" ? RefitMode::FullArc : RefitMode::GammaOnly;
        bo.threads = threads;
        bo.arc = ao;
        pigeon = pigeonhole_bootstrap(d, fit, bo);
    }
    const double inference_seconds = std::chrono::duration<double>(clock::now() - t_inf).count();

    const VcovResult& basis = a.se == "naive" ? naive : a.se == "pigeonhole" ? *pigeon : sandwich;
    const auto stats = compute_stats(d);

    json coefs = json::array();
    for (std::size_t k = 0; k < d.n_features(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double se = basis.se_beta[i];
        const double z = se > 0.0 ? fit.natural.beta[i] / se : 0.0;
        json c;
        c["name"] = d.feature_names[k];
        c["beta_hat"] = fit.natural.beta[i];
        c["gamma_hat"] = fit.working.gamma[i];
        c["se_naive"] = naive.se_beta[i];
        c["se_sandwich"] = sandwich.se_beta[i];
        if (pigeon) c["se_pigeonhole"] = pigeon->se_beta[i];
        c["z"] = z;
        c["p_value"] = se > 0.0 ? two_sided_p(z) : 1.0;
        coefs.push_back(c);
    }

    json rep;
    rep["report_version"] = kReportVersion;
    rep["command"] = "fit";
    rep["se_basis"] = to_string(basis.method);
    rep["coefficients"] = coefs;
    json vc;
    vc["sigma_a"] = std::sqrt(s2a);
    vc["sigma_b"] = std::sqrt(s2b);
    vc["sigma2_a"] = s2a;
    vc["sigma2_b"] = s2b;
    vc["tau2_a"] = fit.working.tau2_a;
    vc["tau2_b"] = fit.working.tau2_b;
    if (pigeon && pigeon->se_sigma) {
        vc["se_sigma_a"] = (*pigeon->se_sigma)[0];
        vc["se_sigma_b"] = (*pigeon->se_sigma)[1];
    }
    rep["variance_components"] = vc;

    json dg;
    dg["n_obs"] = stats.n_obs;
    dg["n_rows"] = stats.n_rows;
    dg["n_cols"] = stats.n_cols;
    dg["eps_row"] = stats.max_row_share;
    dg["eps_col"] = stats.max_col_share;
    dg["singleton_rows"] = stats.n_singleton_rows;
    dg["singleton_cols"] = stats.n_singleton_cols;
    dg["duplicates_dropped"] = d.duplicates_dropped;
    dg["fallback_applied"] = fit.fallback_applied;
    dg["nodes_row"] = fit.nodes_row;
    dg["nodes_col"] = fit.nodes_col;
    dg["marginal_iterations"] = fit.marginal.n_iter;
    dg["loglik_marginal"] = fit.marginal.loglik;
    dg["loglik_row"] = fit.row_loglik_at_opt;
    dg["loglik_col"] = fit.col_loglik_at_opt;
    std::vector<std::string> warnings = fit.warnings;
    for (const auto* v : {&naive, &sandwich}) warnings.insert(warnings.end(), v->warnings.begin(), v->warnings.end());
    if (pigeon) warnings.insert(warnings.end(), pigeon->warnings.begin(), pigeon->warnings.end());
    dg["warnings"] = warnings;
    rep["diagnostics"] = dg;

    if (pigeon) {
        json b;
        b["replicates"] = pigeon->replicates;
        b["dropped"] = pigeon->dropped;
        b["seed"] = a.seed;
        b["mode"] = a.bootstrap_mode == "full" ? "full-arc" : "gamma-only";
        rep["bootstrap"] = b;
    }
    if (a.timings) {
        json t;
        t["marginal"] = fit.timings.marginal;
        t["row"] = fit.timings.row;
        t["col"] = fit.timings.col;
        t["arc_total"] = fit.timings.total;
        t["inference"] = inference_seconds;
        rep["timings"] = t;
    }

    // Human-readable table.
    out << "ARC probit fit: N = " << stats.n_obs << ", R = " << stats.n_rows << ", C = " << stats.n_cols << "\n\n";
    std::size_t width = 12;
    for (const auto& n : d.feature_names) width = std::max(width, n.size() + 2);
    out << std::string(width - 4, ' ') << "name" << "      estimate" << "      se_naive" << "   se_sandwich";
    if (pigeon) out << " se_pigeonhole";
    out << "       z value" << "       p value\n";
    for (const auto& c : coefs) {
        const std::string name = c["name"].get<std::string>();
        out << std::string(width - name.size(), ' ') << name << fmt("%14.6f", c["beta_hat"].get<double>())
            << fmt("%14.6f", c["se_naive"].get<double>()) << fmt("%14.6f", c["se_sandwich"].get<double>());
        if (pigeon) out << fmt("%14.6f", c["se_pigeonhole"].get<double>());
        out << fmt("%14.4f", c["z"].get<double>()) << fmt("%14.4g", c["p_value"].get<double>()) << '\n';
    }
    out << "\nsigma_a = " << fmt("%.6f", std::sqrt(s2a)) << "  sigma_b = " << fmt("%.6f", std::sqrt(s2b))
        << "  (tau2_a = " << fmt("%.6f", fit.working.tau2_a) << ", tau2_b = " << fmt("%.6f", fit.working.tau2_b)
        << ")\n";
    out << "quadrature nodes: row " << fit.nodes_row << ", col " << fit.nodes_col << "; z values use the "
        << to_string(basis.method) << " standard errors\n";
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    return rep;
}

inline int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    const unsigned threads = a.threads ? a.threads : default_thread_count();
    const auto d = load_data(a.data);
    const auto rep = fit_report(d, a, threads, out, err);
    if (!a.out.empty()) write_json_file(rep, a.out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::string setting;
    std::size_t n = 0;
    std::uint64_t seed = 1;
    std::string out;
    unsigned threads = 0;
};

inline json truth_json(const TruthRecord& t, const SimSetting& s) {
    json j;
    j["setting"] = t.setting;
    j["beta"] = to_vector(t.beta);
    j["sigma_a"] = t.sigma_a;
    j["sigma_b"] = t.sigma_b;
    j["seed"] = t.seed;
    j["R"] = t.n_rows;
    j["C"] = t.n_cols;
    j["N"] = t.n_obs;
    j["n_target"] = t.n_target;
    j["rho"] = s.rho;
    j["kappa"] = s.kappa;
    j["ar1_phi"] = s.ar1_phi;
    j["dimension_rounding"] = "half-even";
    return j;
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
    const auto s = preset(a.setting);
    const unsigned threads = a.threads ? a.threads : default_thread_count();
    const auto sim = generate(s, a.n, a.seed, threads);
    write_csv(sim.data, a.out);
    const std::string side = sidecar_path(a.out);
    write_json_file(truth_json(sim.truth, s), side);
    out << "wrote " << a.out << " (N = " << sim.data.n_obs() << ", R = " << sim.data.n_rows
        << ", C = " << sim.data.n_cols << ") and " << side << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::vector<std::string> settings;
    std::string grid = "1e3:1e6:13";
    std::size_t reps = 100;
    std::vector<std::string> estimators{"arc", "oracle", "laplace"};
    std::size_t laplace_cap = 100000;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::string out = "bench.csv";
    std::string manifest;
};

inline std::vector<std::size_t> parse_grid(const std::string& g) {
    const auto a = g.find(':');
    const auto b = a == std::string::npos ? a : g.find(':', a + 1);
    if (b == std::string::npos) throw DomainError("--grid must look like LO:HI:K, e.g. 1e3:1e6:13");
    const auto lo = detail::parse_double(g.substr(0, a));
    const auto hi = detail::parse_double(g.substr(a + 1, b - a - 1));
    const auto k = detail::parse_double(g.substr(b + 1));
    if (!lo || !hi || !k || *k < 1 || *k != std::floor(*k)) {
        throw DomainError("--grid must look like LO:HI:K, e.g. 1e3:1e6:13");
    }
    return bench::log_grid(*lo, *hi, static_cast<std::size_t>(*k));
}

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    bench::BenchPlan plan;
    plan.settings = a.settings;
    plan.n_grid = parse_grid(a.grid);
    plan.reps = a.reps;
    plan.estimators = a.estimators;
    plan.laplace_n_cap = a.laplace_cap;
    const unsigned threads = a.threads ? a.threads : default_thread_count();
    const std::string manifest = a.manifest.empty() ? a.out + ".manifest.json" : a.manifest;
    const auto summary = bench::run_plan(plan, a.seed, threads, a.out, manifest);
    const auto rows = bench::read_rows(a.out);

    out << "cells: " << summary.cells_planned << " planned, " << summary.cells_skipped << " already complete, "
        << summary.cells_run << " run, " << summary.cells_failed << " failed\n";
    out << "records in " << a.out << ": " << bench::count_records(rows) << "\n\n";

    std::set<std::string> params;
    for (const auto& r : rows) {
        if (r.stage == "total" && !r.param.empty() && r.param != "error") params.insert(r.param);
    }
    std::vector<bench::SlopeRow> slopes = bench::time_slopes(rows);
    const auto ms = bench::mse_slopes(rows, {params.begin(), params.end()});
    slopes.insert(slopes.end(), ms.begin(), ms.end());
    if (slopes.empty()) {
        out << "no slopes: need at least 3 grid points with 2 or more records each\n";
    } else {
        out << "log10-log10 slopes vs N\n";
        for (const auto& s : slopes) {
            out << "  " << s.setting << "  " << s.estimator << "  " << s.response << "(" << s.param << ")  slope "
                << fmt("%.3f", s.fit.slope) << " +- " << fmt("%.3f", s.fit.se) << "  (" << s.fit.n_points
                << " points)\n";
            for (const auto& n : s.fit.notes) err << "note: " << n << '\n';
        }
    }
    const std::size_t planned_here = summary.cells_run;
    if (planned_here > 0 && summary.cells_failed == planned_here) {
        err << "error: every cell failed\n";
        return kExitOther;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineArgs {
    std::string method;
    DataArgs data;
    std::string truth;
    std::vector<double> beta;
    std::optional<double> sigma_a;
    std::optional<double> sigma_b;
    bool fix_sigma_zero = false;
    std::size_t nodes = 40;
    std::string out;
};

inline int cmd_baseline(const BaselineArgs& a, std::ostream& out, std::ostream&) {
    const auto d = load_data(a.data);
    json rep;
    rep["report_version"] = kReportVersion;
    rep["command"] = "baseline";
    rep["method"] = a.method;
    auto truth_or_throw = [&]() {
        const std::string path = a.truth.empty() ? sidecar_path(a.data.path) : a.truth;
        if (!std::filesystem::exists(path)) {
            throw SchemaError("truth sidecar " + path + " not found; the " + a.method +
                              " baseline needs the true parameters (pass --truth PATH)");
        }
        return read_json_file(path);
    };
    auto put_theta = [&](const NaturalParams& th) {
        json coefs = json::array();
        for (std::size_t k = 0; k < d.n_features(); ++k) {
            coefs.push_back({{"name", d.feature_names[k]}, {"beta_hat", th.beta[static_cast<Eigen::Index>(k)]}});
        }
        rep["coefficients"] = coefs;
        rep["sigma_a"] = std::sqrt(th.sigma2_a);
        rep["sigma_b"] = std::sqrt(th.sigma2_b);
    };

    if (a.method == "oracle") {
        const auto t = truth_or_throw();
        const double sa = t.at("sigma_a").get<double>(), sb = t.at("sigma_b").get<double>();
        put_theta(baselines::oracle_estimate(d, sa * sa, sb * sb));
    } else if (a.method == "laplace") {
        baselines::LaplaceOptions lo;
        lo.fix_sigma_zero = a.fix_sigma_zero;
        const auto lf = baselines::laplace_fit(d, lo);
        put_theta(lf.theta_hat);
        rep["log_laplace"] = lf.log_laplace;
        rep["n_outer_iter"] = lf.n_outer_iter;
        rep["converged"] = lf.converged;
    } else if (a.method == "bruteforce") {
        NaturalParams th;
        if (!a.beta.empty()) {
            if (!a.sigma_a || !a.sigma_b) throw SchemaError("bruteforce with --beta also needs --sigma-a and --sigma-b");
            th.beta = Eigen::Map<const Eigen::VectorXd>(a.beta.data(), static_cast<Eigen::Index>(a.beta.size()));
            th.sigma2_a = *a.sigma_a * *a.sigma_a;
            th.sigma2_b = *a.sigma_b * *a.sigma_b;
        } else {
            const auto t = truth_or_throw();
            const auto b = t.at("beta").get<std::vector<double>>();
            th.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
            th.sigma2_a = std::pow(a.sigma_a.value_or(t.at("sigma_a").get<double>()), 2);
            th.sigma2_b = std::pow(a.sigma_b.value_or(t.at("sigma_b").get<double>()), 2);
        }
        if (static_cast<std::size_t>(th.beta.size()) != d.n_features()) {
            throw SchemaError("beta has " + std::to_string(th.beta.size()) + " entries but the design has " +
                              std::to_string(d.n_features()) + " columns");
        }
        rep["loglik"] = baselines::full_loglik_bruteforce(th, d, a.nodes);
        rep["nodes"] = a.nodes;
    } else {
        throw SchemaError("unknown baseline method '" + a.method + "'");
    }
    const std::string text = rep.dump(2);
    if (a.out.empty()) {
        out << text << '\n';
    } else {
        write_json_file(rep, a.out);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int exit_code_for(const std::exception& e, std::string& remedy) {
    if (dynamic_cast<const SeparationError*>(&e)) {
        remedy = "a feature separates the responses; drop or merge it, or collapse sparse categories";
        return kExitSeparation;
    }
    if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const OptimizationError*>(&e) ||
        dynamic_cast<const BootstrapError*>(&e)) {
        remedy = "check for near-separation or extreme imbalance, or rescale the features";
        return kExitConvergence;
    }
    if (dynamic_cast<const GuardError*>(&e)) {
        remedy = "the input is beyond this method's size guard";
        return kExitData;
    }
    if (dynamic_cast<const RankDeficiencyError*>(&e)) {
        remedy = "remove the collinear feature or the redundant intercept";
        return kExitData;
    }
    if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const DomainError*>(&e)) {
        remedy = "check the input file and flags";
        return kExitData;
    }
    remedy.clear();
    return kExitOther;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Probit regression with crossed random effects (all-row-column composite likelihood)", "arcprobit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "arcprobit 1.0.0");

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit the model and report coefficients with standard errors");
    add_data_flags(fit, fa.data);
    fit->add_option("--se", fa.se, "standard errors used for z and p values")
        ->check(CLI::IsMember({"naive", "sandwich", "pigeonhole", "all"}));
    fit->add_option("--bootstrap", fa.bootstrap, "pigeonhole bootstrap replicates")->check(CLI::Range(2, 1000000));
    fit->add_option("--bootstrap-mode", fa.bootstrap_mode, "gamma: refit the marginal probit only; full: refit all stages")
        ->check(CLI::IsMember({"gamma", "full"}));
    fit->add_option("--seed", fa.seed, "bootstrap seed");
    fit->add_option("--threads", fa.threads, "worker threads (default: ARCPROBIT_THREADS or all cores)");
    fit->add_option("--out", fa.out, "write the JSON report here");
    fit->add_flag("--timings", fa.timings, "include wall-clock timings in the JSON report");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "generate a crossed-design dataset and its truth sidecar");
    sim->add_option("--setting", sa.setting, "preset {bal,imb}-{nul,lin}-{hi,lo}")->required();
    sim->add_option("--n", sa.n, "target sample size")->required();
    sim->add_option("--seed", sa.seed, "random seed");
    sim->add_option("--out", sa.out, "output CSV path")->required();
    sim->add_option("--threads", sa.threads, "worker threads");

    BenchArgs ba;
    auto* ben = app.add_subcommand("bench", "Monte Carlo runs over an N grid with MSE and timing slopes");
    ben->add_option("--settings", ba.settings, "preset names")->delimiter(',')->required();
    ben->add_option("--grid", ba.grid, "LO:HI:K, K target sizes log-equispaced in [LO, HI]");
    ben->add_option("--reps", ba.reps, "replications per (setting, N)")->check(CLI::PositiveNumber);
    ben->add_option("--estimators", ba.estimators, "subset of arc,oracle,laplace")
        ->delimiter(',')
        ->check(CLI::IsMember({"arc", "oracle", "laplace"}));
    ben->add_option("--laplace-cap", ba.laplace_cap, "largest N for the Laplace baseline");
    ben->add_option("--seed", ba.seed, "base seed");
    ben->add_option("--threads", ba.threads, "cells run concurrently");
    ben->add_option("--out", ba.out, "results CSV (appended, resumable)");
    ben->add_option("--manifest", ba.manifest, "completed-cell manifest (default: <out>.manifest.json)");

    BaselineArgs la;
    auto* base = app.add_subcommand("baseline", "reference estimators for small problems");
    base->add_option("--method", la.method, "laplace, oracle or bruteforce")
        ->required()
        ->check(CLI::IsMember({"laplace", "oracle", "bruteforce"}));
    add_data_flags(base, la.data);
    base->add_option("--truth", la.truth, "truth sidecar JSON (default: next to --data)");
    base->add_option("--beta", la.beta, "bruteforce: coefficients, intercept first")->delimiter(',');
    base->add_option("--sigma-a", la.sigma_a, "bruteforce: row effect sd");
    base->add_option("--sigma-b", la.sigma_b, "bruteforce: column effect sd");
    base->add_flag("--fix-sigma-zero", la.fix_sigma_zero, "laplace: force both variances to 0");
    base->add_option("--nodes", la.nodes, "bruteforce: quadrature nodes per dimension")->check(CLI::Range(7, 200));
    base->add_option("--out", la.out, "write the JSON report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << "arcprobit 1.0.0\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        err << (sub ? sub->help() : app.help());
        return kExitData;
    }

    try {
        if (*fit) return cmd_fit(fa, out, err);
        if (*sim) return cmd_simulate(sa, out, err);
        if (*ben) return cmd_bench(ba, out, err);
        if (*base) return cmd_baseline(la, out, err);
    } catch (const std::exception& e) {
        std::string remedy;
        const int code = exit_code_for(e, remedy);
        err << "error: " << e.what() << '\n';
        if (!remedy.empty()) err << "hint: " << remedy << '\n';
        return code;
    }
    return kExitOther;
}

inline int main(int argc, char** argv) { return run(argc, argv); }

} // namespace arcprobit::cli
