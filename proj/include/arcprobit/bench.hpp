#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "arc.hpp"
#include "baselines.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "simulate.hpp"

namespace arcprobit::bench {

inline constexpr const char* kCsvHeader = "setting,n_target,n_attained,seed,estimator,param,estimate,truth,stage,seconds";

// k values equispaced on the log10 scale between lo and hi, rounded to integers.
inline std::vector<std::size_t> log_grid(double lo, double hi, std::size_t k) {
    if (!(lo > 0.0) || !(hi >= lo) || k == 0) throw DomainError("log_grid: need 0 < lo <= hi and k >= 1");
    std::vector<std::size_t> out;
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t t = 0; t < k; ++t) {
        const double e = k == 1 ? a : a + (b - a) * static_cast<double>(t) / static_cast<double>(k - 1);
        out.push_back(static_cast<std::size_t>(std::llround(std::pow(10.0, e))));
    }
    return out;
}

struct BenchPlan {
    std::vector<std::string> settings;
    std::vector<std::size_t> n_grid = log_grid(1e3, 1e6, 13);
    std::size_t reps = 100;
    std::vector<std::string> estimators{"arc", "oracle", "laplace"};
    std::size_t laplace_n_cap = 100000;
    std::size_t laplace_cluster_guard = baselines::kLaplaceMaxClusters;

    void validate() const {
        if (settings.empty()) throw DomainError("bench plan: no settings");
        for (const auto& s : settings) (void)preset(s);
        if (n_grid.empty()) throw DomainError("bench plan: empty N grid");
        if (!std::is_sorted(n_grid.begin(), n_grid.end())) throw DomainError("bench plan: N grid must be ascending");
        if (reps < 1) throw DomainError("bench plan: reps must be >= 1");
        if (estimators.empty()) throw DomainError("bench plan: no estimators");
        for (const auto& e : estimators) {
            if (e != "arc" && e != "oracle" && e != "laplace") throw DomainError("bench plan: unknown estimator '" + e + "'");
        }
    }
};

// One CSV line.
struct BenchRow {
    std::string setting;
    std::size_t n_target = 0;
    std::size_t n_attained = 0;
    std::uint64_t seed = 0;
    std::string estimator;
    std::string param;
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double truth = std::numeric_limits<double>::quiet_NaN();
    std::string stage;
    double seconds = std::numeric_limits<double>::quiet_NaN();
};

struct CellKey {
    std::string setting;
    std::size_t n_target = 0;
    std::size_t rep = 0;
    std::string estimator;

    std::string str() const {
        return setting + "|" + std::to_string(n_target) + "|" + std::to_string(rep) + "|" + estimator;
    }
};

inline std::uint64_t string_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t cell_seed(std::uint64_t seed0, const std::string& setting, std::size_t n_target, std::size_t rep) {
    return rng::key(seed0, rng::kSeedDerive, string_hash(setting), n_target, rep);
}

// Laplace cells beyond the cap or the dense guard are never scheduled.
inline bool laplace_allowed(const BenchPlan& plan, const std::string& setting, std::size_t n) {
    if (n > plan.laplace_n_cap) return false;
    const auto s = preset(setting);
    return sim_dimension(n, s.rho) + sim_dimension(n, s.kappa) <= plan.laplace_cluster_guard;
}

inline std::vector<CellKey> plan_cells(const BenchPlan& plan) {
    std::vector<CellKey> cells;
    for (const auto& s : plan.settings) {
        for (std::size_t n : plan.n_grid) {
            for (std::size_t r = 0; r < plan.reps; ++r) {
                for (const auto& e : plan.estimators) {
                    if (e == "laplace" && !laplace_allowed(plan, s, n)) continue;
                    cells.push_back({s, n, r, e});
                }
            }
        }
    }
    return cells;
}

namespace detail {

inline std::string csv_num(double v) { return std::isnan(v) ? std::string() : arcprobit::detail::format_double(v); }

inline std::string to_line(const BenchRow& r) {
    std::ostringstream o;
    o << r.setting << ',' << r.n_target << ',' << r.n_attained << ',' << r.seed << ',' << r.estimator << ','
      << r.param << ',' << csv_num(r.estimate) << ',' << csv_num(r.truth) << ',' << r.stage << ','
      << csv_num(r.seconds);
    return o.str();
}

inline double parse_or_nan(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto v = arcprobit::detail::parse_double(s);
    if (!v) throw ParseError("bench csv: bad number '" + s + "'", 0);
    return *v;
}

inline std::string param_name(std::size_t k) { return "beta" + std::to_string(k); }

} // namespace detail

inline std::vector<BenchRow> read_rows(const std::string& path) {
    std::vector<BenchRow> rows;
    std::ifstream in(path);
    if (!in) return rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        const auto f = arcprobit::detail::split_csv_line(line);
        if (f.size() != 10) throw ParseError("bench csv: expected 10 fields", lineno);
        BenchRow r;
        r.setting = f[0];
        r.n_target = std::stoull(f[1]);
        r.n_attained = std::stoull(f[2]);
        r.seed = std::stoull(f[3]);
        r.estimator = f[4];
        r.param = f[5];
        r.estimate = detail::parse_or_nan(f[6]);
        r.truth = detail::parse_or_nan(f[7]);
        r.stage = f[8];
        r.seconds = detail::parse_or_nan(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// Distinct (setting, N, seed, estimator) records among the rows.
inline std::size_t count_records(const std::vector<BenchRow>& rows) {
    std::set<std::tuple<std::string, std::size_t, std::uint64_t, std::string>> keys;
    for (const auto& r : rows) keys.emplace(r.setting, r.n_target, r.seed, r.estimator);
    return keys.size();
}

// Rows for one cell. Failures become a single row with param "error".
inline std::vector<BenchRow> run_cell(const CellKey& key, std::uint64_t seed0) {
    const auto setting = preset(key.setting);
    const std::uint64_t seed = cell_seed(seed0, key.setting, key.n_target, key.rep);
    BenchRow base;
    base.setting = key.setting;
    base.n_target = key.n_target;
    base.seed = seed;
    base.estimator = key.estimator;
    std::vector<BenchRow> rows;
    try {
        const auto sim = generate(setting, key.n_target, seed);
        base.n_attained = sim.data.n_obs();
        const auto& truth = sim.truth;
        auto add = [&](const std::string& param, double est, double tru, const std::string& stage, double secs) {
            BenchRow r = base;
            r.param = param;
            r.estimate = est;
            r.truth = tru;
            r.stage = stage;
            r.seconds = secs;
            rows.push_back(std::move(r));
        };
        auto add_params = [&](const NaturalParams& th, bool with_sigma, double secs) {
            for (Eigen::Index k = 0; k < th.beta.size(); ++k) {
                add(detail::param_name(static_cast<std::size_t>(k)), th.beta[k], truth.beta[k], "total", secs);
            }
            if (with_sigma) {
                add("sigma_a", std::sqrt(th.sigma2_a), truth.sigma_a, "total", secs);
                add("sigma_b", std::sqrt(th.sigma2_b), truth.sigma_b, "total", secs);
            }
        };
        const auto t0 = std::chrono::steady_clock::now();
        if (key.estimator == "arc") {
            const auto fit = fit_arc(sim.data);
            add_params(fit.natural, true, fit.timings.total);
            add("", std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), "marginal",
                fit.timings.marginal);
            add("", std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), "row",
                fit.timings.row);
            add("", std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), "col",
                fit.timings.col);
        } else if (key.estimator == "oracle") {
            const auto th = baselines::oracle_estimate(sim.data, truth.sigma_a * truth.sigma_a,
                                                       truth.sigma_b * truth.sigma_b);
            add_params(th, false, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        } else if (key.estimator == "laplace") {
            const auto lf = baselines::laplace_fit(sim.data);
            add_params(lf.theta_hat, true, lf.seconds);
        } else {
            throw DomainError("unknown estimator '" + key.estimator + "'");
        }
    } catch (const std::exception& e) {
        rows.clear();
        BenchRow r = base;
        r.param = "error";
        r.stage = "failed";
        rows.push_back(std::move(r));
    }
    return rows;
}

struct RunSummary {
    std::size_t cells_planned = 0;
    std::size_t cells_skipped = 0;  // already complete in the manifest
    std::size_t cells_run = 0;
    std::size_t cells_failed = 0;
};

namespace detail {

inline std::set<std::string> read_manifest(const std::string& path) {
    std::set<std::string> done;
    std::ifstream in(path);
    if (!in) return done;
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bench manifest: ") + e.what(), 0);
    }
    for (const auto& k : j.at("completed")) done.insert(k.get<std::string>());
    return done;
}

inline void write_manifest(const std::string& path, const std::set<std::string>& done) {
    nlohmann::json j;
    j["version"] = 1;
    j["completed"] = std::vector<std::string>(done.begin(), done.end());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(1) << '\n';
        if (!out) throw Error("bench manifest: cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string row_key(const BenchRow& r, const std::map<std::uint64_t, std::size_t>& rep_of_seed) {
    const auto it = rep_of_seed.find(r.seed);
    if (it == rep_of_seed.end()) return {};
    return CellKey{r.setting, r.n_target, it->second, r.estimator}.str();
}

} // namespace detail

// Runs every planned cell not yet listed in the manifest. Cell rows are
// appended to csv_path in one write, then the manifest is updated; on
// restart, rows of cells missing from the manifest are discarded first.
inline RunSummary run_plan(const BenchPlan& plan, std::uint64_t seed0, unsigned parallelism,
                           const std::string& csv_path, const std::string& manifest_path) {
    plan.validate();
    const auto cells = plan_cells(plan);
    auto done = detail::read_manifest(manifest_path);

    std::map<std::uint64_t, std::size_t> rep_of_seed;
    for (const auto& c : cells) rep_of_seed[cell_seed(seed0, c.setting, c.n_target, c.rep)] = c.rep;

    // Drop partial rows from an interrupted run.
    if (std::filesystem::exists(csv_path)) {
        const auto rows = read_rows(csv_path);
        std::ofstream out(csv_path + ".tmp", std::ios::trunc);
        out << kCsvHeader << '\n';
        for (const auto& r : rows) {
            if (done.count(detail::row_key(r, rep_of_seed))) out << detail::to_line(r) << '\n';
        }
        out.close();
        std::filesystem::rename(csv_path + ".tmp", csv_path);
    } else {
        std::ofstream out(csv_path, std::ios::trunc);
        out << kCsvHeader << '\n';
        if (!out) throw Error("bench: cannot write " + csv_path);
    }

    std::vector<CellKey> todo;
    RunSummary summary;
    summary.cells_planned = cells.size();
    for (const auto& c : cells) {
        if (done.count(c.str())) {
            ++summary.cells_skipped;
        } else {
            todo.push_back(c);
        }
    }

    std::ofstream out(csv_path, std::ios::app);
    std::mutex appender;
    parallel_jobs(todo.size(), parallelism, [&](std::size_t t) {
        const auto rows = run_cell(todo[t], seed0);
        std::string block;
        for (const auto& r : rows) block += detail::to_line(r) + '\n';
        std::lock_guard lock(appender);
        out << block;
        out.flush();
        done.insert(todo[t].str());
        detail::write_manifest(manifest_path, done);
        ++summary.cells_run;
        if (rows.size() == 1 && rows[0].param == "error") ++summary.cells_failed;
    });
    if (todo.empty()) detail::write_manifest(manifest_path, done);
    return summary;
}

struct MseRow {
    std::string setting;
    std::size_t n_target = 0;
    std::string estimator;
    std::string param;
    std::size_t n = 0;
    double mse = 0.0;
    double bias = 0.0;
    double sd = 0.0;  // population sd, so mse = bias^2 + sd^2
};

struct TableResult {
    std::vector<MseRow> rows;
    std::vector<std::string> notes;
};

// MSE per (setting, N, estimator) for one parameter; cells with fewer
// than two estimates are omitted with a note.
inline TableResult mse_table(const std::vector<BenchRow>& records, const std::string& param) {
    std::map<std::tuple<std::string, std::size_t, std::string>, std::vector<std::pair<double, double>>> groups;
    for (const auto& r : records) {
        if (r.param != param || std::isnan(r.estimate) || std::isnan(r.truth)) continue;
        groups[{r.setting, r.n_target, r.estimator}].emplace_back(r.estimate, r.truth);
    }
    TableResult out;
    for (auto& [k, v] : groups) {
        const auto& [setting, n, est] = k;
        if (v.size() < 2) {
            out.notes.push_back("omitted " + setting + " N=" + std::to_string(n) + " " + est + ": fewer than 2 records");
            continue;
        }
        std::sort(v.begin(), v.end());
        KahanSum se, e1, m1;
        for (const auto& [e, t] : v) {
            se.add((e - t) * (e - t));
            e1.add(e - t);
            m1.add(e);
        }
        const double nn = static_cast<double>(v.size());
        const double mean_est = m1.value() / nn;
        KahanSum var;
        for (const auto& [e, t] : v) var.add((e - mean_est) * (e - mean_est));
        MseRow row{setting, n, est, param, v.size(), se.value() / nn, e1.value() / nn, std::sqrt(var.value() / nn)};
        out.rows.push_back(row);
    }
    return out;
}

struct TimeRow {
    std::string setting;
    std::size_t n_target = 0;
    std::string estimator;
    std::string stage;
    std::size_t n = 0;
    double mean_seconds = 0.0;
};

// Mean wall time per (setting, N, estimator) for one stage ("total" by default).
inline std::vector<TimeRow> time_table(const std::vector<BenchRow>& records, const std::string& stage = "total") {
    std::map<std::tuple<std::string, std::size_t, std::string>, std::map<std::uint64_t, double>> groups;
    for (const auto& r : records) {
        if (r.stage != stage || std::isnan(r.seconds)) continue;
        groups[{r.setting, r.n_target, r.estimator}][r.seed] = r.seconds;
    }
    std::vector<TimeRow> out;
    for (const auto& [k, v] : groups) {
        KahanSum s;
        for (const auto& [seed, secs] : v) s.add(secs);
        out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), stage, v.size(),
                       s.value() / static_cast<double>(v.size())});
    }
    return out;
}

struct SlopeResult {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_points = 0;
    std::vector<std::string> notes;
};

// OLS of log10(y) on log10(n).
inline SlopeResult slope_fit(const std::vector<double>& n, const std::vector<double>& y) {
    if (n.size() != y.size()) throw DomainError("slope_fit: length mismatch");
    SlopeResult out;
    std::vector<double> lx, ly;
    for (std::size_t t = 0; t < n.size(); ++t) {
        if (!(y[t] > 0.0) || !(n[t] > 0.0)) {
            out.notes.push_back("excluded nonpositive point at N=" + arcprobit::detail::format_double(n[t]));
            continue;
        }
        lx.push_back(std::log10(n[t]));
        ly.push_back(std::log10(y[t]));
    }
    out.n_points = lx.size();
    if (lx.size() < 3) throw DomainError("slope_fit: need at least 3 grid points");
    const double m = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t t = 0; t < lx.size(); ++t) {
        mx += lx[t];
        my += ly[t];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t t = 0; t < lx.size(); ++t) {
        sxx += (lx[t] - mx) * (lx[t] - mx);
        sxy += (lx[t] - mx) * (ly[t] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("slope_fit: all N values are equal");
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double rss = 0.0;
    for (std::size_t t = 0; t < lx.size(); ++t) {
        const double r = ly[t] - out.intercept - out.slope * lx[t];
        rss += r * r;
    }
    out.se = lx.size() > 2 ? std::sqrt(rss / (m - 2.0) / sxx) : 0.0;
    return out;
}

struct SlopeRow {
    std::string setting;
    std::string estimator;
    std::string param;     // parameter name, or the stage for timings
    std::string response;  // "mse" or "time"
    SlopeResult fit;
};

inline std::vector<SlopeRow> mse_slopes(const std::vector<BenchRow>& records, const std::vector<std::string>& params) {
    std::vector<SlopeRow> out;
    for (const auto& p : params) {
        const auto table = mse_table(records, p);
        std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> series;
        for (const auto& r : table.rows) {
            auto& s = series[{r.setting, r.estimator}];
            s.first.push_back(static_cast<double>(r.n_target));
            s.second.push_back(r.mse);
        }
        for (const auto& [k, s] : series) {
            if (s.first.size() < 3) continue;
            out.push_back({k.first, k.second, p, "mse", slope_fit(s.first, s.second)});
        }
    }
    return out;
}

inline std::vector<SlopeRow> time_slopes(const std::vector<BenchRow>& records, const std::string& stage = "total") {
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> series;
    for (const auto& r : time_table(records, stage)) {
        auto& s = series[{r.setting, r.estimator}];
        s.first.push_back(static_cast<double>(r.n_target));
        s.second.push_back(r.mean_seconds);
    }
    std::vector<SlopeRow> out;
    for (const auto& [k, s] : series) {
        if (s.first.size() < 3) continue;
        out.push_back({k.first, k.second, stage, "time", slope_fit(s.first, s.second)});
    }
    return out;
}

} // namespace arcprobit::bench
