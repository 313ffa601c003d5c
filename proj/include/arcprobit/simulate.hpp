#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace arcprobit {

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, a, b, c), so generation order and thread layout never
// change the output. The hash is SplitMix64's finalizer applied in a
// chain; uniforms take the top 53 bits, normals use the inverse cdf.
namespace rng {

enum Stream : std::uint64_t {
    kInclude = 1,
    kCovariate = 2,
    kRowEffect = 3,
    kColEffect = 4,
    kNoise = 5,
    kPigeonRow = 6,
    kPigeonCol = 7,
    kSeedDerive = 8,
};

inline std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0,
                         std::uint64_t c = 0) noexcept {
    std::uint64_t h = mix(seed);
    h = mix(h ^ stream);
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
}

// Uniform in the open interval (0, 1).
inline double uniform(std::uint64_t k) noexcept {
    return (static_cast<double>(k >> 11) + 0.5) * 0x1.0p-53;
}

inline double normal(std::uint64_t k) { return std_normal_quantile(uniform(k)); }

} // namespace rng

struct SimSetting {
    std::string name;
    double rho = 0.56;
    double kappa = 0.56;
    Eigen::VectorXd beta;  // intercept first, then p predictor coefficients
    double sigma_a = 1.0;
    double sigma_b = 1.0;
    double ar1_phi = 0.5;

    std::size_t n_predictors() const { return beta.size() > 0 ? static_cast<std::size_t>(beta.size() - 1) : 0; }
};

// Presets named {bal,imb}-{nul,lin}-{hi,lo}.
inline SimSetting preset(std::string name) {
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    const auto dash1 = name.find('-');
    const auto dash2 = dash1 == std::string::npos ? std::string::npos : name.find('-', dash1 + 1);
    if (dash2 == std::string::npos) throw DomainError("unknown simulation setting '" + name + "'");
    const std::string balance = name.substr(0, dash1);
    const std::string predictors = name.substr(dash1 + 1, dash2 - dash1 - 1);
    const std::string variance = name.substr(dash2 + 1);
    SimSetting s;
    s.name = name;
    if (balance == "bal") {
        s.rho = s.kappa = 0.56;
    } else if (balance == "imb") {
        s.rho = 0.88;
        s.kappa = 0.53;
    } else {
        throw DomainError("unknown simulation setting '" + name + "'");
    }
    constexpr int p = 7;
    s.beta = Eigen::VectorXd::Zero(p + 1);
    s.beta[0] = -1.2;
    if (predictors == "lin") {
        for (int l = 1; l <= p; ++l) s.beta[l] = -1.2 + 0.3 * l;
    } else if (predictors != "nul") {
        throw DomainError("unknown simulation setting '" + name + "'");
    }
    if (variance == "hi") {
        s.sigma_a = s.sigma_b = 1.0;
    } else if (variance == "lo") {
        s.sigma_a = 0.5;
        s.sigma_b = 0.2;
    } else {
        throw DomainError("unknown simulation setting '" + name + "'");
    }
    s.ar1_phi = 0.5;
    return s;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"bal-nul-hi", "imb-nul-hi", "bal-lin-hi", "imb-lin-hi",
                                                "bal-nul-lo", "imb-nul-lo", "bal-lin-lo", "imb-lin-lo"};
    return names;
}

// Marginal Pr(Y = 1). With x ~ N(0, Sigma) independent of the effects,
// x'beta + a + b + e is normal, giving
// Phi(beta0 / sqrt(1 + sigma_a^2 + sigma_b^2 + beta' Sigma beta)).
inline double marginal_rate_check(const SimSetting& s) {
    const std::size_t p = s.n_predictors();
    double quad = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        for (std::size_t l = 0; l < p; ++l) {
            const double cov = std::pow(s.ar1_phi, std::fabs(static_cast<double>(k) - static_cast<double>(l)));
            quad += s.beta[static_cast<Eigen::Index>(k + 1)] * cov * s.beta[static_cast<Eigen::Index>(l + 1)];
        }
    }
    const double var = 1.0 + s.sigma_a * s.sigma_a + s.sigma_b * s.sigma_b + quad;
    return std_normal_cdf(s.beta[0] / std::sqrt(var));
}

struct TruthRecord {
    std::string setting;
    Eigen::VectorXd beta;
    double sigma_a = 0.0;
    double sigma_b = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::size_t n_obs = 0;
    std::size_t n_target = 0;
    std::vector<double> a;
    std::vector<double> b;
};

struct SimulatedData {
    SparseBinaryDataset data;
    TruthRecord truth;
};

// round-half-even
inline std::size_t sim_dimension(std::size_t n_target, double exponent) {
    return static_cast<std::size_t>(std::nearbyint(std::pow(static_cast<double>(n_target), exponent)));
}

// Crossed-design probit data: R = round(N^rho), C = round(N^kappa), each
// cell kept with probability N/(RC), AR(1)-correlated Gaussian features,
// y = 1{x'beta + a_i + b_j + e_ij > 0}. Cells are emitted row-major.
inline SimulatedData generate(const SimSetting& s, std::size_t n_target, std::uint64_t seed, unsigned threads = 1) {
    if (n_target < 10) throw DomainError("generate: target sample size must be at least 10");
    const std::size_t R = std::max<std::size_t>(1, sim_dimension(n_target, s.rho));
    const std::size_t C = std::max<std::size_t>(1, sim_dimension(n_target, s.kappa));
    const double density = static_cast<double>(n_target) / (static_cast<double>(R) * static_cast<double>(C));
    if (density > 1.0) {
        throw DomainError("generate: infeasible density N/(RC) = " + std::to_string(density) + " > 1");
    }
    const std::size_t p = s.n_predictors();
    const double phi = s.ar1_phi;
    const double innov = std::sqrt(1.0 - phi * phi);

    TruthRecord truth;
    truth.setting = s.name;
    truth.beta = s.beta;
    truth.sigma_a = s.sigma_a;
    truth.sigma_b = s.sigma_b;
    truth.seed = seed;
    truth.n_rows = R;
    truth.n_cols = C;
    truth.n_target = n_target;
    truth.a.resize(R);
    truth.b.resize(C);
    for (std::size_t i = 0; i < R; ++i) truth.a[i] = s.sigma_a * rng::normal(rng::key(seed, rng::kRowEffect, i));
    for (std::size_t j = 0; j < C; ++j) truth.b[j] = s.sigma_b * rng::normal(rng::key(seed, rng::kColEffect, j));

    struct Block {
        std::vector<Index> row, col;
        std::vector<std::uint8_t> y;
        std::vector<double> x;
    };
    constexpr std::size_t kRowsPerBlock = 64;
    const std::size_t n_blocks = (R + kRowsPerBlock - 1) / kRowsPerBlock;
    std::vector<Block> blocks(n_blocks);
    parallel_for_blocks(n_blocks, threads, [&](std::size_t b0, std::size_t b1) {
        std::vector<double> xc(p);
        for (std::size_t blk = b0; blk < b1; ++blk) {
            Block& out = blocks[blk];
            const std::size_t i0 = blk * kRowsPerBlock, i1 = std::min(R, i0 + kRowsPerBlock);
            for (std::size_t i = i0; i < i1; ++i) {
                for (std::size_t j = 0; j < C; ++j) {
                    if (rng::uniform(rng::key(seed, rng::kInclude, i, j)) >= density) continue;
                    double eta = s.beta[0];
                    for (std::size_t k = 0; k < p; ++k) {
                        const double z = rng::normal(rng::key(seed, rng::kCovariate, i, j, k));
                        xc[k] = k == 0 ? z : phi * xc[k - 1] + innov * z;
                        eta += s.beta[static_cast<Eigen::Index>(k + 1)] * xc[k];
                    }
                    const double eps = rng::normal(rng::key(seed, rng::kNoise, i, j));
                    out.row.push_back(static_cast<Index>(i));
                    out.col.push_back(static_cast<Index>(j));
                    out.y.push_back(eta + truth.a[i] + truth.b[j] + eps > 0.0 ? 1 : 0);
                    out.x.push_back(1.0);
                    out.x.insert(out.x.end(), xc.begin(), xc.end());
                }
            }
        }
    });

    std::vector<Index> rows, cols;
    std::vector<std::uint8_t> ys;
    std::vector<double> xs;
    for (auto& blk : blocks) {
        rows.insert(rows.end(), blk.row.begin(), blk.row.end());
        cols.insert(cols.end(), blk.col.begin(), blk.col.end());
        ys.insert(ys.end(), blk.y.begin(), blk.y.end());
        xs.insert(xs.end(), blk.x.begin(), blk.x.end());
    }
    const auto n = static_cast<Eigen::Index>(ys.size());
    RowMatrix x = Eigen::Map<RowMatrix>(xs.data(), n, static_cast<Eigen::Index>(p + 1));
    std::vector<std::string> names{kInterceptName};
    for (std::size_t k = 1; k <= p; ++k) names.push_back("x" + std::to_string(k));
    truth.n_obs = ys.size();
    SimulatedData out{make_dataset(R, C, std::move(rows), std::move(cols), std::move(ys), std::move(x), std::move(names)),
                      std::move(truth)};
    return out;
}

// Same design, new responses drawn from the model at the given parameters;
// used by the parametric bootstrap.
inline SparseBinaryDataset resimulate_responses(const SparseBinaryDataset& d, const Eigen::VectorXd& beta,
                                                double sigma2_a, double sigma2_b, std::uint64_t seed) {
    SparseBinaryDataset out = d;
    const double sa = std::sqrt(sigma2_a), sb = std::sqrt(sigma2_b);
    std::vector<double> a(d.n_rows), b(d.n_cols);
    for (std::size_t i = 0; i < d.n_rows; ++i) a[i] = sa * rng::normal(rng::key(seed, rng::kRowEffect, i));
    for (std::size_t j = 0; j < d.n_cols; ++j) b[j] = sb * rng::normal(rng::key(seed, rng::kColEffect, j));
    const Eigen::VectorXd eta = d.x * beta;
    for (std::size_t c = 0; c < d.n_obs(); ++c) {
        const double e = rng::normal(rng::key(seed, rng::kNoise, d.row[c], d.col[c]));
        out.y[c] = eta[static_cast<Eigen::Index>(c)] + a[d.row[c]] + b[d.col[c]] + e > 0.0 ? 1 : 0;
    }
    return out;
}

} // namespace arcprobit
