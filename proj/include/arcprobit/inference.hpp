#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arc.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "probit_glm.hpp"
#include "simulate.hpp"

namespace arcprobit {

// Per-cell scores u_ij and their row and column totals.
struct ScoreBlocks {
    RowMatrix cell;      // N x p
    RowMatrix row_sums;  // R x p
    RowMatrix col_sums;  // C x p
};

inline ScoreBlocks compute_score_blocks(const SparseBinaryDataset& d, const Eigen::VectorXd& gamma) {
    const auto p = static_cast<Eigen::Index>(d.n_features());
    ScoreBlocks s;
    s.cell.resize(static_cast<Eigen::Index>(d.n_obs()), p);
    const Eigen::VectorXd eta = d.x * gamma;
    for (std::size_t c = 0; c < d.n_obs(); ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        const double sg = d.y[c] ? 1.0 : -1.0;
        s.cell.row(ci) = (sg * mills(sg * eta[ci])) * d.x.row(ci);
    }
    auto group_sums = [&](const GroupedView& view) {
        RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(view.n_groups()), p);
        for (std::size_t g = 0; g < view.n_groups(); ++g) {
            for (Eigen::Index k = 0; k < p; ++k) {
                KahanSum acc;
                for (std::size_t c : view.group(g)) acc.add(s.cell(static_cast<Eigen::Index>(c), k));
                out(static_cast<Eigen::Index>(g), k) = acc.value();
            }
        }
        return out;
    };
    s.row_sums = group_sums(d.row_view);
    s.col_sums = group_sums(d.col_view);
    return s;
}

enum class VcovMethod { Naive, Sandwich, Pigeonhole, Parametric };

inline const char* to_string(VcovMethod m) {
    switch (m) {
        case VcovMethod::Naive: return "naive";
        case VcovMethod::Sandwich: return "sandwich";
        case VcovMethod::Pigeonhole: return "pigeonhole";
        case VcovMethod::Parametric: return "parametric";
    }
    return "unknown";
}

struct VcovResult {
    VcovMethod method = VcovMethod::Naive;
    Eigen::MatrixXd vcov_gamma;
    Eigen::MatrixXd vcov_beta;
    Eigen::VectorXd se_gamma;
    Eigen::VectorXd se_beta;
    // Sandwich only: the three score-variance pieces.
    Eigen::MatrixXd meat_row;
    Eigen::MatrixXd meat_col;
    Eigen::MatrixXd meat_cell;
    // Bootstraps that refit the variance components.
    std::optional<Eigen::Matrix2d> vcov_sigma2;
    std::optional<Eigen::Vector2d> se_sigma;  // sd scale: (sigma_a, sigma_b)
    std::size_t replicates = 0;
    std::size_t dropped = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::VectorXd se_from(const Eigen::MatrixXd& v) { return v.diagonal().cwiseMax(0.0).cwiseSqrt(); }

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& info, const char* who) {
    if (first_singular_column(info) >= 0) throw RankDeficiencyError(std::string(who) + ": information is singular", 0);
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) throw RankDeficiencyError(std::string(who) + ": information is not positive definite", 0);
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
    return 0.5 * (inv + inv.transpose());
}

// S'S accumulated in a canonical row order (lexicographic on the rows)
// with compensated sums, so any permutation of the rows of S gives the
// same bits.
inline Eigen::MatrixXd canonical_gram(const RowMatrix& s) {
    const Eigen::Index n = s.rows(), p = s.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index k = 0; k < p; ++k) {
            if (s(a, k) != s(b, k)) return s(a, k) < s(b, k);
        }
        return false;
    });
    std::vector<KahanSum> acc(static_cast<std::size_t>(p * (p + 1) / 2));
    for (Eigen::Index i : order) {
        std::size_t t = 0;
        for (Eigen::Index k = 0; k < p; ++k) {
            for (Eigen::Index l = 0; l <= k; ++l) acc[t++].add(s(i, k) * s(i, l));
        }
    }
    Eigen::MatrixXd g(p, p);
    std::size_t t = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index l = 0; l <= k; ++l) g(k, l) = g(l, k) = acc[t++].value();
    }
    return g;
}

inline Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& xs) {
    const auto p = xs.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
    for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
    return cov / static_cast<double>(xs.size() - 1);
}

} // namespace detail

inline Eigen::MatrixXd vcov_beta_plugin(const Eigen::MatrixXd& vcov_gamma, double sigma2_a, double sigma2_b) {
    if (sigma2_a < 0.0 || sigma2_b < 0.0) throw DomainError("vcov_beta_plugin: negative variance");
    return (1.0 + sigma2_a + sigma2_b) * vcov_gamma;
}

// Inverse observed information of the marginal probit fit.
inline Eigen::MatrixXd naive_vcov(const Eigen::MatrixXd& info) { return detail::spd_inverse(info, "naive_vcov"); }

inline VcovResult naive_result(const Eigen::MatrixXd& info, double sigma2_a = 0.0, double sigma2_b = 0.0) {
    VcovResult r;
    r.method = VcovMethod::Naive;
    r.vcov_gamma = naive_vcov(info);
    r.vcov_beta = vcov_beta_plugin(r.vcov_gamma, sigma2_a, sigma2_b);
    r.se_gamma = detail::se_from(r.vcov_gamma);
    r.se_beta = detail::se_from(r.vcov_beta);
    return r;
}

// Two-way cluster-robust sandwich I^{-1} (V_row + V_col - V_cell) I^{-1};
// beta's covariance uses the plug-in factor (1 + sigma2_a + sigma2_b).
inline VcovResult sandwich_vcov(const SparseBinaryDataset& d, const Eigen::VectorXd& gamma_hat,
                                const Eigen::MatrixXd& info, double sigma2_a = 0.0, double sigma2_b = 0.0) {
    const Eigen::MatrixXd bread = detail::spd_inverse(info, "sandwich_vcov");
    const ScoreBlocks s = compute_score_blocks(d, gamma_hat);
    VcovResult r;
    r.method = VcovMethod::Sandwich;
    r.meat_row = detail::canonical_gram(s.row_sums);
    r.meat_col = detail::canonical_gram(s.col_sums);
    r.meat_cell = detail::canonical_gram(s.cell);
    Eigen::MatrixXd meat = r.meat_row + r.meat_col - r.meat_cell;
    meat = 0.5 * (meat + meat.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(meat);
    if (es.eigenvalues().minCoeff() < 0.0) {
        r.warnings.push_back("two-way score variance was indefinite; negative eigenvalues clipped to 0");
        const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
        meat = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    }
    r.vcov_gamma = bread * meat * bread;
    r.vcov_gamma = 0.5 * (r.vcov_gamma + r.vcov_gamma.transpose()).eval();
    r.vcov_beta = vcov_beta_plugin(r.vcov_gamma, sigma2_a, sigma2_b);
    r.se_gamma = detail::se_from(r.vcov_gamma);
    r.se_beta = detail::se_from(r.vcov_beta);
    return r;
}

enum class RefitMode { FullArc, GammaOnly };

struct BootstrapOptions {
    std::size_t replicates = 200;
    std::uint64_t seed = 1;
    RefitMode mode = RefitMode::GammaOnly;
    unsigned threads = 1;
    double max_drop_fraction = 0.2;
    bool force_unit_weights = false;  // debug hook: every multiplicity 1
    ArcOptions arc;
};

// Row and column multiplicities of one pigeonhole draw: R rows and C
// columns resampled with replacement, independently.
inline ReplicateWeights pigeonhole_weights(const SparseBinaryDataset& d, std::uint64_t seed, std::size_t replicate,
                                           bool unit = false) {
    ReplicateWeights w;
    w.row_mult.assign(d.n_rows, unit ? 1.0 : 0.0);
    w.col_mult.assign(d.n_cols, unit ? 1.0 : 0.0);
    if (unit) return w;
    for (std::size_t t = 0; t < d.n_rows; ++t) {
        const double u = rng::uniform(rng::key(seed, rng::kPigeonRow, replicate, t));
        w.row_mult[std::min(d.n_rows - 1, static_cast<std::size_t>(u * static_cast<double>(d.n_rows)))] += 1.0;
    }
    for (std::size_t t = 0; t < d.n_cols; ++t) {
        const double u = rng::uniform(rng::key(seed, rng::kPigeonCol, replicate, t));
        w.col_mult[std::min(d.n_cols - 1, static_cast<std::size_t>(u * static_cast<double>(d.n_cols)))] += 1.0;
    }
    return w;
}

namespace detail {

struct Replicate {
    bool ok = false;
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    double sigma2_a = 0.0;
    double sigma2_b = 0.0;
};

inline VcovResult summarize_replicates(std::vector<Replicate>& reps, VcovMethod method, double max_drop,
                                       bool with_sigma) {
    VcovResult r;
    r.method = method;
    std::vector<Eigen::VectorXd> g, b, s2, s;
    for (auto& rep : reps) {
        if (!rep.ok) {
            ++r.dropped;
            continue;
        }
        g.push_back(rep.gamma);
        b.push_back(rep.beta);
        s2.push_back(Eigen::Vector2d(rep.sigma2_a, rep.sigma2_b));
        s.push_back(Eigen::Vector2d(std::sqrt(rep.sigma2_a), std::sqrt(rep.sigma2_b)));
    }
    r.replicates = g.size();
    if (static_cast<double>(r.dropped) > max_drop * static_cast<double>(reps.size()) || g.size() < 2) {
        throw BootstrapError(std::to_string(r.dropped) + " of " + std::to_string(reps.size()) +
                             " bootstrap replicates failed to fit");
    }
    if (r.dropped > 0) r.warnings.push_back(std::to_string(r.dropped) + " bootstrap replicates dropped");
    r.vcov_gamma = sample_covariance(g);
    r.vcov_beta = sample_covariance(b);
    r.se_gamma = se_from(r.vcov_gamma);
    r.se_beta = se_from(r.vcov_beta);
    if (with_sigma) {
        r.vcov_sigma2 = Eigen::Matrix2d(sample_covariance(s2));
        r.se_sigma = Eigen::Vector2d(se_from(sample_covariance(s)));
    }
    return r;
}

} // namespace detail

// Pigeonhole bootstrap around an ARC point estimate. GammaOnly refits the
// weighted marginal probit and rescales by the point estimate's
// (1 + sigma2_a + sigma2_b)^{1/2}; FullArc refits all three stages.
inline VcovResult pigeonhole_bootstrap(const SparseBinaryDataset& d, const ArcFit& point,
                                       const BootstrapOptions& opts = {}) {
    if (opts.replicates < 2) throw DomainError("pigeonhole_bootstrap: need at least 2 replicates");
    std::vector<detail::Replicate> reps(opts.replicates);
    const double factor = std::sqrt(1.0 + point.natural.sigma2_a + point.natural.sigma2_b);
    parallel_jobs(opts.replicates, opts.threads, [&](std::size_t b) {
        const auto w = pigeonhole_weights(d, opts.seed, b, opts.force_unit_weights);
        auto& rep = reps[b];
        try {
            if (opts.mode == RefitMode::GammaOnly) {
                const auto cw = w.cell_weights(d);
                ProbitOptions po = opts.arc.probit;
                po.threads = 1;
                po.allow_separation = false;
                po.start = point.marginal.gamma;
                const auto mf = fit_marginal_probit(d, po, cw);
                rep.gamma = mf.gamma;
                rep.beta = mf.gamma * factor;
                rep.sigma2_a = point.natural.sigma2_a;
                rep.sigma2_b = point.natural.sigma2_b;
            } else {
                ArcOptions ao = opts.arc;
                ao.threads = 1;
                ao.nodes_row = point.nodes_row;
                ao.nodes_col = point.nodes_col;
                const auto f = fit_arc(d, ao, &w);
                rep.gamma = f.working.gamma;
                rep.beta = f.natural.beta;
                rep.sigma2_a = f.natural.sigma2_a;
                rep.sigma2_b = f.natural.sigma2_b;
            }
            rep.ok = rep.gamma.allFinite();
        } catch (const Error&) {
            rep.ok = false;
        }
    });
    return detail::summarize_replicates(reps, VcovMethod::Pigeonhole, opts.max_drop_fraction,
                                        opts.mode == RefitMode::FullArc);
}

// Parametric bootstrap: new responses from the fitted model on the observed
// design, then a full ARC refit per replicate.
inline VcovResult parametric_bootstrap(const SparseBinaryDataset& d, const NaturalParams& theta_hat,
                                       const BootstrapOptions& opts = {}) {
    if (opts.replicates < 2) throw DomainError("parametric_bootstrap: need at least 2 replicates");
    std::vector<detail::Replicate> reps(opts.replicates);
    parallel_jobs(opts.replicates, opts.threads, [&](std::size_t b) {
        auto& rep = reps[b];
        try {
            const auto rd = resimulate_responses(d, theta_hat.beta, theta_hat.sigma2_a, theta_hat.sigma2_b,
                                                 rng::key(opts.seed, rng::kSeedDerive, b));
            ArcOptions ao = opts.arc;
            ao.threads = 1;
            const auto f = fit_arc(rd, ao);
            rep.gamma = f.working.gamma;
            rep.beta = f.natural.beta;
            rep.sigma2_a = f.natural.sigma2_a;
            rep.sigma2_b = f.natural.sigma2_b;
            rep.ok = rep.beta.allFinite();
        } catch (const Error&) {
            rep.ok = false;
        }
    });
    return detail::summarize_replicates(reps, VcovMethod::Parametric, opts.max_drop_fraction, true);
}

} // namespace arcprobit
