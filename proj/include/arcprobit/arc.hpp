#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "probit_glm.hpp"
#include "quadrature.hpp"

namespace arcprobit {

// psi = (gamma, tau2_a, tau2_b)
struct WorkingParams {
    Eigen::VectorXd gamma;
    double tau2_a = 0.0;
    double tau2_b = 0.0;
};

// theta = (beta, sigma2_a, sigma2_b)
struct NaturalParams {
    Eigen::VectorXd beta;
    double sigma2_a = 0.0;
    double sigma2_b = 0.0;
};

inline WorkingParams reparam(const NaturalParams& theta) {
    if (theta.sigma2_a < 0.0 || theta.sigma2_b < 0.0) throw DomainError("reparam: negative variance");
    WorkingParams psi;
    psi.gamma = theta.beta / std::sqrt(1.0 + theta.sigma2_a + theta.sigma2_b);
    psi.tau2_a = theta.sigma2_a / (1.0 + theta.sigma2_b);
    psi.tau2_b = theta.sigma2_b / (1.0 + theta.sigma2_a);
    return psi;
}

struct BackTransformed {
    NaturalParams natural;
    bool fallback = false;  // tau2_a * tau2_b >= 1: variances set to zero
};

inline BackTransformed back_transform(const WorkingParams& psi) {
    BackTransformed out;
    const double prod = psi.tau2_a * psi.tau2_b;
    if (prod >= 1.0) {
        out.fallback = true;
        out.natural.beta = psi.gamma;
        return out;
    }
    const double denom = 1.0 - prod;
    out.natural.sigma2_a = psi.tau2_a * (1.0 + psi.tau2_b) / denom;
    out.natural.sigma2_b = psi.tau2_b * (1.0 + psi.tau2_a) / denom;
    out.natural.beta = psi.gamma * std::sqrt(1.0 + out.natural.sigma2_a + out.natural.sigma2_b);
    return out;
}

enum class Side { Row, Col };

// Replicate weights of a pigeonhole bootstrap draw: a cell (i, j) counts
// row_mult[i] * col_mult[j] times.
struct ReplicateWeights {
    std::vector<double> row_mult;
    std::vector<double> col_mult;

    std::vector<double> cell_weights(const SparseBinaryDataset& d) const {
        std::vector<double> w(d.n_obs());
        for (std::size_t c = 0; c < d.n_obs(); ++c) w[c] = row_mult[d.row[c]] * col_mult[d.col[c]];
        return w;
    }
};

// Row-wise (or column-wise) likelihood of tau2 with gamma fixed at
// gamma_hat. Holds per-cluster warm-start modes between calls, so one
// instance must not be evaluated from two threads at once.
class ProfileLikelihood {
public:
    ProfileLikelihood(const SparseBinaryDataset& d, Side side, const Eigen::VectorXd& gamma_hat,
                      const ReplicateWeights* weights = nullptr)
        : view_(side == Side::Row ? &d.row_view : &d.col_view) {
        const Eigen::VectorXd eta = d.x * gamma_hat;
        const std::size_t n = view_->cells.size();
        eta_.resize(n);
        sign_.resize(n);
        if (weights) weight_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t c = view_->cells[k];
            eta_[k] = eta[static_cast<Eigen::Index>(c)];
            sign_[k] = d.y[c] ? 1.0 : -1.0;
            if (weights) weight_[k] = side == Side::Row ? weights->col_mult[d.col[c]] : weights->row_mult[d.row[c]];
        }
        const std::size_t g = view_->n_groups();
        cluster_weight_.assign(g, 1.0);
        if (weights) {
            const auto& mult = side == Side::Row ? weights->row_mult : weights->col_mult;
            for (std::size_t i = 0; i < g; ++i) cluster_weight_[i] = mult[i];
        }
        warm_.assign(g, 0.0);
        constant_.assign(g, 0.0);
        varying_.assign(g, 0);
        for (std::size_t i = 0; i < g; ++i) {
            if (cluster_weight_[i] == 0.0) continue;
            const std::size_t b = view_->offsets[i], e = view_->offsets[i + 1];
            double total_w = 0.0;
            for (std::size_t k = b; k < e; ++k) total_w += weight_.empty() ? 1.0 : weight_[k];
            if (total_w == 0.0) continue;
            // One unit-weight observation: Pr(Y = 1) does not involve tau2.
            if (e - b == 1 && total_w == 1.0) {
                constant_[i] = log_std_normal_cdf(sign_[b] * eta_[b]);
            } else {
                varying_[i] = 1;
                ++informative_;
            }
        }
    }

    // Clusters whose contribution depends on tau2.
    std::size_t informative_clusters() const noexcept { return informative_; }
    std::size_t center_fallbacks() const noexcept { return fallbacks_; }

    double operator()(double tau2, const GaussHermiteRule& rule, unsigned threads = 1) {
        if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw DomainError("profile likelihood: tau2 must be >= 0");
        const std::size_t g = view_->n_groups();
        std::vector<double> contrib(g, 0.0);
        std::vector<unsigned char> fell_back(g, 0);
        const double scale = std::sqrt(1.0 + tau2);
        parallel_for_blocks(g, threads, [&](std::size_t g0, std::size_t g1) {
            for (std::size_t i = g0; i < g1; ++i) {
                if (cluster_weight_[i] == 0.0) continue;
                if (!varying_[i]) {
                    contrib[i] = cluster_weight_[i] * constant_[i];
                    continue;
                }
                const std::size_t b = view_->offsets[i], len = view_->offsets[i + 1] - b;
                ProbitCluster cl{std::span<const double>(eta_.data() + b, len),
                                 std::span<const double>(sign_.data() + b, len),
                                 weight_.empty() ? std::span<const double>{}
                                                 : std::span<const double>(weight_.data() + b, len),
                                 scale};
                double v;
                if (tau2 == 0.0) {
                    v = cl.value(0.0);
                } else {
                    const AdaptiveCenter center = adapt_center(cl, tau2, warm_[i]);
                    if (center.fallback) fell_back[i] = 1;
                    else warm_[i] = center.mode;
                    v = integrate_cluster(cl, tau2, rule, center, i);
                }
                contrib[i] = cluster_weight_[i] * v;
            }
        });
        for (auto f : fell_back) fallbacks_ += f;
        // Canonical order: the total is exactly invariant to relabeling clusters.
        std::sort(contrib.begin(), contrib.end());
        return kahan_total(contrib);
    }

private:
    const GroupedView* view_;
    std::vector<double> eta_;
    std::vector<double> sign_;
    std::vector<double> weight_;
    std::vector<double> cluster_weight_;
    std::vector<double> warm_;
    std::vector<double> constant_;
    std::vector<unsigned char> varying_;
    std::size_t informative_ = 0;
    std::size_t fallbacks_ = 0;
};

inline double row_profile_loglik(double tau2_a, const SparseBinaryDataset& d, const Eigen::VectorXd& gamma_hat,
                                 std::size_t nodes = 0, unsigned threads = 1) {
    ProfileLikelihood prof(d, Side::Row, gamma_hat);
    const auto rule = gauss_hermite(nodes ? nodes : node_count(std::max<std::size_t>(1, d.n_rows)));
    return prof(tau2_a, rule, threads);
}

inline double col_profile_loglik(double tau2_b, const SparseBinaryDataset& d, const Eigen::VectorXd& gamma_hat,
                                 std::size_t nodes = 0, unsigned threads = 1) {
    ProfileLikelihood prof(d, Side::Col, gamma_hat);
    const auto rule = gauss_hermite(nodes ? nodes : node_count(std::max<std::size_t>(1, d.n_cols)));
    return prof(tau2_b, rule, threads);
}

struct ArcOptions {
    ProbitOptions probit;
    BrentOptions brent;
    double tau2_upper = 100.0;
    std::size_t nodes_row = 0;  // 0: node_count(R)
    std::size_t nodes_col = 0;  // 0: node_count(C)
    unsigned threads = 1;
};

struct StageTimings {
    double marginal = 0.0;
    double row = 0.0;
    double col = 0.0;
    double total = 0.0;
};

struct ArcFit {
    WorkingParams working;
    NaturalParams natural;
    MarginalFit marginal;
    double row_loglik_at_opt = 0.0;
    double col_loglik_at_opt = 0.0;
    bool fallback_applied = false;
    StageTimings timings;
    std::size_t nodes_row = 0;
    std::size_t nodes_col = 0;
    int row_evaluations = 0;
    int col_evaluations = 0;
    std::vector<std::string> warnings;
};

namespace detail {

struct SideFit {
    double tau2 = 0.0;
    double loglik = 0.0;
    int evaluations = 0;
};

inline SideFit fit_side(const SparseBinaryDataset& d, Side side, const Eigen::VectorXd& gamma_hat,
                        const ArcOptions& opts, std::size_t nodes, const ReplicateWeights* weights,
                        std::vector<std::string>& warnings) {
    ProfileLikelihood prof(d, side, gamma_hat, weights);
    const auto rule = gauss_hermite(nodes);
    const char* label = side == Side::Row ? "row" : "column";
    SideFit out;
    if (prof.informative_clusters() == 0) {
        warnings.push_back(std::string("no ") + label + " has two or more observations; its variance is set to 0");
        out.loglik = prof(0.0, rule, opts.threads);
        return out;
    }
    const auto opt = brent_maximize([&](double t) { return prof(t, rule, opts.threads); }, 0.0, opts.tau2_upper,
                                    opts.brent);
    if (!opt.converged) warnings.push_back(std::string(label) + " variance search hit the iteration cap");
    if (prof.center_fallbacks() > 0) {
        warnings.push_back(std::to_string(prof.center_fallbacks()) + " " + label +
                           " mode searches fell back to the prior center");
    }
    out.tau2 = opt.argmax;
    out.loglik = opt.max;
    out.evaluations = opt.evaluations;
    return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// All-row-column fit: marginal probit for gamma, then one bounded scalar
// search per side for tau2, then the inverse reparameterization.
inline ArcFit fit_arc(const SparseBinaryDataset& d, const ArcOptions& opts = {},
                      const ReplicateWeights* weights = nullptr) {
    using clock = std::chrono::steady_clock;
    ArcFit fit;
    const auto t_start = clock::now();

    std::vector<double> cell_w;
    if (weights) cell_w = weights->cell_weights(d);
    ProbitOptions popts = opts.probit;
    popts.threads = opts.threads;
    fit.marginal = fit_marginal_probit(d, popts, cell_w);
    fit.warnings = fit.marginal.warnings;
    fit.timings.marginal = detail::seconds_since(t_start);

    fit.nodes_row = opts.nodes_row ? opts.nodes_row : node_count(std::max<std::size_t>(1, d.n_rows));
    fit.nodes_col = opts.nodes_col ? opts.nodes_col : node_count(std::max<std::size_t>(1, d.n_cols));

    auto t0 = clock::now();
    const auto row = detail::fit_side(d, Side::Row, fit.marginal.gamma, opts, fit.nodes_row, weights, fit.warnings);
    fit.timings.row = detail::seconds_since(t0);
    t0 = clock::now();
    const auto col = detail::fit_side(d, Side::Col, fit.marginal.gamma, opts, fit.nodes_col, weights, fit.warnings);
    fit.timings.col = detail::seconds_since(t0);

    fit.working.gamma = fit.marginal.gamma;
    fit.working.tau2_a = row.tau2;
    fit.working.tau2_b = col.tau2;
    fit.row_loglik_at_opt = row.loglik;
    fit.col_loglik_at_opt = col.loglik;
    fit.row_evaluations = row.evaluations;
    fit.col_evaluations = col.evaluations;
    const auto bt = back_transform(fit.working);
    fit.natural = bt.natural;
    fit.fallback_applied = bt.fallback;
    if (bt.fallback) fit.warnings.push_back("tau2_a * tau2_b >= 1; variance components set to 0");
    fit.timings.total = detail::seconds_since(t_start);
    return fit;
}

} // namespace arcprobit
