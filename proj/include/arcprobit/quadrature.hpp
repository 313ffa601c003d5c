#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "errors.hpp"
#include "numerics.hpp"

namespace arcprobit {

// Gauss-Hermite rule for the weight exp(-x^2) (physicists' convention).
struct GaussHermiteRule {
    std::vector<double> nodes;    // ascending
    std::vector<double> weights;  // positive
    std::vector<double> log_weight_plus_sq;  // log w_k + x_k^2

    std::size_t size() const noexcept { return nodes.size(); }
};

inline constexpr std::size_t kMinNodes = 7;
inline constexpr std::size_t kMaxNodes = 200;

// max(ceil(1.5 * log2(n_clusters) - 2), 7)
inline std::size_t node_count(std::size_t n_clusters) {
    if (n_clusters < 1) throw DomainError("node_count: need at least one cluster");
    const double k = std::ceil(1.5 * std::log2(static_cast<double>(n_clusters)) - 2.0);
    return std::max<std::size_t>(kMinNodes, static_cast<std::size_t>(std::max(0.0, k)));
}

// Golub-Welsch eigen-decomposition of the Jacobi matrix, then a Newton
// polish of each node on the orthonormal recurrence. The polish gives the
// tiny outer weights full relative accuracy.
inline GaussHermiteRule gauss_hermite(std::size_t k) {
    if (k < 1 || k > kMaxNodes) {
        throw DomainError("gauss_hermite: node count must lie in [1, " + std::to_string(kMaxNodes) + "]");
    }
    GaussHermiteRule rule;
    rule.nodes.resize(k);
    rule.weights.resize(k);
    if (k == 1) {
        rule.nodes[0] = 0.0;
        rule.weights[0] = std::sqrt(std::numbers::pi);
    } else {
        Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
        Eigen::VectorXd sub(static_cast<Eigen::Index>(k - 1));
        for (std::size_t n = 1; n < k; ++n) sub[static_cast<Eigen::Index>(n - 1)] = std::sqrt(0.5 * static_cast<double>(n));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        if (es.info() != Eigen::Success) throw DomainError("gauss_hermite: eigen-decomposition failed");
        const double pi_m14 = std::pow(std::numbers::pi, -0.25);
        for (std::size_t i = 0; i < k; ++i) {
            double x = es.eigenvalues()[static_cast<Eigen::Index>(i)];
            double deriv = 0.0;
            for (int it = 0; it < 10; ++it) {
                double p1 = pi_m14, p2 = 0.0;
                for (std::size_t n = 1; n <= k; ++n) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = x * std::sqrt(2.0 / n) * p2 - std::sqrt((n - 1.0) / n) * p3;
                }
                deriv = std::sqrt(2.0 * k) * p2;
                const double dx = p1 / deriv;
                x -= dx;
                if (std::fabs(dx) <= 1e-15 * std::max(1.0, std::fabs(x))) break;
            }
            // Recompute the derivative at the polished node.
            double p1 = pi_m14, p2 = 0.0;
            for (std::size_t n = 1; n <= k; ++n) {
                const double p3 = p2;
                p2 = p1;
                p1 = x * std::sqrt(2.0 / n) * p2 - std::sqrt((n - 1.0) / n) * p3;
            }
            deriv = std::sqrt(2.0 * k) * p2;
            rule.nodes[i] = x;
            rule.weights[i] = 2.0 / (deriv * deriv);
        }
        // Exact symmetry about zero.
        for (std::size_t i = 0; i < k / 2; ++i) {
            const std::size_t j = k - 1 - i;
            const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
            const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
            rule.nodes[i] = -x;
            rule.nodes[j] = x;
            rule.weights[i] = rule.weights[j] = w;
        }
        if (k % 2 == 1) rule.nodes[k / 2] = 0.0;
    }
    rule.log_weight_plus_sq.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        rule.log_weight_plus_sq[i] = std::log(rule.weights[i]) + rule.nodes[i] * rule.nodes[i];
    }
    return rule;
}

// Value, first and second derivative of a cluster's conditional
// log-likelihood at a random-effect value u.
struct LogLikDerivs {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

template <class F>
concept ClusterLogLik = requires(const F& f, double u) {
    { f.value(u) } -> std::convertible_to<double>;
    { f.derivatives(u) } -> std::convertible_to<LogLikDerivs>;
    { f.empty() } -> std::convertible_to<bool>;
};

// Probit cluster: sum_c w_c log Phi(s_c (scale * eta_c + u)).
struct ProbitCluster {
    std::span<const double> eta;
    std::span<const double> sign;    // +1 for y = 1, -1 for y = 0
    std::span<const double> weight;  // empty: unit weights
    double scale = 1.0;

    bool empty() const noexcept { return eta.empty(); }

    double value(double u) const {
        KahanSum s;
        for (std::size_t c = 0; c < eta.size(); ++c) {
            const double z = sign[c] * (scale * eta[c] + u);
            const double w = weight.empty() ? 1.0 : weight[c];
            s.add(w * log_std_normal_cdf(z));
        }
        return s.value();
    }

    LogLikDerivs derivatives(double u) const {
        LogLikDerivs out;
        for (std::size_t c = 0; c < eta.size(); ++c) {
            const double z = sign[c] * (scale * eta[c] + u);
            const double w = weight.empty() ? 1.0 : weight[c];
            const double m = mills(z);
            out.value += w * log_std_normal_cdf(z);
            out.d1 += w * sign[c] * m;
            out.d2 -= w * m * (z + m);
        }
        return out;
    }
};

// Adapter for arbitrary callables; used by tests and oracles.
template <class V, class D>
struct FunctionCluster {
    V value_fn;
    D derivs_fn;  // double -> LogLikDerivs
    bool is_empty = false;

    bool empty() const { return is_empty; }
    double value(double u) const { return value_fn(u); }
    LogLikDerivs derivatives(double u) const { return derivs_fn(u); }
};

template <class V, class D>
FunctionCluster<V, D> make_function_cluster(V v, D d) {
    return {std::move(v), std::move(d), false};
}

struct AdaptiveCenter {
    double mode = 0.0;
    double curvature = 1.0;  // -g''(mode) > 0
    int iterations = 0;
    bool fallback = false;   // Newton failed; prior-only center used
};

struct CenterOptions {
    int max_iter = 50;
    double tol = 1e-10;
};

// Mode and curvature of g(u) = loglik(u) - u^2 / (2 tau2) by safeguarded
// Newton, falling back to bisection when a step leaves the sign bracket
// of g'.
template <ClusterLogLik F>
AdaptiveCenter adapt_center(const F& f, double tau2, double start = 0.0, CenterOptions opts = {}) {
    if (!(tau2 > 0.0)) throw DomainError("adapt_center: tau2 must be positive");
    AdaptiveCenter out;
    const double prior_prec = 1.0 / tau2;
    if (f.empty()) {
        out.curvature = prior_prec;
        return out;
    }
    const double inf = std::numeric_limits<double>::infinity();
    double lo = -inf, hi = inf;
    double u = std::isfinite(start) ? start : 0.0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        const LogLikDerivs dv = f.derivatives(u);
        const double g1 = dv.d1 - u * prior_prec;
        const double g2 = dv.d2 - prior_prec;
        if (g1 > 0.0) lo = u; else hi = u;
        double next = u - g1 / g2;
        if (!(next > lo && next < hi)) {
            if (std::isfinite(lo) && std::isfinite(hi)) {
                next = 0.5 * (lo + hi);
            } else {
                const double span = std::max(1.0, 4.0 * std::sqrt(tau2));
                next = std::isfinite(lo) ? lo + span : hi - span;
            }
        }
        const double step = next - u;
        u = next;
        if (std::fabs(step) <= opts.tol * (1.0 + std::fabs(u)) || (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= opts.tol)) {
            out.mode = u;
            out.curvature = prior_prec - f.derivatives(u).d2;
            out.iterations = it;
            return out;
        }
    }
    out.mode = 0.0;
    out.curvature = prior_prec;
    out.iterations = opts.max_iter;
    out.fallback = true;
    return out;
}

// log of  int exp(loglik(u)) phi(u / tau) / tau du  by adaptive
// Gauss-Hermite quadrature around `center`.
template <ClusterLogLik F>
double integrate_cluster(const F& f, double tau2, const GaussHermiteRule& rule, const AdaptiveCenter& center,
                         std::size_t cluster_id = 0) {
    if (f.empty()) return 0.0;
    if (tau2 == 0.0) return f.value(0.0);
    if (!(tau2 > 0.0)) throw DomainError("integrate_cluster: tau2 must be non-negative");
    const double half_log_scale = 0.5 * std::log(2.0 / center.curvature);
    const double scale = std::exp(half_log_scale);
    const double log_tau = 0.5 * std::log(tau2);
    constexpr std::size_t kStack = 64;
    double stack_terms[kStack];
    std::vector<double> heap_terms;
    double* terms = stack_terms;
    if (rule.size() > kStack) {
        heap_terms.resize(rule.size());
        terms = heap_terms.data();
    }
    for (std::size_t k = 0; k < rule.size(); ++k) {
        const double u = center.mode + scale * rule.nodes[k];
        terms[k] = rule.log_weight_plus_sq[k] + f.value(u) - 0.5 * u * u / tau2 - kLogSqrt2Pi - log_tau;
    }
    const double lse = log_sum_exp(std::span<const double>(terms, rule.size()));
    if (!std::isfinite(lse)) {
        throw UnderflowError("cluster " + std::to_string(cluster_id) + ": every quadrature contribution underflowed",
                             cluster_id);
    }
    return lse + half_log_scale;
}

} // namespace arcprobit
