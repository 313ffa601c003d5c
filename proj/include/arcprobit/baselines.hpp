#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arc.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "probit_glm.hpp"
#include "quadrature.hpp"

namespace arcprobit::baselines {

// Infeasible benchmark: marginal probit rescaled with the true variances.
inline NaturalParams oracle_estimate(const SparseBinaryDataset& d, double true_sigma2_a, double true_sigma2_b,
                                     const ProbitOptions& opts = {}) {
    const auto mf = fit_marginal_probit(d, opts);
    NaturalParams out;
    out.beta = mf.gamma * std::sqrt(1.0 + true_sigma2_a + true_sigma2_b);
    out.sigma2_a = true_sigma2_a;
    out.sigma2_b = true_sigma2_b;
    return out;
}

inline double log_det_spd(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw DomainError("log_det_spd: matrix is not positive definite");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline constexpr std::size_t kBruteForceMaxSide = 4;

// ---------------------------------------------------------------------------
// Full likelihood by tensor-product Gauss-Hermite over all R + C effects.

namespace detail {

// Joint mode of sum log Phi(s (eta + a_i + b_j)) - |a|^2/(2 s2a) - |b|^2/(2 s2b)
// and the diagonal of the negative Hessian there. Dense Newton; tiny sizes only.
inline void joint_mode_dense(const SparseBinaryDataset& d, const Eigen::VectorXd& eta, double s2a, double s2b,
                             Eigen::VectorXd& mode, Eigen::VectorXd& neg_hess_diag) {
    const auto R = static_cast<Eigen::Index>(d.n_rows), C = static_cast<Eigen::Index>(d.n_cols);
    const Eigen::Index m = R + C;
    mode = Eigen::VectorXd::Zero(m);
    const bool use_a = s2a > 0.0, use_b = s2b > 0.0;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
        for (std::size_t c = 0; c < d.n_obs(); ++c) {
            const Eigen::Index i = d.row[c], j = R + d.col[c];
            const double s = d.y[c] ? 1.0 : -1.0;
            const double z = s * (eta[static_cast<Eigen::Index>(c)] + mode[i] + mode[j]);
            const double mm = mills(z), w = mm * (z + mm);
            g[i] += s * mm;
            g[j] += s * mm;
            h(i, i) += w;
            h(j, j) += w;
            h(i, j) += w;
            h(j, i) += w;
        }
        for (Eigen::Index i = 0; i < R; ++i) {
            if (use_a) {
                g[i] -= mode[i] / s2a;
                h(i, i) += 1.0 / s2a;
            }
        }
        for (Eigen::Index j = R; j < m; ++j) {
            if (use_b) {
                g[j] -= mode[j] / s2b;
                h(j, j) += 1.0 / s2b;
            }
        }
        // Dimensions with zero variance stay pinned at 0.
        for (Eigen::Index k = 0; k < m; ++k) {
            const bool active = k < R ? use_a : use_b;
            if (!active) {
                g[k] = 0.0;
                h.row(k).setZero();
                h.col(k).setZero();
                h(k, k) = 1.0;
            }
        }
        neg_hess_diag = h.diagonal();
        const Eigen::VectorXd step = h.ldlt().solve(g);
        mode += step;
        if (step.cwiseAbs().maxCoeff() < 1e-12) break;
    }
}

} // namespace detail

// log of the full crossed-effects likelihood at theta, for R, C <= 4.
// Per-dimension adaptive centering keeps the product rule separable: the
// sum over column nodes is explicit and, given the column nodes, each row
// integral factorizes. This equals the full (R+C)-dimensional tensor sum.
inline double full_loglik_bruteforce(const NaturalParams& theta, const SparseBinaryDataset& d,
                                     std::size_t nodes = 40) {
    if (d.n_rows > kBruteForceMaxSide || d.n_cols > kBruteForceMaxSide) {
        throw GuardError("full_loglik_bruteforce: needs R <= 4 and C <= 4", kBruteForceMaxSide);
    }
    const Eigen::VectorXd eta = d.x * theta.beta;
    const double s2a = theta.sigma2_a, s2b = theta.sigma2_b;
    if (s2a == 0.0 && s2b == 0.0) {
        KahanSum s;
        for (std::size_t c = 0; c < d.n_obs(); ++c) {
            s.add(log_std_normal_cdf((d.y[c] ? 1.0 : -1.0) * eta[static_cast<Eigen::Index>(c)]));
        }
        return s.value();
    }
    const auto R = d.n_rows, C = d.n_cols;
    Eigen::VectorXd mode, hdiag;
    detail::joint_mode_dense(d, eta, s2a, s2b, mode, hdiag);
    const auto rule = gauss_hermite(nodes);
    const std::size_t K = rule.size();

    auto axis = [&](std::size_t k, bool active, double var) {
        std::vector<double> pts(active ? K : 1), logw(active ? K : 1);
        if (!active) {
            pts[0] = 0.0;
            logw[0] = 0.0;
            return std::pair{pts, logw};
        }
        const double scale = std::sqrt(2.0 / hdiag[static_cast<Eigen::Index>(k)]);
        for (std::size_t q = 0; q < K; ++q) {
            pts[q] = mode[static_cast<Eigen::Index>(k)] + scale * rule.nodes[q];
            // node weight, e^{x^2} correction, Jacobian and the N(0, var) density
            logw[q] = rule.log_weight_plus_sq[q] + std::log(scale) - 0.5 * pts[q] * pts[q] / var -
                      kLogSqrt2Pi - 0.5 * std::log(var);
        }
        return std::pair{pts, logw};
    };
    std::vector<std::vector<double>> a_pts(R), a_logw(R), b_pts(C), b_logw(C);
    for (std::size_t i = 0; i < R; ++i) std::tie(a_pts[i], a_logw[i]) = axis(i, s2a > 0.0, s2a);
    for (std::size_t j = 0; j < C; ++j) std::tie(b_pts[j], b_logw[j]) = axis(R + j, s2b > 0.0, s2b);

    std::size_t combos = 1;
    for (std::size_t j = 0; j < C; ++j) combos *= b_pts[j].size();
    std::vector<double> outer(combos);
    std::vector<std::size_t> idx(C, 0);
    std::vector<double> inner_terms;
    for (std::size_t t = 0; t < combos; ++t) {
        double total = 0.0;
        for (std::size_t j = 0; j < C; ++j) total += b_logw[j][idx[j]];
        for (std::size_t i = 0; i < R; ++i) {
            const auto cells = d.row_view.group(i);
            inner_terms.assign(a_pts[i].size(), 0.0);
            for (std::size_t q = 0; q < a_pts[i].size(); ++q) {
                double v = a_logw[i][q];
                for (std::size_t c : cells) {
                    const double s = d.y[c] ? 1.0 : -1.0;
                    v += log_std_normal_cdf(s * (eta[static_cast<Eigen::Index>(c)] + a_pts[i][q] + b_pts[d.col[c]][idx[d.col[c]]]));
                }
                inner_terms[q] = v;
            }
            total += log_sum_exp(inner_terms);
        }
        outer[t] = total;
        for (std::size_t j = 0; j < C; ++j) {
            if (++idx[j] < b_pts[j].size()) break;
            idx[j] = 0;
        }
    }
    return log_sum_exp(outer);
}

// ---------------------------------------------------------------------------
// First-order Laplace approximation.

inline constexpr std::size_t kLaplaceMaxClusters = 2000;

struct LaplaceOptions {
    std::size_t max_clusters = kLaplaceMaxClusters;  // R + C guard
    bool fix_sigma_zero = false;
    int max_outer_iter = 200;
    double fd_step = 1e-5;
    double grad_tol = 1e-5;
    double inner_tol = 1e-8;
    int max_inner_iter = 100;
    double min_log_sigma = -7.0;
    double max_log_sigma = 3.0;
    // Optional starting point; empty beta selects the probit-based start.
    NaturalParams start;
};

struct LaplaceFit {
    NaturalParams theta_hat;
    Eigen::VectorXd mode_a;
    Eigen::VectorXd mode_b;
    double log_laplace = 0.0;
    int n_outer_iter = 0;
    bool converged = false;
    double seconds = 0.0;
};

// Laplace objective h(mode) - 1/2 log det H - R log sigma_a - C log sigma_b,
// with H the negative joint Hessian of
// h(a, b) = sum log Phi(s (eta + a_i + b_j)) - |a|^2/(2 sa^2) - |b|^2/(2 sb^2).
// The inner Newton solve eliminates the larger (diagonal) block and
// factors the dense Schur complement of the smaller one.
class LaplaceObjective {
public:
    LaplaceObjective(const SparseBinaryDataset& d, LaplaceOptions opts = {}) : d_(&d), opts_(std::move(opts)) {
        if (d.n_rows + d.n_cols > opts_.max_clusters) {
            throw GuardError("Laplace baseline: R + C = " + std::to_string(d.n_rows + d.n_cols) + " exceeds the dense guard " +
                                 std::to_string(opts_.max_clusters) +
                                 "; its cost is superlinear at scale, use the ARC estimator instead",
                             opts_.max_clusters);
        }
        eliminate_rows_ = d.n_rows >= d.n_cols;
        a_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_rows));
        b_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_cols));
    }

    // log Laplace likelihood at (beta, sigma_a, sigma_b); updates the
    // cached inner mode (warm start for the next call).
    double operator()(const Eigen::VectorXd& beta, double sigma_a, double sigma_b) {
        const Eigen::VectorXd eta = d_->x * beta;
        const double pa = 1.0 / (sigma_a * sigma_a), pb = 1.0 / (sigma_b * sigma_b);
        double logdet = 0.0;
        double h = inner_mode(eta, pa, pb, logdet);
        return h - 0.5 * logdet - static_cast<double>(d_->n_rows) * std::log(sigma_a) -
               static_cast<double>(d_->n_cols) * std::log(sigma_b);
    }

    const Eigen::VectorXd& mode_a() const { return a_; }
    const Eigen::VectorXd& mode_b() const { return b_; }
    void reset_mode() {
        a_.setZero();
        b_.setZero();
    }

private:
    double joint(const Eigen::VectorXd& eta, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double pa,
                 double pb) const {
        KahanSum s;
        for (std::size_t c = 0; c < d_->n_obs(); ++c) {
            const double sg = d_->y[c] ? 1.0 : -1.0;
            s.add(log_std_normal_cdf(sg * (eta[static_cast<Eigen::Index>(c)] + a[d_->row[c]] + b[d_->col[c]])));
        }
        return s.value() - 0.5 * pa * a.squaredNorm() - 0.5 * pb * b.squaredNorm();
    }

    double inner_mode(const Eigen::VectorXd& eta, double pa, double pb, double& logdet) {
        const auto& d = *d_;
        const GroupedView& ev = eliminate_rows_ ? d.row_view : d.col_view;
        const std::size_t ne = eliminate_rows_ ? d.n_rows : d.n_cols;
        const std::size_t nk = eliminate_rows_ ? d.n_cols : d.n_rows;
        const double pe = eliminate_rows_ ? pa : pb, pk = eliminate_rows_ ? pb : pa;
        Eigen::VectorXd& ue = eliminate_rows_ ? a_ : b_;
        Eigen::VectorXd& uk = eliminate_rows_ ? b_ : a_;
        auto kept_of = [&](std::size_t c) -> std::size_t { return eliminate_rows_ ? d.col[c] : d.row[c]; };

        std::vector<double> wcell(d.n_obs()), gcell(d.n_obs());
        Eigen::VectorXd de(static_cast<Eigen::Index>(ne)), ge(static_cast<Eigen::Index>(ne));
        Eigen::VectorXd gk(static_cast<Eigen::Index>(nk));
        Eigen::MatrixXd schur(static_cast<Eigen::Index>(nk), static_cast<Eigen::Index>(nk));
        double h = joint(eta, a_, b_, pa, pb);

        for (int it = 0; it <= opts_.max_inner_iter; ++it) {
            for (std::size_t c = 0; c < d.n_obs(); ++c) {
                const double sg = d.y[c] ? 1.0 : -1.0;
                const double z = sg * (eta[static_cast<Eigen::Index>(c)] + a_[d.row[c]] + b_[d.col[c]]);
                const double m = mills(z);
                gcell[c] = sg * m;
                wcell[c] = m * (z + m);
            }
            ge = -pe * ue;
            de.setConstant(pe);
            gk = -pk * uk;
            schur.setZero();
            schur.diagonal().setConstant(pk);
            for (std::size_t e = 0; e < ne; ++e) {
                for (std::size_t c : ev.group(e)) {
                    ge[static_cast<Eigen::Index>(e)] += gcell[c];
                    de[static_cast<Eigen::Index>(e)] += wcell[c];
                    gk[static_cast<Eigen::Index>(kept_of(c))] += gcell[c];
                    schur(static_cast<Eigen::Index>(kept_of(c)), static_cast<Eigen::Index>(kept_of(c))) += wcell[c];
                }
            }
            // S = D_k - W' D_e^{-1} W, built row by row of the eliminated side.
            for (std::size_t e = 0; e < ne; ++e) {
                const auto cells = ev.group(e);
                const double inv = 1.0 / de[static_cast<Eigen::Index>(e)];
                for (std::size_t c1 : cells) {
                    const double w1 = wcell[c1] * inv;
                    const auto k1 = static_cast<Eigen::Index>(kept_of(c1));
                    for (std::size_t c2 : cells) schur(k1, static_cast<Eigen::Index>(kept_of(c2))) -= w1 * wcell[c2];
                }
            }
            Eigen::VectorXd rhs = gk;
            for (std::size_t e = 0; e < ne; ++e) {
                const double r = ge[static_cast<Eigen::Index>(e)] / de[static_cast<Eigen::Index>(e)];
                for (std::size_t c : ev.group(e)) rhs[static_cast<Eigen::Index>(kept_of(c))] -= wcell[c] * r;
            }
            Eigen::LLT<Eigen::MatrixXd> llt(schur);
            if (llt.info() != Eigen::Success) throw ConvergenceError("Laplace inner Hessian is not positive definite");
            logdet = de.array().log().sum() + 2.0 * llt.matrixLLT().diagonal().array().log().sum();

            const double gnorm = std::max(ge.cwiseAbs().maxCoeff(), gk.size() ? gk.cwiseAbs().maxCoeff() : 0.0);
            if (gnorm < opts_.inner_tol) return h;
            if (it == opts_.max_inner_iter) break;

            const Eigen::VectorXd dk = llt.solve(rhs);
            Eigen::VectorXd dE = ge;
            for (std::size_t e = 0; e < ne; ++e) {
                double v = ge[static_cast<Eigen::Index>(e)];
                for (std::size_t c : ev.group(e)) v -= wcell[c] * dk[static_cast<Eigen::Index>(kept_of(c))];
                dE[static_cast<Eigen::Index>(e)] = v / de[static_cast<Eigen::Index>(e)];
            }
            double t = 1.0;
            bool moved = false;
            for (int half = 0; half < 40; ++half) {
                Eigen::VectorXd ne_trial = ue + t * dE;
                Eigen::VectorXd nk_trial = uk + t * dk;
                const double hn = eliminate_rows_ ? joint(eta, ne_trial, nk_trial, pa, pb)
                                                  : joint(eta, nk_trial, ne_trial, pa, pb);
                if (hn >= h - 1e-12 * std::fabs(h)) {
                    ue = std::move(ne_trial);
                    uk = std::move(nk_trial);
                    h = hn;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if (!moved) return h;
        }
        throw ConvergenceError("Laplace inner mode search did not converge");
    }

    const SparseBinaryDataset* d_;
    LaplaceOptions opts_;
    bool eliminate_rows_ = true;
    Eigen::VectorXd a_;
    Eigen::VectorXd b_;
};

namespace detail {

struct BfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Quasi-Newton maximization with central finite-difference gradients and
// a backtracking Armijo line search.
inline BfgsResult bfgs_maximize(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                double fd_step, double grad_tol, int max_iter) {
    const Eigen::Index n = x.size();
    auto grad = [&](const Eigen::VectorXd& at) {
        Eigen::VectorXd g(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            Eigen::VectorXd hi = at, lo = at;
            hi[k] += fd_step;
            lo[k] -= fd_step;
            g[k] = (f(hi) - f(lo)) / (2.0 * fd_step);
        }
        return g;
    };
    BfgsResult out;
    double fx = f(x);
    Eigen::VectorXd g = grad(x);
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    for (int it = 1; it <= max_iter; ++it) {
        out.iterations = it;
        if (g.cwiseAbs().maxCoeff() < grad_tol) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd dir = hinv * g;
        if (dir.dot(g) <= 0.0) {
            hinv.setIdentity();
            dir = g;
        }
        const double max_step = dir.cwiseAbs().maxCoeff();
        if (max_step > 1.0) dir /= max_step;
        double t = 1.0, fn = fx;
        Eigen::VectorXd xn = x;
        bool ok = false;
        for (int half = 0; half < 40; ++half) {
            xn = x + t * dir;
            fn = f(xn);
            if (std::isfinite(fn) && fn >= fx + 1e-4 * t * dir.dot(g)) {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if (!ok) {
            out.converged = g.cwiseAbs().maxCoeff() < 100.0 * grad_tol;
            break;
        }
        const Eigen::VectorXd gn = grad(xn);
        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd yv = g - gn;  // gradient of -f
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            hinv = (I - rho * s * yv.transpose()) * hinv * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
        }
        const double change = std::fabs(fn - fx);
        x = xn;
        fx = fn;
        g = gn;
        if (change < 1e-12 * (1.0 + std::fabs(fx)) && s.cwiseAbs().maxCoeff() < 1e-8) {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    out.f = fx;
    return out;
}

} // namespace detail

// Maximizes the Laplace objective over (beta, log sigma_a, log sigma_b).
inline LaplaceFit laplace_fit(const SparseBinaryDataset& d, const LaplaceOptions& opts = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    LaplaceObjective obj(d, opts);
    const auto p = static_cast<Eigen::Index>(d.n_features());
    LaplaceFit out;

    if (opts.fix_sigma_zero) {
        const auto mf = fit_marginal_probit(d);
        out.theta_hat.beta = mf.gamma;
        out.log_laplace = mf.loglik;
        out.mode_a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_rows));
        out.mode_b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_cols));
        out.n_outer_iter = mf.n_iter;
        out.converged = mf.converged;
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }

    Eigen::VectorXd x0(p + 2);
    if (opts.start.beta.size() == p) {
        x0.head(p) = opts.start.beta;
        x0[p] = 0.5 * std::log(std::max(opts.start.sigma2_a, 1e-4));
        x0[p + 1] = 0.5 * std::log(std::max(opts.start.sigma2_b, 1e-4));
    } else {
        const auto mf = fit_marginal_probit(d);
        x0.head(p) = mf.gamma * std::sqrt(1.5);
        x0[p] = x0[p + 1] = std::log(0.5);
    }
    auto clamp_ls = [&](double v) { return std::clamp(v, opts.min_log_sigma, opts.max_log_sigma); };
    auto f = [&](const Eigen::VectorXd& v) {
        return obj(v.head(p), std::exp(clamp_ls(v[p])), std::exp(clamp_ls(v[p + 1])));
    };
    const auto res = detail::bfgs_maximize(f, x0, opts.fd_step, opts.grad_tol, opts.max_outer_iter);
    out.theta_hat.beta = res.x.head(p);
    const double sa = std::exp(clamp_ls(res.x[p])), sb = std::exp(clamp_ls(res.x[p + 1]));
    out.theta_hat.sigma2_a = sa * sa;
    out.theta_hat.sigma2_b = sb * sb;
    out.log_laplace = obj(out.theta_hat.beta, sa, sb);
    out.mode_a = obj.mode_a();
    out.mode_b = obj.mode_b();
    out.n_outer_iter = res.iterations;
    out.converged = res.converged;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace arcprobit::baselines
