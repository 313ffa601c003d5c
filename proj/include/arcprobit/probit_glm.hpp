#pragma once

#include <algorithm>
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

namespace arcprobit {

struct ProbitOptions {
    int max_iter = 100;
    double grad_tol = 1e-6;
    double rel_tol = 1e-10;
    int max_halvings = 40;
    // Return the last iterate with separation_flag set instead of throwing.
    bool allow_separation = false;
    unsigned threads = 1;
    // Starting point; empty selects the default start.
    Eigen::VectorXd start;
};

struct MarginalFit {
    Eigen::VectorXd gamma;
    double loglik = 0.0;
    Eigen::MatrixXd info;  // observed information I_all at gamma
    int n_iter = 0;
    bool converged = false;
    bool separation_flag = false;
    std::vector<std::string> warnings;
};

struct SeparationCheck {
    bool separated = false;
    bool heuristic_fired = false;
    std::string warning;
};

inline constexpr double kSeparationNormBound = 1e3;
inline constexpr double kSeparationEtaBound = 30.0;
// Beyond this |eta| fitted probabilities are within 3e-7 of 0 or 1 and a
// separating direction is looked for.
inline constexpr double kSeparationProbeEta = 5.0;

// Score of one observation: y*mills(eta)*x - (1-y)*mills(-eta)*x.
inline Eigen::VectorXd score_obs(const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                 const Eigen::Ref<const Eigen::VectorXd>& x, int y) {
    const double eta = x.dot(gamma);
    const double s = y ? 1.0 : -1.0;
    return (s * mills(s * eta)) * x;
}

// Log-likelihood, score and observed information of the independence
// probit likelihood, optionally with per-cell weights.
struct ProbitEval {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
};

namespace detail {

// Fixed block size: the reduction tree never depends on the thread count.
inline constexpr std::size_t kProbitBlock = 2048;

inline ProbitEval probit_eval(const SparseBinaryDataset& d, const Eigen::VectorXd& gamma,
                              std::span<const double> weights, bool want_info, unsigned threads) {
    const std::size_t n = d.n_obs();
    const auto p = static_cast<Eigen::Index>(d.n_features());
    const std::size_t n_blocks = (n + kProbitBlock - 1) / kProbitBlock;
    std::vector<double> block_ll(n_blocks);
    std::vector<Eigen::VectorXd> block_score(n_blocks);
    std::vector<Eigen::MatrixXd> block_info(want_info ? n_blocks : 0);

    parallel_for_blocks(n_blocks, threads, [&](std::size_t b0, std::size_t b1) {
        Eigen::VectorXd wcol;
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t c0 = b * kProbitBlock;
            const std::size_t c1 = std::min(n, c0 + kProbitBlock);
            const auto len = static_cast<Eigen::Index>(c1 - c0);
            const auto xb = d.x.middleRows(static_cast<Eigen::Index>(c0), len);
            const Eigen::VectorXd eta = xb * gamma;
            KahanSum ll;
            std::vector<KahanSum> sc(static_cast<std::size_t>(p));
            if (want_info) wcol.resize(len);
            for (Eigen::Index k = 0; k < len; ++k) {
                const std::size_t c = c0 + static_cast<std::size_t>(k);
                const double w = weights.empty() ? 1.0 : weights[c];
                const double s = d.y[c] ? 1.0 : -1.0;
                const double z = s * eta[k];
                if (w == 0.0) {
                    if (want_info) wcol[k] = 0.0;
                    continue;
                }
                const double m = mills(z);
                ll.add(w * log_std_normal_cdf(z));
                const double g = w * s * m;
                for (Eigen::Index j = 0; j < p; ++j) sc[static_cast<std::size_t>(j)].add(g * xb(k, j));
                if (want_info) wcol[k] = w * m * (z + m);
            }
            block_ll[b] = ll.value();
            block_score[b].resize(p);
            for (Eigen::Index j = 0; j < p; ++j) block_score[b][j] = sc[static_cast<std::size_t>(j)].value();
            if (want_info) block_info[b] = xb.transpose() * wcol.asDiagonal() * xb;
        }
    });

    ProbitEval out;
    KahanSum ll;
    std::vector<KahanSum> sc(static_cast<std::size_t>(p));
    std::vector<KahanSum> inf(want_info ? static_cast<std::size_t>(p * p) : 0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        ll.add(block_ll[b]);
        for (Eigen::Index j = 0; j < p; ++j) sc[static_cast<std::size_t>(j)].add(block_score[b][j]);
        if (want_info) {
            for (Eigen::Index i = 0; i < p; ++i) {
                for (Eigen::Index j = 0; j < p; ++j) inf[static_cast<std::size_t>(i * p + j)].add(block_info[b](i, j));
            }
        }
    }
    out.loglik = ll.value();
    out.score.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) out.score[j] = sc[static_cast<std::size_t>(j)].value();
    if (want_info) {
        out.info.resize(p, p);
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) out.info(i, j) = inf[static_cast<std::size_t>(i * p + j)].value();
        }
        out.info = 0.5 * (out.info + out.info.transpose()).eval();
    }
    return out;
}

// Index of the first column whose leading block is numerically singular,
// or -1 when the matrix is positive definite.
inline Eigen::Index first_singular_column(const Eigen::MatrixXd& a, double rel_tol = 1e-12) {
    const Eigen::Index p = a.rows();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
    const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (Eigen::Index j = 0; j < p; ++j) {
        double diag = a(j, j);
        for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > rel_tol * scale)) return j;
        l(j, j) = std::sqrt(diag);
        for (Eigen::Index i = j + 1; i < p; ++i) {
            double v = a(i, j);
            for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / l(j, j);
        }
    }
    return -1;
}

inline std::string column_name(const SparseBinaryDataset& d, Eigen::Index j) {
    const auto k = static_cast<std::size_t>(j);
    return k < d.feature_names.size() ? d.feature_names[k] : "column " + std::to_string(k);
}

} // namespace detail

inline ProbitEval probit_loglik(const SparseBinaryDataset& d, const Eigen::VectorXd& gamma,
                                std::span<const double> weights = {}, bool want_info = true,
                                unsigned threads = 1) {
    return detail::probit_eval(d, gamma, weights, want_info, threads);
}

// Heuristic separation screen plus a certificate: a direction v with
// v'x >= 0 on every y=1 cell and v'x <= 0 on every y=0 cell.
inline SeparationCheck detect_separation(const SparseBinaryDataset& d,
                                         std::span<const Eigen::VectorXd> gamma_path,
                                         std::span<const double> weights = {}) {
    SeparationCheck out;
    if (gamma_path.empty()) return out;
    const Eigen::VectorXd& g = gamma_path.back();
    const Eigen::VectorXd eta = d.x * g;
    double max_abs_eta = 0.0;
    for (std::size_t c = 0; c < d.n_obs(); ++c) {
        if (!weights.empty() && weights[c] == 0.0) continue;
        max_abs_eta = std::max(max_abs_eta, std::fabs(eta[static_cast<Eigen::Index>(c)]));
    }
    out.heuristic_fired = g.norm() > kSeparationNormBound || max_abs_eta > kSeparationEtaBound;
    if (!out.heuristic_fired && max_abs_eta <= kSeparationProbeEta) return out;

    std::vector<Eigen::VectorXd> candidates{g};
    if (gamma_path.size() >= 2) {
        candidates.push_back(g - gamma_path.front());
        // Late Newton steps move only along the diverging direction.
        Eigen::VectorXd step = g - gamma_path[gamma_path.size() - 2];
        candidates.push_back(step);
        const double big = step.cwiseAbs().maxCoeff();
        for (Eigen::Index j = 0; j < step.size(); ++j) {
            if (std::fabs(step[j]) < 1e-3 * big) step[j] = 0.0;
        }
        candidates.push_back(step);
    }
    for (const auto& v : candidates) {
        const double vn = v.norm();
        if (!(vn > 0.0)) continue;
        bool ok = true;
        for (std::size_t c = 0; c < d.n_obs() && ok; ++c) {
            if (!weights.empty() && weights[c] == 0.0) continue;
            const auto xc = d.x.row(static_cast<Eigen::Index>(c));
            const double proj = xc.dot(v.transpose());
            const double slack = 1e-8 * vn * xc.norm();
            ok = d.y[c] ? proj >= -slack : proj <= slack;
        }
        if (ok) {
            out.separated = true;
            return out;
        }
    }
    if (out.heuristic_fired) {
        out.warning = "large linear predictors at the probit estimate, but no separating direction was found";
    }
    return out;
}

// Maximizes the independence probit likelihood by Newton-Raphson with
// step halving. The default start is zero with the intercept (an all-ones
// column) at Phi^{-1}(mean y).
inline MarginalFit fit_marginal_probit(const SparseBinaryDataset& d, const ProbitOptions& opts = {},
                                       std::span<const double> weights = {}) {
    if (d.n_obs() == 0) throw DomainError("fit_marginal_probit: empty dataset");
    const auto p = static_cast<Eigen::Index>(d.n_features());
    if (p == 0) throw DomainError("fit_marginal_probit: no features");

    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
    if (opts.start.size() == p) {
        gamma = opts.start;
    } else {
        KahanSum wy, wsum;
        for (std::size_t c = 0; c < d.n_obs(); ++c) {
            const double w = weights.empty() ? 1.0 : weights[c];
            wy.add(w * d.y[c]);
            wsum.add(w);
        }
        const double ybar = std::clamp(wy.value() / wsum.value(), 1e-6, 1.0 - 1e-6);
        for (Eigen::Index j = 0; j < p; ++j) {
            if ((d.x.col(j).array() == 1.0).all()) {
                gamma[j] = std_normal_quantile(ybar);
                break;
            }
        }
    }

    MarginalFit fit;
    std::vector<Eigen::VectorXd> path{gamma};
    ProbitEval cur = probit_loglik(d, gamma, weights, true, opts.threads);

    auto separation_exit = [&](const SeparationCheck& chk) {
        fit.separation_flag = true;
        if (!opts.allow_separation) {
            throw SeparationError(
                "probit likelihood has no finite maximizer: the responses are separated by a linear "
                "combination of the features; drop or merge the separating features");
        }
        fit.warnings.push_back("separation detected; returning the last iterate");
        (void)chk;
    };

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        fit.n_iter = iter;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.info);
        const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                              detail::first_singular_column(cur.info) >= 0;
        if (singular) {
            auto chk = detect_separation(d, path, weights);
            if (chk.separated || chk.heuristic_fired) {
                if (chk.separated) {
                    separation_exit(chk);
                    break;
                }
            }
            const Eigen::Index bad = std::max<Eigen::Index>(0, detail::first_singular_column(cur.info));
            throw RankDeficiencyError("probit information is singular; feature '" + detail::column_name(d, bad) +
                                          "' is collinear with earlier features",
                                      static_cast<std::size_t>(bad));
        }
        const Eigen::VectorXd step = ldlt.solve(cur.score);

        double t = 1.0;
        ProbitEval next;
        Eigen::VectorXd trial;
        bool accepted = false;
        // Near the optimum the Newton gain falls below the rounding noise of
        // the summed loglik; the full step is then taken on trust.
        const double noise = 1e-12 * std::max(1.0, std::fabs(cur.loglik));
        for (int h = 0; h <= opts.max_halvings; ++h) {
            trial = gamma + t * step;
            next = probit_loglik(d, trial, weights, true, opts.threads);
            if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - (h == 0 ? noise : 0.0)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // No ascent along the Newton direction: already at the optimum to
            // machine precision.
            fit.converged = cur.score.cwiseAbs().maxCoeff() < opts.grad_tol;
            break;
        }
        const double change = std::fabs(next.loglik - cur.loglik);
        const double denom = std::fabs(next.loglik);
        gamma = trial;
        cur = std::move(next);
        path.push_back(gamma);

        auto chk = detect_separation(d, path, weights);
        if (chk.separated) {
            separation_exit(chk);
            break;
        }
        const bool small_change = denom > 0.0 ? change / denom < opts.rel_tol : change == 0.0;
        if (cur.score.cwiseAbs().maxCoeff() < opts.grad_tol && small_change) {
            fit.converged = true;
            break;
        }
    }

    if (!fit.separation_flag) {
        auto chk = detect_separation(d, path, weights);
        if (chk.separated) {
            separation_exit(chk);
        } else if (!chk.warning.empty()) {
            fit.warnings.push_back(chk.warning);
        }
    }
    if (!fit.converged && !fit.separation_flag) {
        throw ConvergenceError("probit fit did not converge in " + std::to_string(opts.max_iter) +
                               " iterations (max |score| = " +
                               std::to_string(cur.score.cwiseAbs().maxCoeff()) +
                               "); raise the iteration cap or rescale the features");
    }
    fit.gamma = gamma;
    fit.loglik = cur.loglik;
    fit.info = cur.info;
    return fit;
}

} // namespace arcprobit
