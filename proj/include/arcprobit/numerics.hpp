#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include "errors.hpp"

namespace arcprobit {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
inline constexpr double kSqrt2 = std::numbers::sqrt2;

// Probabilities are kept inside this band wherever a raw probability is
// passed to log().
inline constexpr double kMinProbability = 1e-300;
inline constexpr double kMaxProbability = 1.0 - 1e-16;

// Neumaier-compensated accumulator. Results depend only on the order of
// add() calls, never on thread scheduling.
class KahanSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    KahanSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double kahan_total(std::span<const double> xs) noexcept {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

namespace detail {

inline void require_finite(double z, const char* what) {
    if (!std::isfinite(z)) {
        throw DomainError(std::string(what) + ": non-finite argument");
    }
}

// Phi(-x)/phi(x) for x >= 10 by backward evaluation of the Laplace
// continued fraction; 60 terms give full double precision there.
inline double upper_mills_ratio(double x) noexcept {
    double f = x;
    for (int n = 60; n >= 1; --n) f = x + n / f;
    return 1.0 / f;
}

inline constexpr double kTailSwitch = -10.0;

} // namespace detail

inline double std_normal_pdf(double z) noexcept {
    return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

inline double std_normal_cdf(double z) {
    detail::require_finite(z, "std_normal_cdf");
    return 0.5 * std::erfc(-z / kSqrt2);
}

inline double log_std_normal_cdf(double z) {
    detail::require_finite(z, "log_std_normal_cdf");
    if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / kSqrt2));
    if (z >= detail::kTailSwitch) return std::log(0.5 * std::erfc(-z / kSqrt2));
    return -0.5 * z * z - kLogSqrt2Pi + std::log(detail::upper_mills_ratio(-z));
}

// phi(z)/Phi(z), the derivative of log Phi(z).
inline double mills(double z) {
    detail::require_finite(z, "mills");
    if (z >= detail::kTailSwitch) {
        return std_normal_pdf(z) / (0.5 * std::erfc(-z / kSqrt2));
    }
    return 1.0 / detail::upper_mills_ratio(-z);
}

// Second derivative of log Phi(z); always negative.
inline double log_std_normal_cdf_d2(double z) {
    const double m = mills(z);
    return -m * (z + m);
}

inline double clamp_probability(double p) noexcept {
    return std::clamp(p, kMinProbability, kMaxProbability);
}

// Inverse of the standard normal cdf: Acklam's rational approximation
// followed by one Halley correction.
inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("std_normal_quantile: probability must lie in (0, 1)");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step on Phi(x) - p.
    const double e = std_normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// Stable log(sum(exp(xs))). Returns -inf when every term is -inf.
inline double log_sum_exp(std::span<const double> xs) noexcept {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    KahanSum s;
    for (double x : xs) s.add(std::exp(x - m));
    return m + std::log(s.value());
}

struct ScalarOptimum {
    double argmax = 0.0;
    double max = 0.0;
    int evaluations = 0;
    bool converged = false;
};

struct BrentOptions {
    double tol = 1e-8;
    int max_iter = 200;
};

// Maximizes f on [lo, hi] with Brent's parabolic/golden-section search.
// The endpoints are compared against the interior optimum, so monotone
// functions return the boundary. f is never evaluated outside [lo, hi].
template <class F>
ScalarOptimum brent_maximize(F&& f, double lo, double hi, BrentOptions opts = {}) {
    if (!(lo < hi)) throw DomainError("brent_maximize: requires lo < hi");
    ScalarOptimum out;
    auto eval = [&](double x) {
        x = std::clamp(x, lo, hi);
        const double v = f(x);
        ++out.evaluations;
        if (!std::isfinite(v)) {
            throw OptimizationError("brent_maximize: objective is not finite", x);
        }
        return -v;
    };

    constexpr double golden = 0.3819660112501051;
    const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
    double a = lo, b = hi;
    double v = a + golden * (b - a);
    double w = v, x = v;
    double fx = eval(x);
    double fv = fx, fw = fx;
    double d = 0.0, e = 0.0;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const double xm = 0.5 * (a + b);
        const double tol1 = eps * std::fabs(x) + opts.tol / 3.0;
        const double tol2 = 2.0 * tol1;
        if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) {
            out.converged = true;
            break;
        }
        bool golden_step = true;
        if (std::fabs(e) > tol1) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::fabs(q);
            const double etemp = e;
            e = d;
            if (std::fabs(p) < std::fabs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm >= x) ? tol1 : -tol1;
                golden_step = false;
            }
        }
        if (golden_step) {
            e = (x >= xm) ? a - x : b - x;
            d = golden * e;
        }
        const double u = (std::fabs(d) >= tol1) ? x + d : x + (d > 0.0 ? tol1 : -tol1);
        const double fu = eval(u);
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }

    out.argmax = x;
    out.max = -fx;
    for (double edge : {lo, hi}) {
        const double fe = -eval(edge);
        if (fe > out.max) {
            out.argmax = edge;
            out.max = fe;
        }
    }
    return out;
}

} // namespace arcprobit
