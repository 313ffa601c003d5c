#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include <arcprobit/numerics.hpp>

using namespace arcprobit;

// Reference values from 50-digit mpmath (ncdf, log, erfinv).

TEST(NormalCdf, MatchesHighPrecisionValues) {
    EXPECT_NEAR(std_normal_cdf(1.959964), 0.9750000009035575957, 1e-15);
    EXPECT_NEAR(std_normal_cdf(3.0), 0.99865010196836990547, 1e-15);
    EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
    EXPECT_NEAR(std_normal_cdf(-3.0) / 0.0013498980316300945267, 1.0, 1e-14);
    EXPECT_NEAR(std_normal_cdf(-8.0) / 6.2209605742717841235e-16, 1.0, 1e-13);
    EXPECT_NEAR(std_normal_cdf(-1.0565), 0.1453699204221746981, 1e-15);
}

TEST(NormalCdf, NonFiniteInputThrows) {
    EXPECT_THROW(std_normal_cdf(std::numeric_limits<double>::quiet_NaN()), DomainError);
    EXPECT_THROW(log_std_normal_cdf(std::numeric_limits<double>::infinity()), DomainError);
}

TEST(LogNormalCdf, DeepTailsAndUpperTail) {
    struct Case {
        double z, want;
    };
    const std::vector<Case> cases{{-20, -203.91715537109726394}, {-40, -804.60844201375378817},
                                  {-100, -5005.5242086942050886},  {-9.9, -52.226428300404041514},
                                  {-10.1, -54.246047542693634888}, {-1, -1.8410216450092635058},
                                  {2, -0.023012909328963488465}};
    for (const auto& c : cases) EXPECT_NEAR(log_std_normal_cdf(c.z) / c.want, 1.0, 1e-13) << c.z;
    EXPECT_NEAR(log_std_normal_cdf(5.0) / -2.8665161296376359338e-7, 1.0, 1e-12);
    EXPECT_NEAR(log_std_normal_cdf(10.0) / -7.619853024160526066e-24, 1.0, 1e-10);
}

TEST(LogNormalCdf, ContinuousAcrossTailSwitch) {
    const double a = log_std_normal_cdf(-10.0 - 1e-12), b = log_std_normal_cdf(-10.0 + 1e-12);
    EXPECT_NEAR(a, b, 1e-9);
}

TEST(Mills, MatchesHighPrecisionValues) {
    EXPECT_NEAR(mills(-20.0) / 20.049753068527850542, 1.0, 1e-13);
    EXPECT_NEAR(mills(-5.0) / 5.1865039671258421156, 1.0, 1e-13);
    EXPECT_NEAR(mills(0.0) / 0.79788456080286535588, 1.0, 1e-14);
    EXPECT_NEAR(mills(5.0) / 1.4867199409049057124e-6, 1.0, 1e-10);
}

TEST(Mills, SecondDerivativeOfLogCdfByDifferences) {
    for (double z : {-30.0, -8.0, -1.0, 0.0, 0.7, 4.0}) {
        const double h = 1e-4;
        const double fd = (log_std_normal_cdf(z + h) - 2 * log_std_normal_cdf(z) + log_std_normal_cdf(z - h)) / (h * h);
        EXPECT_NEAR(log_std_normal_cdf_d2(z), fd, 1e-5 * (1 + std::fabs(fd))) << z;
        EXPECT_LT(log_std_normal_cdf_d2(z), 0.0);
    }
}

TEST(Quantile, MatchesHighPrecisionValues) {
    EXPECT_NEAR(std_normal_quantile(0.975), 1.9599639845400542355, 1e-14);
    EXPECT_NEAR(std_normal_quantile(1e-10), -6.3613409024040562047, 1e-12);
    // 1 - p carries a relative representation error near 1e-4 here
    EXPECT_NEAR(std_normal_quantile(0.999999999999), 7.0344838253011319298, 1e-5);
    EXPECT_NEAR(std_normal_quantile(0.02425), -1.9729610513118848503, 1e-14);
    EXPECT_NEAR(std_normal_quantile(0.3), -0.52440051270804078404, 1e-14);
    EXPECT_DOUBLE_EQ(std_normal_quantile(0.5), 0.0);
    EXPECT_THROW(std_normal_quantile(0.0), DomainError);
    EXPECT_THROW(std_normal_quantile(1.0), DomainError);
}

TEST(Quantile, RoundTripsThroughCdf) {
    for (double p = 0.001; p < 1.0; p += 0.0137) EXPECT_NEAR(std_normal_cdf(std_normal_quantile(p)), p, 1e-15);
}

TEST(ClampProbability, StaysInsideOpenInterval) {
    EXPECT_EQ(clamp_probability(0.0), kMinProbability);
    EXPECT_EQ(clamp_probability(1.0), kMaxProbability);
    EXPECT_EQ(clamp_probability(0.25), 0.25);
}

TEST(KahanSum, RecoversCancelledLowOrderTerms) {
    std::vector<double> xs{1e16, 1.0, -1e16, 1.0};
    EXPECT_EQ(kahan_total(xs), 2.0);
    std::vector<double> many(100000, 0.1);
    EXPECT_NEAR(kahan_total(many), 10000.0, 1e-9);
}

TEST(LogSumExp, StableForLargeAndInfiniteTerms) {
    std::vector<double> xs{1000.0, 1000.0};
    EXPECT_NEAR(log_sum_exp(xs), 1000.0 + std::log(2.0), 1e-12);
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> ys{ninf, std::log(3.0)};
    EXPECT_NEAR(log_sum_exp(ys), std::log(3.0), 1e-15);
    std::vector<double> zs{ninf, ninf};
    EXPECT_EQ(log_sum_exp(zs), ninf);
}

TEST(Brent, FindsInteriorMaximum) {
    const auto r = brent_maximize([](double x) { return -(x - 0.7) * (x - 0.7) + 3.0; }, 0.0, 100.0);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.argmax, 0.7, 1e-6);
    EXPECT_NEAR(r.max, 3.0, 1e-12);
}

TEST(Brent, ReturnsBoundaryWhenMonotone) {
    const auto r0 = brent_maximize([](double x) { return -x; }, 0.0, 100.0);
    EXPECT_EQ(r0.argmax, 0.0);
    const auto r1 = brent_maximize([](double x) { return std::log1p(x); }, 0.0, 100.0);
    EXPECT_EQ(r1.argmax, 100.0);
}

TEST(Brent, NonFiniteObjectiveThrowsWithAbscissa) {
    try {
        brent_maximize([](double x) { return x > 30.0 ? std::numeric_limits<double>::quiet_NaN() : -x * x; }, 0.0,
                       100.0);
        FAIL() << "expected OptimizationError";
    } catch (const OptimizationError& e) {
        EXPECT_GT(e.abscissa(), 30.0);
    }
}

TEST(Brent, SkewedObjective) {
    // maximum of log(x) - x at x = 1
    const auto r = brent_maximize([](double x) { return std::log(x + 1e-300) - x; }, 0.0, 100.0);
    EXPECT_NEAR(r.argmax, 1.0, 1e-6);
}
