#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <arcprobit/simulate.hpp>

using namespace arcprobit;

namespace {

std::string csv_bytes(const SparseBinaryDataset& d) {
    std::ostringstream o;
    write_csv(d, o);
    return o.str();
}

} // namespace

TEST(Preset, TableOfSettings) {
    const auto a = preset("bal-nul-hi");
    EXPECT_EQ(a.rho, 0.56);
    EXPECT_EQ(a.kappa, 0.56);
    EXPECT_EQ(a.sigma_a, 1.0);
    EXPECT_EQ(a.sigma_b, 1.0);
    EXPECT_EQ(a.beta.size(), 8);
    EXPECT_EQ(a.beta[0], -1.2);
    EXPECT_EQ(a.beta.tail(7).cwiseAbs().maxCoeff(), 0.0);
    const auto b = preset("IMB-LIN-LO");
    EXPECT_EQ(b.rho, 0.88);
    EXPECT_EQ(b.kappa, 0.53);
    EXPECT_EQ(b.sigma_a, 0.5);
    EXPECT_EQ(b.sigma_b, 0.2);
    for (int l = 1; l <= 7; ++l) EXPECT_NEAR(b.beta[l], -1.2 + 0.3 * l, 1e-15);
    EXPECT_NEAR(b.beta[4], 0.0, 1e-15);
    EXPECT_THROW(preset("bal-nul"), DomainError);
    EXPECT_THROW(preset("mid-nul-hi"), DomainError);
    EXPECT_EQ(preset_names().size(), 8u);
}

TEST(MarginalRate, ClosedForms) {
    EXPECT_NEAR(marginal_rate_check(preset("imb-nul-hi")), 0.244211158311, 1e-11);
    EXPECT_NEAR(marginal_rate_check(preset("bal-nul-lo")), 0.145360539765, 1e-11);
    SimSetting s = preset("bal-nul-lo");
    s.beta[0] = 0.0;
    s.sigma_a = s.sigma_b = 0.0;
    EXPECT_EQ(marginal_rate_check(s), 0.5);
}

TEST(Generate, DimensionsUseHalfEvenRounding) {
    EXPECT_EQ(sim_dimension(10000, 0.56), 174u);  // 10000^0.56 = 173.78
    EXPECT_EQ(sim_dimension(10000, 0.88), 3311u);
    const auto sim = generate(preset("imb-nul-lo"), 10000, 1);
    EXPECT_EQ(sim.data.n_rows, 3311u);
    EXPECT_EQ(sim.data.n_cols, 132u);
    // Bernoulli(N / RC) inclusion: attained N within 5 sd of the target
    EXPECT_NEAR(static_cast<double>(sim.data.n_obs()), 10000.0, 5 * std::sqrt(10000.0));
}

TEST(Generate, ByteIdenticalForFixedSeedAndAnyThreadCount) {
    const auto s = preset("bal-lin-hi");
    const auto a = generate(s, 20000, 99, 1);
    const auto b = generate(s, 20000, 99, 1);
    const auto c = generate(s, 20000, 99, 4);
    const std::string ba = csv_bytes(a.data);
    EXPECT_EQ(ba, csv_bytes(b.data));
    EXPECT_EQ(ba, csv_bytes(c.data));
    EXPECT_NE(ba, csv_bytes(generate(s, 20000, 100).data));
}

TEST(Generate, RowMajorCellOrder) {
    const auto sim = generate(preset("bal-nul-hi"), 3000, 2);
    const auto& d = sim.data;
    for (std::size_t c = 1; c < d.n_obs(); ++c) {
        EXPECT_TRUE(std::tie(d.row[c - 1], d.col[c - 1]) < std::tie(d.row[c], d.col[c]));
    }
}

TEST(Generate, CovariatesFollowAr1Correlation) {
    const auto sim = generate(preset("bal-lin-lo"), 100000, 6);
    const auto& x = sim.data.x;
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd f = x.rightCols(7);
    const Eigen::RowVectorXd mean = f.colwise().mean();
    f.rowwise() -= mean;
    const Eigen::MatrixXd cov = f.transpose() * f / static_cast<double>(n - 1);
    for (int k = 0; k < 7; ++k) {
        for (int l = 0; l < 7; ++l) EXPECT_NEAR(cov(k, l), std::pow(0.5, std::abs(k - l)), 0.02) << k << "," << l;
    }
}

TEST(Generate, ResponseRateMatchesClosedForm) {
    for (const char* name : {"imb-nul-hi", "bal-nul-lo", "bal-lin-hi"}) {
        const auto s = preset(name);
        const auto sim = generate(s, 100000, 4);
        const double n = static_cast<double>(sim.data.n_obs());
        double ybar = 0.0;
        for (auto v : sim.data.y) ybar += v;
        ybar /= n;
        const double p = marginal_rate_check(s);
        // binomial sd inflated for the within-row and within-column correlation
        const double sd_eff = std::sqrt(p * (1 - p) / static_cast<double>(std::min(sim.data.n_rows, sim.data.n_cols)));
        EXPECT_NEAR(ybar, p, 3 * sd_eff) << name;
    }
}

TEST(Generate, InfeasibleDensityIsAnError) {
    SimSetting s = preset("bal-nul-hi");
    s.rho = s.kappa = 0.4;  // RC < N
    EXPECT_THROW(generate(s, 10000, 1), DomainError);
    EXPECT_THROW(generate(preset("bal-nul-hi"), 5, 1), DomainError);
}

TEST(Rng, UniformsInOpenIntervalAndNormalsStandard) {
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double u = rng::uniform(rng::key(3, rng::kNoise, static_cast<std::uint64_t>(k)));
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double z = rng::normal(rng::key(3, rng::kCovariate, static_cast<std::uint64_t>(k)));
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
    EXPECT_NE(rng::key(1, 2, 3, 4, 5), rng::key(1, 2, 3, 5, 4));
}
