#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include <arcprobit/inference.hpp>

using namespace arcprobit;

namespace {

// Per-group score sums by ordinary maps, then the outer products.
Eigen::MatrixXd meat_by_map(const SparseBinaryDataset& d, const Eigen::VectorXd& g, int which) {
    const auto p = static_cast<Eigen::Index>(d.n_features());
    std::map<std::size_t, Eigen::VectorXd> sums;
    for (std::size_t c = 0; c < d.n_obs(); ++c) {
        const std::size_t key = which == 0 ? d.row[c] : which == 1 ? d.col[c] : c;
        auto it = sums.find(key);
        if (it == sums.end()) it = sums.emplace(key, Eigen::VectorXd::Zero(p)).first;
        it->second += score_obs(g, d.x.row(static_cast<Eigen::Index>(c)).transpose(), d.y[c]);
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
    for (const auto& [k, s] : sums) m += s * s.transpose();
    return m;
}

SparseBinaryDataset unique_design(std::size_t n) {
    std::vector<Index> r(n), c(n);
    std::vector<std::uint8_t> y(n);
    RowMatrix x(static_cast<Eigen::Index>(n), 3);
    for (std::size_t k = 0; k < n; ++k) {
        r[k] = static_cast<Index>(k);
        c[k] = static_cast<Index>((k * 7919) % n);
        const double a = std::sin(0.37 * static_cast<double>(k)), b = std::cos(1.1 * static_cast<double>(k));
        x.row(static_cast<Eigen::Index>(k)) << 1.0, a, b;
        y[k] = std::sin(3.3 * static_cast<double>(k)) + 0.5 * a > 0.0;
    }
    return make_dataset(n, n, r, c, y, x);
}

} // namespace

TEST(Sandwich, DegeneratesToHeteroskedasticOnUniqueRowsAndColumns) {
    const auto d = unique_design(997);
    const auto mf = fit_marginal_probit(d);
    const auto sw = sandwich_vcov(d, mf.gamma, mf.info);
    EXPECT_LT((sw.meat_row - sw.meat_cell).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sw.meat_col - sw.meat_cell).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::MatrixXd inv = mf.info.inverse();
    const Eigen::MatrixXd het = inv * sw.meat_cell * inv;
    EXPECT_LT((sw.vcov_gamma - het).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sandwich, MeatsMatchMapOracle) {
    const auto sim = generate(preset("imb-lin-hi"), 3000, 4);
    const auto& d = sim.data;
    const auto mf = fit_marginal_probit(d);
    const auto sw = sandwich_vcov(d, mf.gamma, mf.info, 0.5, 0.25);
    EXPECT_LT((sw.meat_row - meat_by_map(d, mf.gamma, 0)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((sw.meat_col - meat_by_map(d, mf.gamma, 1)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((sw.meat_cell - meat_by_map(d, mf.gamma, 2)).cwiseAbs().maxCoeff(), 1e-9);
    const Eigen::MatrixXd inv = mf.info.inverse();
    const Eigen::MatrixXd want = inv * (sw.meat_row + sw.meat_col - sw.meat_cell) * inv;
    // eigenvalue clipping leaves a PSD matrix untouched
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(want);
    if (es.eigenvalues().minCoeff() >= 0.0) EXPECT_LT((sw.vcov_gamma - want).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sw.vcov_beta - 1.75 * sw.vcov_gamma).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sw.vcov_gamma).eigenvalues().minCoeff(), -1e-15);
}

TEST(Sandwich, ScoreBlocksSumToZeroAtOptimum) {
    const auto sim = generate(preset("bal-nul-lo"), 3000, 41);
    const auto mf = fit_marginal_probit(sim.data);
    const auto b = compute_score_blocks(sim.data, mf.gamma);
    EXPECT_LT(b.row_sums.colwise().sum().cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT(b.col_sums.colwise().sum().cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Naive, InverseInformationWithPlugInScale) {
    const auto d = unique_design(500);
    const auto mf = fit_marginal_probit(d);
    const auto nv = naive_result(mf.info, 0.3, 0.2);
    EXPECT_LT((nv.vcov_gamma - mf.info.inverse()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((nv.vcov_beta - 1.5 * nv.vcov_gamma).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(nv.se_beta[1], std::sqrt(nv.vcov_beta(1, 1)), 1e-15);
}

TEST(Pigeonhole, MultiplicitiesAreMultinomial) {
    const auto sim = generate(preset("imb-nul-lo"), 2000, 2);
    const auto w = pigeonhole_weights(sim.data, 9, 3);
    EXPECT_DOUBLE_EQ(std::accumulate(w.row_mult.begin(), w.row_mult.end(), 0.0), static_cast<double>(sim.data.n_rows));
    EXPECT_DOUBLE_EQ(std::accumulate(w.col_mult.begin(), w.col_mult.end(), 0.0), static_cast<double>(sim.data.n_cols));
    const auto cw = w.cell_weights(sim.data);
    for (std::size_t c = 0; c < cw.size(); ++c) {
        EXPECT_EQ(cw[c], w.row_mult[sim.data.row[c]] * w.col_mult[sim.data.col[c]]);
    }
    const auto w2 = pigeonhole_weights(sim.data, 9, 3);
    EXPECT_EQ(w.row_mult, w2.row_mult);
}

TEST(Pigeonhole, UnitWeightsGiveZeroSpread) {
    const auto sim = generate(preset("bal-nul-lo"), 2000, 3);
    const auto fit = fit_arc(sim.data);
    BootstrapOptions o;
    o.replicates = 5;
    o.force_unit_weights = true;
    const auto r = pigeonhole_bootstrap(sim.data, fit, o);
    EXPECT_LT(r.se_gamma.maxCoeff(), 1e-10);
}

TEST(Pigeonhole, DeterministicAcrossThreadCounts) {
    const auto sim = generate(preset("imb-nul-hi"), 3000, 10);
    const auto fit = fit_arc(sim.data);
    BootstrapOptions o;
    o.replicates = 30;
    o.seed = 5;
    const auto a = pigeonhole_bootstrap(sim.data, fit, o);
    o.threads = 4;
    const auto b = pigeonhole_bootstrap(sim.data, fit, o);
    EXPECT_TRUE(a.vcov_beta == b.vcov_beta);
    EXPECT_EQ(a.replicates, 30u);
}

TEST(Pigeonhole, FullArcRefitReportsVarianceComponentSpread) {
    const auto sim = generate(preset("bal-nul-hi"), 2000, 13);
    const auto fit = fit_arc(sim.data);
    BootstrapOptions o;
    o.replicates = 10;
    o.mode = RefitMode::FullArc;
    const auto r = pigeonhole_bootstrap(sim.data, fit, o);
    ASSERT_TRUE(r.se_sigma.has_value());
    EXPECT_GT((*r.se_sigma)[0], 0.0);
    EXPECT_TRUE(r.se_beta.allFinite());
}

TEST(Bootstrap, TooManyDroppedReplicatesIsAnError) {
    std::vector<detail::Replicate> reps(10);
    for (std::size_t b = 0; b < 10; ++b) {
        reps[b].ok = b >= 3;
        reps[b].gamma = reps[b].beta = Eigen::Vector2d(0.1 * static_cast<double>(b), 1.0);
    }
    EXPECT_THROW(detail::summarize_replicates(reps, VcovMethod::Pigeonhole, 0.2, false), BootstrapError);
    reps[0].ok = reps[1].ok = true;
    const auto r = detail::summarize_replicates(reps, VcovMethod::Pigeonhole, 0.2, false);
    EXPECT_EQ(r.dropped, 1u);
    EXPECT_EQ(r.replicates, 9u);
}

TEST(Parametric, ReproducibleAndFinite) {
    const auto sim = generate(preset("bal-lin-lo"), 2000, 19);
    const auto fit = fit_arc(sim.data);
    BootstrapOptions o;
    o.replicates = 8;
    o.seed = 3;
    const auto a = parametric_bootstrap(sim.data, fit.natural, o);
    const auto b = parametric_bootstrap(sim.data, fit.natural, o);
    EXPECT_TRUE(a.vcov_beta == b.vcov_beta);
    EXPECT_TRUE(a.se_beta.allFinite());
    ASSERT_TRUE(a.se_sigma.has_value());
}

TEST(Parametric, ResimulationKeepsDesign) {
    const auto sim = generate(preset("bal-lin-lo"), 1500, 19);
    const auto r = resimulate_responses(sim.data, sim.truth.beta, 0.25, 0.04, 77);
    EXPECT_EQ(r.row, sim.data.row);
    EXPECT_TRUE(r.x == sim.data.x);
    EXPECT_NE(r.y, sim.data.y);
}
