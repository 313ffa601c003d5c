// Simulate a crossed design, fit it, print estimates with two kinds of
// standard errors.
#include <cstdio>

#include <arcprobit/arcprobit.hpp>

int main() {
    using namespace arcprobit;
    const auto sim = generate(preset("bal-lin-lo"), 20000, 42);
    const auto& d = sim.data;
    std::printf("N = %zu, R = %zu, C = %zu\n", d.n_obs(), d.n_rows, d.n_cols);

    const auto fit = fit_arc(d);
    const auto naive = naive_result(fit.marginal.info, fit.natural.sigma2_a, fit.natural.sigma2_b);
    const auto sw = sandwich_vcov(d, fit.working.gamma, fit.marginal.info, fit.natural.sigma2_a, fit.natural.sigma2_b);

    std::printf("%-12s %9s %9s %9s %9s\n", "term", "truth", "beta_hat", "se_naive", "se_sand");
    for (std::size_t k = 0; k < d.n_features(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        std::printf("%-12s %9.4f %9.4f %9.4f %9.4f\n", d.feature_names[k].c_str(), sim.truth.beta[i],
                    fit.natural.beta[i], naive.se_beta[i], sw.se_beta[i]);
    }
    std::printf("sigma_a %.4f (truth %.2f), sigma_b %.4f (truth %.2f)\n", std::sqrt(fit.natural.sigma2_a),
                sim.truth.sigma_a, std::sqrt(fit.natural.sigma2_b), sim.truth.sigma_b);
    for (const auto& w : fit.warnings) std::printf("warning: %s\n", w.c_str());
}
