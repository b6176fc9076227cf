#include "vwmdvi/mdvi.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vwmdvi;
using vwmdvi::testing::random_linear_mdp;
using vwmdvi::testing::random_tabular_mdp;

namespace {

WeightingFunction ones(const LinearMdp& mdp) { return WeightingFunction::constant(mdp.num_pairs(), 1.0); }

}  // namespace

TEST(SamplerMode, Validation) {
    EXPECT_THROW(SamplerMode::monte_carlo(0), std::invalid_argument);
    EXPECT_EQ(SamplerMode::monte_carlo(5).samples(), 5);
    EXPECT_TRUE(SamplerMode::exact().is_exact());
}

TEST(TabularMdvi, ZeroAlphaIsValueIteration) {
    const LinearMdp mdp = random_tabular_mdp(5, 3, 0.9, 2);
    std::vector<QFunction> seen;
    tabular_mdvi(mdp, 0.0, 25, SamplerMode::exact(), StreamFactory(0),
                 [&](const MdviState& st) { seen.push_back(st.s); });
    QFunction s = QFunction::Zero(mdp.num_pairs());
    for (const QFunction& got : seen) {
        s = mdp.rewards() + mdp.gamma() * mdp.transitions() * max_over_actions(mdp, s);
        EXPECT_LE((got - s).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(TabularMdvi, OneIterationIsGreedyOnReward) {
    const LinearMdp mdp = random_tabular_mdp(6, 4, 0.9, 5);
    const MdviResult res = tabular_mdvi(mdp, 0.9, 1, SamplerMode::exact(), StreamFactory(0));
    ASSERT_EQ(res.policies.size(), 2u);
    EXPECT_EQ(res.policies[1].action, greedy_policy(mdp, mdp.rewards()).action);
    EXPECT_EQ(res.policies[0].action, std::vector<int>(6, 0));
    EXPECT_EQ(res.state.samples_used, 0);
}

TEST(TabularMdvi, ExactModeConverges) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, seed);
        const MdviResult res = tabular_mdvi(mdp, 0.9, 300, SamplerMode::exact(), StreamFactory(seed));
        EXPECT_LE(normalized_gap(mdp, res.policies.back()), 1e-3);
        const LinearMdp rnd = random_tabular_mdp(8, 3, 0.9, seed);
        const MdviResult r2 = tabular_mdvi(rnd, 0.9, 300, SamplerMode::exact(), StreamFactory(seed));
        EXPECT_LE(normalized_gap(rnd, r2.policies.back()), 1e-3);
    }
}

TEST(TabularMdvi, SampleAccountingAndErrors) {
    const LinearMdp mdp = random_tabular_mdp(4, 3, 0.9, 1);
    const MdviResult res = tabular_mdvi(mdp, 0.5, 7, SamplerMode::monte_carlo(11), StreamFactory(3));
    EXPECT_EQ(res.state.samples_used, 4 * 3 * 7 * 11);
    EXPECT_THROW(tabular_mdvi(mdp, 1.0, 5, SamplerMode::exact(), StreamFactory(0)), std::invalid_argument);
    EXPECT_THROW(tabular_mdvi(mdp, 0.5, 0, SamplerMode::exact(), StreamFactory(0)), std::invalid_argument);
}

TEST(WlsMdvi, ExactModeFixedPoint) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const LinearMdp mdp = seed % 2 ? make_hard_linear_mdp(30, 4, 0.9, seed)
                                       : random_linear_mdp(6, 4, 4, 0.9, seed);
        Generator g(seed);
        Vector fv(mdp.num_pairs());
        for (Eigen::Index i = 0; i < fv.size(); ++i) fv[i] = 1.0 + 5.0 * g.uniform();
        const WeightingFunction f(fv);
        int checked = 0;
        wls_mdvi(mdp, 0.9, f, 40, SamplerMode::exact(), 0.01, StreamFactory(seed), StreamTag::wls_first,
                 [&](const MdviState& st) {
                     // st.v is still the value the targets were built from.
                     const QFunction target = mdp.rewards() + mdp.gamma() * mdp.transitions() * st.v;
                     EXPECT_LE((mdp.features() * st.theta - target).cwiseAbs().maxCoeff(), 1e-9);
                     ++checked;
                 });
        EXPECT_EQ(checked, 40);
    }
}

TEST(WlsMdvi, AveragingIdentityOnReplay) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 7);
    const double alpha = 0.9;
    std::vector<QFunction> s_seen;
    const MdviResult res = wls_mdvi(mdp, alpha, ones(mdp), 60, SamplerMode::monte_carlo(10), 0.01,
                                    StreamFactory(7), StreamTag::wls_first,
                                    [&](const MdviState& st) { s_seen.push_back(st.s); });
    ASSERT_EQ(res.thetas.size(), 60u);
    for (std::size_t k = 0; k < res.thetas.size(); ++k) {
        QFunction replay = QFunction::Zero(mdp.num_pairs());
        for (std::size_t j = 0; j <= k; ++j)
            replay += std::pow(alpha, static_cast<double>(k - j)) * (mdp.features() * res.thetas[j]);
        EXPECT_LE((replay - s_seen[k]).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_EQ(max_over_actions(mdp, s_seen[k]).size(), mdp.num_states());
    }
}

TEST(WlsMdvi, ScalingWeightsLeavesIteratesUnchanged) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 3);
    const WeightingFunction f = oracle_weighting(mdp);
    const WeightingFunction f3 = f.scaled(3.0);
    const MdviResult a = wls_mdvi(mdp, 0.9, f, 50, SamplerMode::monte_carlo(20), 0.01, StreamFactory(5));
    const MdviResult b = wls_mdvi(mdp, 0.9, f3, 50, SamplerMode::monte_carlo(20), 0.01, StreamFactory(5));
    ASSERT_EQ(a.thetas.size(), b.thetas.size());
    for (std::size_t k = 0; k < a.thetas.size(); ++k)
        EXPECT_LE((a.thetas[k] - b.thetas[k]).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(WlsMdvi, DeterministicAndSeedSensitive) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 2);
    const Design design = frank_wolfe(mdp, ones(mdp), 0.01);
    auto run = [&](std::uint64_t seed) {
        return wls_mdvi(mdp, 0.9, ones(mdp), design, 30, SamplerMode::monte_carlo(10), StreamFactory(seed));
    };
    const MdviResult a = run(1), b = run(1), c = run(2);
    for (std::size_t k = 0; k < a.thetas.size(); ++k) EXPECT_EQ(a.thetas[k], b.thetas[k]);
    EXPECT_NE(a.thetas.back(), c.thetas.back());
    EXPECT_EQ(a.state.samples_used, static_cast<std::int64_t>(design.size()) * 30 * 10);
    EXPECT_EQ(a.state.samples_used, wls_sample_count(design.size(), 30, SamplerMode::monte_carlo(10)));
    const MdviResult e = wls_mdvi(mdp, 0.9, ones(mdp), design, 30, SamplerMode::exact(), StreamFactory(1));
    EXPECT_EQ(e.state.samples_used, 0);
}

TEST(WlsMdvi, BoundStaysWithinGuard) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 4);
    const MdviResult res =
        wls_mdvi(mdp, 0.9, ones(mdp), 200, SamplerMode::monte_carlo(100), 0.01, StreamFactory(4));
    EXPECT_EQ(res.state.bound_violations, 0);
}

TEST(VarianceEstimation, ConstantValueGivesZero) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 1);
    const VarianceEstimate est =
        variance_estimation(mdp, ValueFunction::Constant(2, 4.2), 50, 0.01, StreamFactory(1));
    EXPECT_EQ(est.omega, Vector::Zero(4));
    const Design design = frank_wolfe(mdp, ones(mdp), 0.01);
    EXPECT_EQ(est.samples_used, 2 * static_cast<std::int64_t>(design.size()) * 50);
    EXPECT_THROW(variance_estimation(mdp, ValueFunction::Zero(3), 5, 0.01, StreamFactory(1)),
                 std::invalid_argument);
    EXPECT_THROW(variance_estimation(mdp, ValueFunction::Zero(2), 0, 0.01, StreamFactory(1)),
                 std::invalid_argument);
}

TEST(VarianceEstimation, LargeSampleAccuracy) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 11);
    const OptimalSolution opt = exact_optimal_values(mdp);
    const VarianceEstimate est = variance_estimation(mdp, opt.values, 1000000, 0.01, StreamFactory(11));
    const QFunction truth = variance_of_value(mdp, opt.values);
    const QFunction fitted = (mdp.features() * est.omega).cwiseMax(0.0);
    const double h = mdp.horizon();
    EXPECT_LE((fitted - truth).cwiseAbs().maxCoeff(), 0.05 * h * h);
}

TEST(VarianceEstimation, PairedEstimatorIsUnbiased) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 12);
    const OptimalSolution opt = exact_optimal_values(mdp);
    const Design design = frank_wolfe(mdp, ones(mdp), 0.01);
    const WeightedProjector proj(mdp, design, ones(mdp));
    const auto& core = proj.core_indices();
    const QFunction truth = variance_of_value(mdp, opt.values);
    // The regression is linear in Var-hat, so its mean is the regression of the true variance.
    const Vector expected = mdp.features() * proj.solve_full(truth);

    const int runs = 200;
    Matrix fitted(runs, mdp.num_pairs());
    for (int r = 0; r < runs; ++r) {
        const VarianceEstimate est =
            variance_estimation(mdp, design, opt.values, 100, StreamFactory(1000 + static_cast<std::uint64_t>(r)));
        fitted.row(r) = (mdp.features() * est.omega).transpose();
    }
    const Vector mean = fitted.colwise().mean().transpose();
    for (Eigen::Index i : core) {
        const double sd = std::sqrt((fitted.col(i).array() - mean[i]).square().sum() / (runs - 1));
        EXPECT_NEAR(mean[i], expected[i], 3.0 * sd / std::sqrt(runs) + 1e-12) << "pair " << i;
    }
}

TEST(SigmaWeighting, FloorAndClip) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 1);
    const WeightingFunction zero = make_sigma_weighting(mdp, Vector::Zero(4));
    for (Eigen::Index i = 0; i < zero.size(); ++i) EXPECT_DOUBLE_EQ(zero[i], std::sqrt(10.0));
    const WeightingFunction big = make_sigma_weighting(mdp, Vector::Constant(4, 1e6));
    for (Eigen::Index i = 0; i < big.size(); ++i) EXPECT_DOUBLE_EQ(big[i], 10.0);
    Vector omega(4);
    omega << 0.5, 0.0, 0.0, 0.0;  // phi^T omega = 0.5 at x0, 0 at x1
    const WeightingFunction mid = make_sigma_weighting(mdp, omega);
    EXPECT_DOUBLE_EQ(mid[mdp.pair_index(0, 3)], std::sqrt(0.5) + std::sqrt(10.0));
    EXPECT_DOUBLE_EQ(mid[mdp.pair_index(1, 3)], std::sqrt(10.0));
    EXPECT_THROW(make_sigma_weighting(mdp, Vector::Zero(3)), std::invalid_argument);
}

TEST(SigmaWeighting, BracketsTrueStandardDeviation) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 13);
    const OptimalSolution opt = exact_optimal_values(mdp);
    const VarianceEstimate est = variance_estimation(mdp, opt.values, 1000000, 0.01, StreamFactory(13));
    const WeightingFunction sigma = make_sigma_weighting(mdp, est.omega);
    const QFunction sd = variance_of_value(mdp, opt.values).cwiseSqrt();
    const double root_h = std::sqrt(mdp.horizon());
    for (Eigen::Index i = 0; i < sd.size(); ++i) {
        EXPECT_GE(sigma[i], sd[i]);
        EXPECT_LE(sigma[i], sd[i] + 2.0 * root_h);
    }
}

TEST(Vwls, ExactModeMatchesTabularBaseline) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, seed);
        VwlsParams p;
        p.iterations = 150;
        p.second_iterations = 150;
        p.variance_samples = 1000;
        p.exact = true;
        const VwlsResult v = vwls_mdvi(mdp, p, StreamFactory(seed));
        const double gap = normalized_gap(mdp, v.policies.back());
        const MdviResult same_k = tabular_mdvi(mdp, 0.9, 150, SamplerMode::exact(), StreamFactory(seed));
        const MdviResult total_k = tabular_mdvi(mdp, 0.9, 300, SamplerMode::exact(), StreamFactory(seed));
        EXPECT_LE(gap, normalized_gap(mdp, same_k.policies.back()) + 1e-6);
        EXPECT_LE(gap, normalized_gap(mdp, total_k.policies.back()) + 1e-6);
        EXPECT_EQ(v.samples_used, 2 * static_cast<std::int64_t>(v.first_design.size()) * 1000);
    }
}

TEST(Vwls, SampleCountAndTrace) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 9);
    VwlsParams p;
    p.iterations = 12;
    p.samples = 7;
    p.second_iterations = 9;
    p.second_samples = 5;
    p.variance_samples = 31;
    std::vector<TracePoint> seen;
    const VwlsResult v = vwls_mdvi(mdp, p, StreamFactory(9), [&](const TracePoint& tp) { seen.push_back(tp); });
    const auto c1 = static_cast<std::int64_t>(v.first_design.size());
    const auto c2 = static_cast<std::int64_t>(v.second_design.size());
    EXPECT_EQ(v.samples_used, c1 * 12 * 7 + 2 * c1 * 31 + c2 * 9 * 5);
    EXPECT_EQ(v.samples_used, vwls_sample_count(v.first_design.size(), v.second_design.size(), p));
    ASSERT_EQ(seen.size(), 12u + 1u + 9u);
    EXPECT_EQ(seen[11].phase, 1);
    EXPECT_EQ(seen[11].samples_used, c1 * 12 * 7);
    EXPECT_EQ(seen[12].phase, 2);
    EXPECT_EQ(seen[12].iteration, 12);
    EXPECT_EQ(seen[12].samples_used, c1 * 12 * 7 + 2 * c1 * 31);
    EXPECT_EQ(seen.back().phase, 3);
    EXPECT_EQ(seen.back().iteration, 21);
    EXPECT_EQ(seen.back().samples_used, v.samples_used);
    EXPECT_EQ(v.trace.size(), seen.size());
    p.variance_samples = 0;
    EXPECT_THROW(vwls_mdvi(mdp, p, StreamFactory(9)), std::invalid_argument);
}

TEST(TheoremShapedCounts, ShapeAndValidation) {
    const TheoremShapedCounts c = theorem_shaped_counts(4, 0.9, 0.1, 0.1);
    EXPECT_NEAR(c.core_bound, 16.0 * std::log(std::log(8.0)) + 28.0, 1e-12);
    EXPECT_EQ(c.iterations_weighted, static_cast<std::int64_t>(std::ceil(30.0 * std::log(10.0) + 1.0)));
    EXPECT_EQ(c.iterations_unweighted, c.iterations_weighted);
    const TheoremShapedCounts finer = theorem_shaped_counts(4, 0.9, 0.05, 0.1);
    EXPECT_GT(finer.samples_weighted, 3 * c.samples_weighted);
    EXPECT_GT(finer.samples_unweighted, c.samples_unweighted);
    EXPECT_EQ(finer.samples_variance, c.samples_variance);
    EXPECT_GT(c.samples_weighted, 0);
    EXPECT_THROW(theorem_shaped_counts(0, 0.9, 0.1, 0.1), std::invalid_argument);
    EXPECT_THROW(theorem_shaped_counts(4, 1.0, 0.1, 0.1), std::invalid_argument);
    EXPECT_THROW(theorem_shaped_counts(4, 0.9, 0.0, 0.1), std::invalid_argument);
    EXPECT_THROW(theorem_shaped_counts(4, 0.9, 0.1, 1.0), std::invalid_argument);
}
