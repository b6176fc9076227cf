#include "vwmdvi/io.hpp"

#include <gtest/gtest.h>

using namespace vwmdvi;

TEST(MdpJson, RoundTrip) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 5, 0.9, 4);
    const Json j = to_json(mdp);
    EXPECT_EQ(j.at("phi").size(), 2u);
    EXPECT_EQ(j.at("phi")[0].size(), 30u);
    EXPECT_EQ(j.at("mu").size(), 5u);
    const LinearMdp back = linear_mdp_from_json(Json::parse(j.dump()));
    EXPECT_EQ(back.features(), mdp.features());
    EXPECT_EQ(back.mu(), mdp.mu());
    EXPECT_EQ(back.psi(), mdp.psi());
    EXPECT_EQ(back.gamma(), mdp.gamma());
    EXPECT_EQ(back.transitions(), mdp.transitions());
}

TEST(MdpJson, ValidatesOnLoad) {
    Json j = to_json(make_hard_linear_mdp(30, 4, 0.9, 1));
    Json bad = j;
    bad["gamma"] = 1.0;
    EXPECT_THROW(linear_mdp_from_json(bad), std::invalid_argument);
    bad = j;
    bad["mu"][0][0] = 0.5;  // transition rows no longer sum to one
    EXPECT_THROW(linear_mdp_from_json(bad), std::invalid_argument);
    bad = j;
    bad["phi"][0].erase(0);
    EXPECT_THROW(linear_mdp_from_json(bad), std::invalid_argument);
    bad = j;
    bad.erase("psi");
    EXPECT_THROW(linear_mdp_from_json(bad), std::invalid_argument);
    bad = j;
    bad["dim"] = "four";
    EXPECT_THROW(linear_mdp_from_json(bad), std::invalid_argument);
}

TEST(DesignJson, RoundTrip) {
    const LinearMdp mdp = make_hard_linear_mdp(30, 4, 0.9, 2);
    const WeightingFunction f = oracle_weighting(mdp);
    const Design design = frank_wolfe(mdp, f, 0.01);
    const Json j = to_json(design);
    EXPECT_EQ(j.at("support").size(), design.size());
    const Design back = design_from_json(Json::parse(j.dump()), mdp, f);
    ASSERT_EQ(back.size(), design.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        EXPECT_EQ(back.support[k].index, design.support[k].index);
        EXPECT_EQ(back.support[k].mass, design.support[k].mass);
    }
    EXPECT_NEAR(back.g_value, design.g_value, 1e-12);
    EXPECT_EQ(back.iterations, design.iterations);

    Json bad = j;
    bad["support"][0]["mass"] = 5.0;
    EXPECT_THROW(design_from_json(bad, mdp, f), std::invalid_argument);
    bad = j;
    bad["support"][0]["action"] = 30;
    EXPECT_THROW(design_from_json(bad, mdp, f), std::invalid_argument);
}

TEST(ConfigJson, ExperimentFields) {
    const Json j = Json::parse(R"({
        "num_mdps": 4, "master_seed": 9, "eval_every": 3,
        "mdp": {"num_actions": 20, "dim": 5, "gamma": 0.8},
        "algorithms": [
          {"label": "a", "kind": "wls_f1", "K": 10, "M": 5},
          {"kind": "vwls", "K": 4, "M": 2, "K_tilde": 6, "M_tilde": 3, "M_sigma": 50, "eps_fw": 0.1},
          {"label": "ex", "algorithm": "tabular", "K": 7, "mode": "exact"}
        ]})");
    const ExperimentConfig c = experiment_config_from_json(j);
    EXPECT_EQ(c.num_mdps, 4);
    EXPECT_EQ(c.master_seed, 9u);
    EXPECT_EQ(c.eval_every, 3);
    EXPECT_EQ(c.mdp.num_actions, 20);
    EXPECT_EQ(c.mdp.dim, 5);
    EXPECT_EQ(c.mdp.gamma, 0.8);
    ASSERT_EQ(c.algorithms.size(), 3u);
    EXPECT_EQ(c.algorithms[1].label, "vwls");
    EXPECT_EQ(c.algorithms[1].second_iterations, 6);
    EXPECT_EQ(c.algorithms[1].variance_samples, 50);
    EXPECT_EQ(c.algorithms[1].eps_fw, 0.1);
    EXPECT_TRUE(c.algorithms[2].exact);
    EXPECT_EQ(c.algorithms[2].kind, AlgorithmKind::tabular);
}

TEST(ConfigJson, InvalidConfigs) {
    EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"num_mdps": 0})")), std::invalid_argument);
    EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"algorithms": [{"kind": "nope"}]})")),
                 std::invalid_argument);
    EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"algorithms": [{"K": 3}]})")),
                 std::invalid_argument);
    EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"num_mdps": "many"})")), std::invalid_argument);
    EXPECT_THROW(
        experiment_config_from_json(Json::parse(R"({"algorithms": [{"kind": "wls_f1", "mode": "fast"}]})")),
        std::invalid_argument);
    EXPECT_THROW(read_json_file("/nonexistent/config.json"), std::invalid_argument);
}

TEST(ConfigJson, SolveConfigAndResult) {
    const SolveConfig c = solve_config_from_json(
        Json::parse(R"({"kind": "wls_oracle", "K": 20, "M": 10, "seed": 5, "eval_every": 10})"));
    EXPECT_EQ(c.algorithm.kind, AlgorithmKind::wls_oracle);
    EXPECT_EQ(c.mdp_seed, 5u);
    EXPECT_FALSE(c.mdp_file.has_value());
    const std::vector<ExperimentRecord> rows{{5, "wls_oracle", 10, 100, 0.2}, {5, "wls_oracle", 20, 200, 0.1}};
    const Json out = solve_result_json(c, rows);
    EXPECT_EQ(out.at("final_gap").get<double>(), 0.1);
    EXPECT_EQ(out.at("samples_used").get<std::int64_t>(), 200);
    EXPECT_EQ(out.at("iterations").get<int>(), 20);
    EXPECT_EQ(out.at("trace").size(), 2u);
    EXPECT_THROW(solve_config_from_json(Json::parse(R"({"kind": "wls_f1", "K": 0})")), std::invalid_argument);
}
