#pragma once

#include "vwmdvi/harness.hpp"
#include "vwmdvi/linear_mdp.hpp"
#include "vwmdvi/optimal_design.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vwmdvi {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// LinearMdp: {num_states, num_actions, dim, gamma, phi[X][A][d], mu[d][X], psi[d]}

inline Json to_json(const LinearMdp& mdp) {
    Json phi = Json::array();
    for (int x = 0; x < mdp.num_states(); ++x) {
        Json per_state = Json::array();
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const auto row = mdp.feature(x, a);
            per_state.push_back(std::vector<double>(row.begin(), row.end()));
        }
        phi.push_back(std::move(per_state));
    }
    Json mu = Json::array();
    for (int i = 0; i < mdp.dim(); ++i) {
        const auto row = mdp.mu().row(i);
        mu.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return Json{{"num_states", mdp.num_states()},
                {"num_actions", mdp.num_actions()},
                {"dim", mdp.dim()},
                {"gamma", mdp.gamma()},
                {"phi", std::move(phi)},
                {"mu", std::move(mu)},
                {"psi", std::vector<double>(mdp.psi().begin(), mdp.psi().end())}};
}

/// Parses and validates; derived tables are recomputed by the constructor.
inline LinearMdp linear_mdp_from_json(const Json& j) {
    try {
        const int x_count = j.at("num_states").get<int>();
        const int a_count = j.at("num_actions").get<int>();
        const int d = j.at("dim").get<int>();
        const double gamma = j.at("gamma").get<double>();
        if (x_count < 1 || a_count < 1 || d < 1)
            throw std::invalid_argument("num_states, num_actions and dim must be positive");
        const Json& phi_j = j.at("phi");
        if (phi_j.size() != static_cast<std::size_t>(x_count))
            throw std::invalid_argument("phi must have num_states entries");
        Matrix phi(static_cast<Eigen::Index>(x_count) * a_count, d);
        for (int x = 0; x < x_count; ++x) {
            if (phi_j[x].size() != static_cast<std::size_t>(a_count))
                throw std::invalid_argument("phi[x] must have num_actions entries");
            for (int a = 0; a < a_count; ++a) {
                const auto row = phi_j[x][a].get<std::vector<double>>();
                if (row.size() != static_cast<std::size_t>(d))
                    throw std::invalid_argument("phi[x][a] must have dim entries");
                for (int i = 0; i < d; ++i) phi(static_cast<Eigen::Index>(x) * a_count + a, i) = row[i];
            }
        }
        const Json& mu_j = j.at("mu");
        if (mu_j.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("mu must have dim rows");
        Matrix mu(d, x_count);
        for (int i = 0; i < d; ++i) {
            const auto row = mu_j[i].get<std::vector<double>>();
            if (row.size() != static_cast<std::size_t>(x_count))
                throw std::invalid_argument("mu rows must have num_states entries");
            for (int y = 0; y < x_count; ++y) mu(i, y) = row[y];
        }
        const auto psi_v = j.at("psi").get<std::vector<double>>();
        if (psi_v.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("psi must have dim entries");
        Vector psi = Eigen::Map<const Vector>(psi_v.data(), d);
        return LinearMdp(x_count, a_count, std::move(phi), std::move(mu), std::move(psi), gamma);
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("malformed MDP document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Design: {support: [{state, action, mass}], design_matrix, g_value, eps_fw}

inline Json to_json(const Design& design) {
    Json support = Json::array();
    for (const auto& p : design.support)
        support.push_back({{"state", p.pair.state}, {"action", p.pair.action}, {"mass", p.mass}});
    Json matrix = Json::array();
    for (Eigen::Index i = 0; i < design.design_matrix.rows(); ++i) {
        const auto row = design.design_matrix.row(i);
        matrix.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return Json{{"support", std::move(support)},
                {"design_matrix", std::move(matrix)},
                {"g_value", design.g_value},
                {"eps_fw", design.eps_fw},
                {"iterations", design.iterations}};
}

/// Reads a design back against the MDP it was computed for and the weighting f.
inline Design design_from_json(const Json& j, const LinearMdp& mdp, const WeightingFunction& f) {
    Vector rho = Vector::Zero(mdp.num_pairs());
    try {
        for (const auto& p : j.at("support")) {
            const int x = p.at("state").get<int>();
            const int a = p.at("action").get<int>();
            if (x < 0 || x >= mdp.num_states() || a < 0 || a >= mdp.num_actions())
                throw std::invalid_argument("design support point out of range");
            rho[mdp.pair_index(x, a)] = p.at("mass").get<double>();
        }
        if ((rho.array() < 0.0).any() || std::abs(rho.sum() - 1.0) > 1e-9)
            throw std::invalid_argument("design masses must be non-negative and sum to 1");
        Design d = detail::assemble(mdp, detail::weighted_features(mdp, f), rho, j.value("eps_fw", 0.0));
        d.iterations = j.value("iterations", 0);
        return d;
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("malformed design document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Algorithm and experiment configuration

inline AlgorithmSpec algorithm_spec_from_json(const Json& j, const std::string& default_label = {}) {
    AlgorithmSpec a;
    a.kind = parse_algorithm_kind(j.contains("kind") ? j.at("kind").get<std::string>()
                                                     : j.at("algorithm").get<std::string>());
    a.label = j.value("label", default_label.empty() ? to_string(a.kind) : default_label);
    a.alpha = j.value("alpha", a.alpha);
    a.iterations = j.value("K", a.iterations);
    a.samples = j.value("M", a.samples);
    a.second_iterations = j.value("K_tilde", a.second_iterations);
    a.second_samples = j.value("M_tilde", a.second_samples);
    a.variance_samples = j.value("M_sigma", a.variance_samples);
    a.eps_fw = j.value("eps_fw", a.eps_fw);
    const std::string mode = j.value("mode", std::string("monte_carlo"));
    if (mode == "exact" || mode == "exact_expectation") {
        a.exact = true;
    } else if (mode != "monte_carlo") {
        throw std::invalid_argument("mode must be 'monte_carlo' or 'exact'");
    }
    return a;
}

inline ExperimentConfig experiment_config_from_json(const Json& j) {
    try {
        ExperimentConfig c;
        c.num_mdps = j.value("num_mdps", c.num_mdps);
        if (j.contains("mdp")) {
            const Json& m = j.at("mdp");
            c.mdp.num_actions = m.value("num_actions", c.mdp.num_actions);
            c.mdp.dim = m.value("dim", c.mdp.dim);
            c.mdp.gamma = m.value("gamma", c.mdp.gamma);
        }
        for (const auto& a : j.value("algorithms", Json::array())) c.algorithms.push_back(algorithm_spec_from_json(a));
        c.master_seed = j.value("master_seed", std::uint64_t{0});
        c.eval_every = j.value("eval_every", c.eval_every);
        c.output_path = j.value("output_path", std::string{});
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("malformed experiment config: ") + e.what());
    }
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument("'" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Single solver runs

struct SolveConfig {
    AlgorithmSpec algorithm;
    std::uint64_t seed = 0;
    int eval_every = 10;
    std::optional<std::string> mdp_file;  ///< explicit MDP document instead of the hard instance
    HardMdpSpec hard;
    std::uint64_t mdp_seed = 0;
};

inline SolveConfig solve_config_from_json(const Json& j) {
    try {
        SolveConfig c;
        c.algorithm = algorithm_spec_from_json(j);
        c.seed = j.value("seed", std::uint64_t{0});
        c.eval_every = j.value("eval_every", c.eval_every);
        c.mdp_seed = c.seed;
        if (j.contains("mdp_file")) c.mdp_file = j.at("mdp_file").get<std::string>();
        if (j.contains("mdp")) {
            const Json& m = j.at("mdp");
            c.hard.num_actions = m.value("num_actions", c.hard.num_actions);
            c.hard.dim = m.value("dim", c.hard.dim);
            c.hard.gamma = m.value("gamma", c.hard.gamma);
            c.mdp_seed = m.value("seed", c.seed);
        }
        if (c.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
        ExperimentConfig check;
        check.num_mdps = 1;
        check.mdp = c.hard;
        check.algorithms = {c.algorithm};
        check.validate();
        return c;
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("malformed solve config: ") + e.what());
    }
}

inline Json solve_result_json(const SolveConfig& c, const std::vector<ExperimentRecord>& rows) {
    Json trace = Json::array();
    for (const auto& r : rows)
        trace.push_back({{"iteration", r.iteration}, {"samples_used", r.samples_used},
                         {"normalized_gap", r.normalized_gap}});
    const ExperimentRecord& last = rows.back();
    return Json{{"algorithm", c.algorithm.label},
                {"seed", c.seed},
                {"final_gap", last.normalized_gap},
                {"samples_used", last.samples_used},
                {"iterations", last.iteration},
                {"trace", std::move(trace)}};
}

}  // namespace vwmdvi
