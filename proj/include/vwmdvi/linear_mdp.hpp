#pragma once

#include "vwmdvi/errors.hpp"
#include "vwmdvi/rng.hpp"
#include "vwmdvi/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vwmdvi {

/**
 * Finite linear MDP: P(.|x,a) = phi(x,a)^T mu and r(x,a) = phi(x,a)^T psi.
 *
 * Features are stored as an (X*A) x d matrix whose row x*A + a is phi(x,a).
 * The reward vector and the (X*A) x X transition table are derived once at
 * construction and validated: rows must be distributions, rewards must lie
 * in [-1, 1] and the features must span R^d.
 */
class LinearMdp {
public:
    static constexpr double negative_tolerance = 1e-12;
    static constexpr double row_sum_tolerance = 1e-9;

    LinearMdp(int num_states, int num_actions, Matrix features, Matrix mu, Vector psi,
              double gamma)
        : num_states_(num_states),
          num_actions_(num_actions),
          gamma_(gamma),
          phi_(std::move(features)),
          mu_(std::move(mu)),
          psi_(std::move(psi)) {
        if (num_states < 1 || num_actions < 1)
            throw std::invalid_argument("LinearMdp: state and action counts must be positive");
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw std::invalid_argument("LinearMdp: gamma must lie in [0, 1)");
        const Eigen::Index n = num_pairs();
        const Eigen::Index d = phi_.cols();
        if (d < 1 || phi_.rows() != n)
            throw std::invalid_argument("LinearMdp: features must have X*A rows and d >= 1 columns");
        if (mu_.rows() != d || mu_.cols() != num_states)
            throw std::invalid_argument("LinearMdp: mu must be d x X");
        if (psi_.size() != d) throw std::invalid_argument("LinearMdp: psi must have length d");
        if (!phi_.allFinite() || !mu_.allFinite() || !psi_.allFinite())
            throw std::invalid_argument("LinearMdp: non-finite parameters");

        rewards_ = phi_ * psi_;
        transitions_ = phi_ * mu_;

        for (Eigen::Index i = 0; i < n; ++i) {
            if (rewards_[i] < -1.0 - 1e-12 || rewards_[i] > 1.0 + 1e-12)
                throw std::invalid_argument("LinearMdp: reward of pair " + std::to_string(i) +
                                            " outside [-1, 1]");
            for (Eigen::Index y = 0; y < num_states; ++y) {
                double& p = transitions_(i, y);
                if (p < -negative_tolerance)
                    throw std::invalid_argument("LinearMdp: negative transition probability at pair " +
                                                std::to_string(i));
                if (p < 0.0) p = 0.0;
            }
            if (std::abs(transitions_.row(i).sum() - 1.0) > row_sum_tolerance)
                throw std::invalid_argument("LinearMdp: transition row " + std::to_string(i) +
                                            " does not sum to 1");
        }

        Eigen::ColPivHouseholderQR<Matrix> qr(phi_);
        qr.setThreshold(1e-10);
        if (qr.rank() != d) throw RankDeficiency("LinearMdp: feature vectors do not span R^d");

        cumulative_.resize(static_cast<std::size_t>(n * num_states));
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index y = 0; y < num_states; ++y) {
                acc += transitions_(i, y);
                cumulative_[static_cast<std::size_t>(i * num_states + y)] = acc;
            }
        }
    }

    /**
     * Builds an MDP from explicit reward and transition tables.
     *
     * Without features the one-hot tabular embedding is used (d = X*A). With
     * features, psi and mu are fitted by least squares and the fit must be
     * exact to 1e-9, otherwise the tables are not linear in those features.
     */
    static LinearMdp from_tables(int num_actions, const Vector& rewards, const Matrix& transitions,
                                 double gamma, const std::optional<Matrix>& features = std::nullopt) {
        if (num_actions < 1) throw std::invalid_argument("from_tables: num_actions must be positive");
        const Eigen::Index n = rewards.size();
        if (n == 0 || n % num_actions != 0 || transitions.rows() != n)
            throw std::invalid_argument("from_tables: table shapes do not match X*A pairs");
        const int num_states = static_cast<int>(n / num_actions);
        if (transitions.cols() != num_states)
            throw std::invalid_argument("from_tables: transitions must be (X*A) x X");

        if (!features) {
            return LinearMdp(num_states, num_actions, Matrix::Identity(n, n), transitions, rewards,
                             gamma);
        }
        const Matrix& phi = *features;
        if (phi.rows() != n) throw std::invalid_argument("from_tables: features must have X*A rows");
        Eigen::ColPivHouseholderQR<Matrix> qr(phi);
        qr.setThreshold(1e-10);
        if (qr.rank() != phi.cols())
            throw RankDeficiency("from_tables: feature vectors do not span R^d");
        Vector psi = qr.solve(rewards);
        Matrix mu = qr.solve(transitions);
        const double reward_residual = (phi * psi - rewards).cwiseAbs().maxCoeff();
        const double transition_residual = (phi * mu - transitions).cwiseAbs().maxCoeff();
        if (reward_residual > 1e-9 || transition_residual > 1e-9)
            throw std::invalid_argument("from_tables: tables are not linear in the supplied features");
        return LinearMdp(num_states, num_actions, phi, std::move(mu), std::move(psi), gamma);
    }

    int num_states() const noexcept { return num_states_; }
    int num_actions() const noexcept { return num_actions_; }
    Eigen::Index num_pairs() const noexcept {
        return static_cast<Eigen::Index>(num_states_) * num_actions_;
    }
    int dim() const noexcept { return static_cast<int>(phi_.cols()); }
    double gamma() const noexcept { return gamma_; }
    /// Effective horizon 1 / (1 - gamma).
    double horizon() const noexcept { return 1.0 / (1.0 - gamma_); }

    Eigen::Index pair_index(int x, int a) const noexcept {
        return static_cast<Eigen::Index>(x) * num_actions_ + a;
    }
    StateAction pair(Eigen::Index index) const noexcept {
        return {static_cast<int>(index / num_actions_), static_cast<int>(index % num_actions_)};
    }

    const Matrix& features() const noexcept { return phi_; }
    auto feature(int x, int a) const { return phi_.row(pair_index(x, a)); }
    const Matrix& mu() const noexcept { return mu_; }
    const Vector& psi() const noexcept { return psi_; }
    const Vector& rewards() const noexcept { return rewards_; }
    double reward(int x, int a) const { return rewards_[pair_index(x, a)]; }
    const Matrix& transitions() const noexcept { return transitions_; }
    double transition(int x, int a, int y) const { return transitions_(pair_index(x, a), y); }

    /// (P v)(x,a) for every pair.
    QFunction expect(const ValueFunction& v) const { return transitions_ * v; }

    /// Inverse-CDF draw of a next state for the pair with the given linear index.
    int sample_next_state(Eigen::Index pair_idx, Generator& gen) const {
        const double u = gen.uniform();
        const auto first = cumulative_.begin() + pair_idx * num_states_;
        const auto last = first + num_states_;
        auto it = std::upper_bound(first, last, u);
        if (it == last) {
            // u landed above a row sum that rounded below 1: take the last reachable state.
            int y = num_states_ - 1;
            while (y > 0 && transitions_(pair_idx, y) <= 0.0) --y;
            return y;
        }
        return static_cast<int>(it - first);
    }

private:
    int num_states_;
    int num_actions_;
    double gamma_;
    Matrix phi_;
    Matrix mu_;
    Vector psi_;
    Vector rewards_;
    Matrix transitions_;
    std::vector<double> cumulative_;
};

/**
 * Randomized two-state hard instance.
 *
 * State 0 is rewarding, state 1 absorbing with zero reward. Action i carries a
 * vector a_i ~ U[0,1]^{d-2}; phi(x0,a) = (1, 0, a), phi(x1,a) = e_2, psi = e_1,
 * mu(x0) = (gamma, 0, 0.01 a_0), mu(x1) = (1 - gamma, 1, -0.01 a_0), so that
 * P(x0 | x0, a) = gamma + 0.01 a_0^T a. Draws whose probabilities leave [0,1]
 * are rejected and redrawn from a fresh stream.
 */
inline LinearMdp make_hard_linear_mdp(int num_actions, int dim, double gamma, std::uint64_t seed) {
    if (dim < 3) throw std::invalid_argument("make_hard_linear_mdp: dim must be at least 3");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("make_hard_linear_mdp: gamma must lie in [0, 1)");
    if (num_actions < 1) throw std::invalid_argument("make_hard_linear_mdp: num_actions must be >= 1");

    constexpr int max_attempts = 1000;
    const int tail = dim - 2;
    const StreamFactory streams(seed);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Generator gen = streams.stream(StreamTag::hard_mdp, static_cast<std::uint64_t>(attempt));
        Matrix actions(num_actions, tail);
        for (int i = 0; i < num_actions; ++i)
            for (int j = 0; j < tail; ++j) actions(i, j) = gen.uniform();

        bool valid = true;
        for (int i = 0; i < num_actions && valid; ++i) {
            const double p = gamma + 0.01 * actions.row(0).dot(actions.row(i));
            valid = p >= 0.0 && p <= 1.0;
        }
        if (!valid) continue;

        Matrix phi = Matrix::Zero(2 * num_actions, dim);
        for (int i = 0; i < num_actions; ++i) {
            phi(i, 0) = 1.0;
            phi.row(i).tail(tail) = actions.row(i);
            phi(num_actions + i, 1) = 1.0;
        }
        Matrix mu = Matrix::Zero(dim, 2);
        mu(0, 0) = gamma;
        mu(0, 1) = 1.0 - gamma;
        mu(1, 1) = 1.0;
        mu.col(0).tail(tail) = 0.01 * actions.row(0).transpose();
        mu.col(1).tail(tail) = -0.01 * actions.row(0).transpose();
        Vector psi = Vector::Zero(dim);
        psi[0] = 1.0;
        try {
            return LinearMdp(2, num_actions, std::move(phi), std::move(mu), std::move(psi), gamma);
        } catch (const RankDeficiency&) {
            // Too few actions to span the tail coordinates: nothing a redraw can fix
            // once num_actions < dim - 1, so surface it immediately.
            if (num_actions < dim - 1) throw;
        }
    }
    throw ConstructionFailure("make_hard_linear_mdp: no valid instance after 1000 attempts");
}

/// `count` independent next-state draws from P(.|x,a).
inline std::vector<int> sample_next_states(const LinearMdp& mdp, int x, int a, int count,
                                           Generator& gen) {
    if (x < 0 || x >= mdp.num_states() || a < 0 || a >= mdp.num_actions())
        throw std::out_of_range("sample_next_states: state or action out of range");
    if (count < 1) throw std::invalid_argument("sample_next_states: count must be >= 1");
    std::vector<int> out(static_cast<std::size_t>(count));
    const Eigen::Index idx = mdp.pair_index(x, a);
    for (auto& y : out) y = mdp.sample_next_state(idx, gen);
    return out;
}

/// max_a q(x,a) for each state.
inline ValueFunction max_over_actions(const LinearMdp& mdp, const QFunction& q) {
    ValueFunction v(mdp.num_states());
    for (int x = 0; x < mdp.num_states(); ++x)
        v[x] = q.segment(mdp.pair_index(x, 0), mdp.num_actions()).maxCoeff();
    return v;
}

/// Greedy policy with lowest-index tie breaking.
inline Policy greedy_policy(const LinearMdp& mdp, const QFunction& q) {
    Policy pi;
    pi.action.resize(static_cast<std::size_t>(mdp.num_states()));
    for (int x = 0; x < mdp.num_states(); ++x) {
        int best = 0;
        double best_value = q[mdp.pair_index(x, 0)];
        for (int a = 1; a < mdp.num_actions(); ++a) {
            const double value = q[mdp.pair_index(x, a)];
            if (value > best_value) {
                best_value = value;
                best = a;
            }
        }
        pi.action[static_cast<std::size_t>(x)] = best;
    }
    return pi;
}

/// (pi q)(x) = q(x, pi(x)).
inline ValueFunction apply_policy(const LinearMdp& mdp, const Policy& pi, const QFunction& q) {
    ValueFunction v(mdp.num_states());
    for (int x = 0; x < mdp.num_states(); ++x) v[x] = q[mdp.pair_index(x, pi(x))];
    return v;
}

inline void check_policy(const LinearMdp& mdp, const Policy& pi) {
    if (pi.size() != static_cast<std::size_t>(mdp.num_states()))
        throw std::invalid_argument("policy length does not match the number of states");
    for (int a : pi.action)
        if (a < 0 || a >= mdp.num_actions())
            throw std::invalid_argument("policy contains an invalid action index");
}

struct OptimalSolution {
    ValueFunction values;
    QFunction q;
    Policy policy;
};

/**
 * Value iteration on the exact tables. Stops once the sup-norm change drops
 * below tol (1 - gamma) / (2 gamma), which bounds the Bellman residual of the
 * returned values by tol.
 */
inline OptimalSolution exact_optimal_values(const LinearMdp& mdp, double tol = 1e-10) {
    if (!(tol > 0.0)) throw std::invalid_argument("exact_optimal_values: tol must be positive");
    const double gamma = mdp.gamma();
    ValueFunction v = ValueFunction::Zero(mdp.num_states());
    QFunction q = mdp.rewards();
    if (gamma > 0.0) {
        const double threshold = tol * (1.0 - gamma) / (2.0 * gamma);
        for (;;) {
            q = mdp.rewards() + gamma * mdp.expect(v);
            ValueFunction next = max_over_actions(mdp, q);
            const double change = (next - v).cwiseAbs().maxCoeff();
            v = std::move(next);
            if (change <= threshold) break;
        }
        q = mdp.rewards() + gamma * mdp.expect(v);
    }
    v = max_over_actions(mdp, q);
    Policy pi = greedy_policy(mdp, q);
    return {std::move(v), std::move(q), std::move(pi)};
}

/// Row-stochastic X x X matrix of the policy's state transitions.
inline Matrix policy_transition_matrix(const LinearMdp& mdp, const Policy& pi) {
    Matrix p(mdp.num_states(), mdp.num_states());
    for (int x = 0; x < mdp.num_states(); ++x) p.row(x) = mdp.transitions().row(mdp.pair_index(x, pi(x)));
    return p;
}

/// Exact v_pi from (I - gamma P_pi) v = r_pi.
inline ValueFunction evaluate_policy(const LinearMdp& mdp, const Policy& pi) {
    check_policy(mdp, pi);
    const int n = mdp.num_states();
    Matrix system = Matrix::Identity(n, n) - mdp.gamma() * policy_transition_matrix(mdp, pi);
    Vector r_pi = apply_policy(mdp, pi, mdp.rewards());
    Eigen::FullPivLU<Matrix> lu(system);
    if (!lu.isInvertible()) throw NumericalFailure("evaluate_policy: singular policy system");
    ValueFunction v = lu.solve(r_pi);
    const double residual = (system * v - r_pi).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-9)) throw NumericalFailure("evaluate_policy: residual above 1e-9");
    return v;
}

/// q_pi = r + gamma P v_pi.
inline QFunction evaluate_policy_q(const LinearMdp& mdp, const Policy& pi) {
    return mdp.rewards() + mdp.gamma() * mdp.expect(evaluate_policy(mdp, pi));
}

/// Value of the non-stationary policy pi_k T_{pi_{k-1}} ... T_{pi_1} q_{pi_0}.
inline ValueFunction evaluate_nonstationary(const LinearMdp& mdp, std::span<const Policy> policies) {
    if (policies.empty()) throw std::invalid_argument("evaluate_nonstationary: empty policy list");
    QFunction q = evaluate_policy_q(mdp, policies.front());
    if (policies.size() == 1) return apply_policy(mdp, policies.front(), q);
    for (std::size_t j = 1; j + 1 < policies.size(); ++j) {
        check_policy(mdp, policies[j]);
        q = mdp.rewards() + mdp.gamma() * mdp.expect(apply_policy(mdp, policies[j], q));
    }
    check_policy(mdp, policies.back());
    return apply_policy(mdp, policies.back(), q);
}

/// Var(v)(x,a) = (P v^2)(x,a) - (P v)^2(x,a), clamped at zero.
inline QFunction variance_of_value(const LinearMdp& mdp, const ValueFunction& v) {
    if (!v.allFinite()) throw std::invalid_argument("variance_of_value: non-finite values");
    const QFunction mean = mdp.expect(v);
    const QFunction second = mdp.expect(v.array().square().matrix());
    return (second.array() - mean.array().square()).cwiseMax(0.0).matrix();
}

/// f* = min(sigma(v*) + sqrt(H), H).
inline WeightingFunction oracle_weighting(const LinearMdp& mdp, const ValueFunction& v_star) {
    const double h = mdp.horizon();
    const Vector sigma = variance_of_value(mdp, v_star).cwiseSqrt();
    return WeightingFunction((sigma.array() + std::sqrt(h)).cwiseMin(h).matrix());
}

inline WeightingFunction oracle_weighting(const LinearMdp& mdp) {
    return oracle_weighting(mdp, exact_optimal_values(mdp, 1e-10).values);
}

/// ||v* - v_pi||_inf / ||v*||_inf with v* supplied by the caller.
inline double normalized_gap(const LinearMdp& mdp, const ValueFunction& v_star, const Policy& pi) {
    const double scale = v_star.cwiseAbs().maxCoeff();
    if (!(scale > 1e-12)) throw DegenerateInstance("normalized_gap: ||v*|| is zero");
    return (v_star - evaluate_policy(mdp, pi)).cwiseAbs().maxCoeff() / scale;
}

inline double normalized_gap(const LinearMdp& mdp, const Policy& pi) {
    return normalized_gap(mdp, exact_optimal_values(mdp, 1e-10).values, pi);
}

}  // namespace vwmdvi
