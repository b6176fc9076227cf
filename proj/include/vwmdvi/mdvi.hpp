#pragma once

#include "vwmdvi/linear_mdp.hpp"
#include "vwmdvi/optimal_design.hpp"
#include "vwmdvi/rng.hpp"
#include "vwmdvi/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vwmdvi {

/// Next-state expectations are either Monte-Carlo means over M generative
/// samples or the exact P v (a noise-free testing oracle).
class SamplerMode {
public:
    enum class Kind { monte_carlo, exact_expectation };

    static SamplerMode monte_carlo(int samples) {
        if (samples < 1) throw std::invalid_argument("SamplerMode: M must be >= 1");
        return SamplerMode(Kind::monte_carlo, samples);
    }
    static SamplerMode exact() { return SamplerMode(Kind::exact_expectation, 0); }

    Kind kind() const noexcept { return kind_; }
    bool is_exact() const noexcept { return kind_ == Kind::exact_expectation; }
    int samples() const noexcept { return samples_; }

private:
    SamplerMode(Kind kind, int samples) : kind_(kind), samples_(samples) {}
    Kind kind_;
    int samples_;
};

struct MdviState {
    int iteration = 0;
    Vector theta;       ///< latest regression solution (empty for tabular runs)
    Vector theta_bar;   ///< theta_k + alpha theta_bar_{k-1}
    QFunction s;        ///< moving average of q-estimates
    ValueFunction w;
    ValueFunction w_prev;
    ValueFunction v;    ///< w - alpha w_prev
    Policy greedy;      ///< greedy w.r.t. s
    std::int64_t samples_used = 0;
    int bound_violations = 0;  ///< iterations with ||v||_inf > 2H + 1
};

/// Called after every update with the state at the new iteration.
using IterationObserver = std::function<void(const MdviState&)>;

struct MdviResult {
    ValueFunction v_final;
    std::vector<Policy> policies;  ///< pi_0 .. pi_K
    MdviState state;
    std::vector<Vector> thetas;    ///< theta_1 .. theta_K (linear solvers only)
};

namespace detail {

inline void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0, 1)");
}

/// (1/M) sum_m v(y_m) with y_m drawn from the pair's own stream.
inline double sampled_expectation(const LinearMdp& mdp, Eigen::Index pair, const ValueFunction& v,
                                  int samples, Generator gen) {
    double total = 0.0;
    for (int m = 0; m < samples; ++m) total += v[mdp.sample_next_state(pair, gen)];
    return total / samples;
}

inline void finish_iteration(const LinearMdp& mdp, MdviState& st) {
    st.w_prev = std::move(st.w);
    st.w = max_over_actions(mdp, st.s);
    st.greedy = greedy_policy(mdp, st.s);
}

inline MdviState initial_state(const LinearMdp& mdp) {
    MdviState st;
    st.theta = Vector::Zero(mdp.dim());
    st.theta_bar = Vector::Zero(mdp.dim());
    st.s = QFunction::Zero(mdp.num_pairs());
    st.w = ValueFunction::Zero(mdp.num_states());
    st.w_prev = ValueFunction::Zero(mdp.num_states());
    st.v = ValueFunction::Zero(mdp.num_states());
    st.greedy = greedy_policy(mdp, st.s);
    return st;
}

inline void refresh_value(const LinearMdp& mdp, double alpha, MdviState& st) {
    st.v = st.w - alpha * st.w_prev;
    if (st.v.cwiseAbs().maxCoeff() > 2.0 * mdp.horizon() + 1.0) ++st.bound_violations;
}

}  // namespace detail

/**
 * Tabular MDVI in the max-reduce limit:
 *   q_{k+1} = r + gamma P_hat_k v_k,  s_{k+1} = q_{k+1} + alpha s_k,
 *   w_{k+1} = max_a s_{k+1},  v_{k+1} = w_{k+1} - alpha w_k.
 */
inline MdviResult tabular_mdvi(const LinearMdp& mdp, double alpha, int iterations,
                               const SamplerMode& mode, const StreamFactory& streams,
                               const IterationObserver& observer = {}) {
    detail::check_alpha(alpha);
    if (iterations < 1) throw std::invalid_argument("tabular_mdvi: K must be >= 1");
    MdviState st = detail::initial_state(mdp);
    st.theta.resize(0);
    st.theta_bar.resize(0);
    MdviResult result;
    result.policies.push_back(st.greedy);
    const Eigen::Index n = mdp.num_pairs();

    for (int k = 0; k < iterations; ++k) {
        detail::refresh_value(mdp, alpha, st);
        QFunction next_v;
        if (mode.is_exact()) {
            next_v = mdp.expect(st.v);
        } else {
            next_v.resize(n);
            for (Eigen::Index i = 0; i < n; ++i)
                next_v[i] = detail::sampled_expectation(
                    mdp, i, st.v, mode.samples(),
                    streams.stream(StreamTag::tabular, static_cast<std::uint64_t>(k),
                                   static_cast<std::uint64_t>(i)));
            st.samples_used += static_cast<std::int64_t>(n) * mode.samples();
        }
        st.s = mdp.rewards() + mdp.gamma() * next_v + alpha * st.s;
        detail::finish_iteration(mdp, st);
        st.iteration = k + 1;
        result.policies.push_back(st.greedy);
        if (observer) observer(st);
    }
    detail::refresh_value(mdp, alpha, st);
    result.v_final = st.v;
    result.state = std::move(st);
    return result;
}

/// Closed-form number of generative-model calls for one WLS-MDVI run.
inline std::int64_t wls_sample_count(std::size_t core_size, int iterations, const SamplerMode& mode) {
    if (mode.is_exact()) return 0;
    return static_cast<std::int64_t>(core_size) * iterations * mode.samples();
}

/**
 * Weighted least-squares MDVI on a precomputed design for f.
 *
 * Each iteration regresses q_hat(y,b) = r(y,b) + gamma P_hat v_k(y,b) on the
 * core set with weights rho / f^2, then updates theta_bar, s, w and v.
 */
inline MdviResult wls_mdvi(const LinearMdp& mdp, double alpha, const WeightingFunction& f,
                           const Design& design, int iterations, const SamplerMode& mode,
                           const StreamFactory& streams, StreamTag tag = StreamTag::wls_first,
                           const IterationObserver& observer = {}) {
    detail::check_alpha(alpha);
    if (iterations < 1) throw std::invalid_argument("wls_mdvi: K must be >= 1");
    const WeightedProjector projector(mdp, design, f);
    const auto& core = projector.core_indices();
    const auto c = static_cast<Eigen::Index>(core.size());

    MdviState st = detail::initial_state(mdp);
    MdviResult result;
    result.policies.push_back(st.greedy);
    result.thetas.reserve(static_cast<std::size_t>(iterations));
    Vector targets(c);

    for (int k = 0; k < iterations; ++k) {
        detail::refresh_value(mdp, alpha, st);
        for (Eigen::Index j = 0; j < c; ++j) {
            const Eigen::Index i = core[static_cast<std::size_t>(j)];
            double next;
            if (mode.is_exact()) {
                next = mdp.transitions().row(i).dot(st.v);
            } else {
                next = detail::sampled_expectation(
                    mdp, i, st.v, mode.samples(),
                    streams.stream(tag, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)));
            }
            targets[j] = mdp.rewards()[i] + mdp.gamma() * next;
        }
        st.samples_used += wls_sample_count(core.size(), 1, mode);
        st.theta = projector.solve(targets);
        st.theta_bar = st.theta + alpha * st.theta_bar;
        st.s = mdp.features() * st.theta_bar;
        detail::finish_iteration(mdp, st);
        st.iteration = k + 1;
        result.thetas.push_back(st.theta);
        result.policies.push_back(st.greedy);
        if (observer) observer(st);
    }
    detail::refresh_value(mdp, alpha, st);
    result.v_final = st.v;
    result.state = std::move(st);
    return result;
}

/// WLS-MDVI that first computes its design for f with Frank-Wolfe.
inline MdviResult wls_mdvi(const LinearMdp& mdp, double alpha, const WeightingFunction& f,
                           int iterations, const SamplerMode& mode, double eps_fw,
                           const StreamFactory& streams, StreamTag tag = StreamTag::wls_first,
                           const IterationObserver& observer = {}) {
    const Design design = frank_wolfe(mdp, f, eps_fw);
    return wls_mdvi(mdp, alpha, f, design, iterations, mode, streams, tag, observer);
}

struct VarianceEstimate {
    Vector omega;
    std::int64_t samples_used = 0;
};

/**
 * Paired-difference variance regression on an unweighted design:
 * Var_hat(x,a) = (1 / 2M) sum_m (v(y_m) - v(z_m))^2 with independent batches
 * y, z, then omega = G^-1 sum rho phi Var_hat.
 */
inline VarianceEstimate variance_estimation(const LinearMdp& mdp, const Design& design,
                                            const ValueFunction& v_sigma, int samples,
                                            const StreamFactory& streams) {
    if (samples < 1) throw std::invalid_argument("variance_estimation: M_sigma must be >= 1");
    if (v_sigma.size() != mdp.num_states() || !v_sigma.allFinite())
        throw std::invalid_argument("variance_estimation: v_sigma must be finite with length X");
    const auto ones = WeightingFunction::constant(mdp.num_pairs());
    const WeightedProjector projector(mdp, design, ones);
    const auto& core = projector.core_indices();
    Vector var_hat(static_cast<Eigen::Index>(core.size()));
    for (std::size_t j = 0; j < core.size(); ++j) {
        const auto i = static_cast<std::uint64_t>(core[j]);
        Generator gy = streams.stream(StreamTag::variance_y, 0, i);
        Generator gz = streams.stream(StreamTag::variance_z, 0, i);
        double total = 0.0;
        for (int m = 0; m < samples; ++m) {
            const double diff = v_sigma[mdp.sample_next_state(core[j], gy)] -
                                v_sigma[mdp.sample_next_state(core[j], gz)];
            total += diff * diff;
        }
        var_hat[static_cast<Eigen::Index>(j)] = total / (2.0 * samples);
    }
    return {projector.solve(var_hat), 2 * static_cast<std::int64_t>(core.size()) * samples};
}

inline VarianceEstimate variance_estimation(const LinearMdp& mdp, const ValueFunction& v_sigma,
                                            int samples, double eps_fw,
                                            const StreamFactory& streams) {
    const Design design = frank_wolfe(mdp, WeightingFunction::constant(mdp.num_pairs()), eps_fw);
    return variance_estimation(mdp, design, v_sigma, samples, streams);
}

/// sigma_tilde = min(sqrt(max(phi^T omega, 0)) + sqrt(H), H).
inline WeightingFunction make_sigma_weighting(const LinearMdp& mdp, const Vector& omega) {
    if (omega.size() != mdp.dim()) throw std::invalid_argument("make_sigma_weighting: omega must have length d");
    const double h = mdp.horizon();
    const Vector var = (mdp.features() * omega).cwiseMax(0.0);
    return WeightingFunction((var.cwiseSqrt().array() + std::sqrt(h)).cwiseMin(h).matrix());
}

struct VwlsParams {
    double alpha = 0.9;
    int iterations = 1;           ///< K, first WLS run
    int samples = 1;              ///< M
    int second_iterations = 1;    ///< K_tilde
    int second_samples = 1;       ///< M_tilde
    int variance_samples = 1;     ///< M_sigma
    double eps_fw = 0.01;
    bool exact = false;           ///< exact expectations in both WLS phases
};

struct TracePoint {
    int phase = 1;           ///< 1 = f = 1 run, 2 = variance estimation, 3 = sigma-weighted run
    int iteration = 0;       ///< global iteration over both WLS runs
    std::int64_t samples_used = 0;
    Policy policy;
};

struct VwlsResult {
    std::vector<Policy> policies;  ///< phase-3 policies
    MdviState state;               ///< phase-3 final state
    std::vector<TracePoint> trace;
    Vector omega;
    Design first_design;
    Design second_design;
    std::int64_t samples_used = 0;
};

/// Closed-form sample total: |C1| K M + 2 |C1| M_sigma + |C_sigma| K~ M~.
inline std::int64_t vwls_sample_count(std::size_t first_core, std::size_t second_core,
                                      const VwlsParams& p) {
    const auto c1 = static_cast<std::int64_t>(first_core);
    const auto c2 = static_cast<std::int64_t>(second_core);
    const std::int64_t wls = p.exact ? 0
                                     : c1 * p.iterations * p.samples +
                                           c2 * p.second_iterations * p.second_samples;
    return wls + 2 * c1 * p.variance_samples;
}

/**
 * Three-phase variance-weighted solver: WLS-MDVI with f = 1, variance
 * regression of its final v, then WLS-MDVI weighted by sigma_tilde.
 * The optional observer sees every iteration of both WLS runs, with
 * cumulative sample counts and global iteration numbers.
 */
inline VwlsResult vwls_mdvi(const LinearMdp& mdp, const VwlsParams& p, const StreamFactory& streams,
                            const std::function<void(const TracePoint&)>& observer = {}) {
    detail::check_alpha(p.alpha);
    if (p.iterations < 1 || p.samples < 1 || p.second_iterations < 1 || p.second_samples < 1 ||
        p.variance_samples < 1)
        throw std::invalid_argument("vwls_mdvi: all counts must be >= 1");

    VwlsResult out;
    auto record = [&](TracePoint tp) {
        if (observer) observer(tp);
        out.trace.push_back(std::move(tp));
    };

    const auto ones = WeightingFunction::constant(mdp.num_pairs());
    out.first_design = frank_wolfe(mdp, ones, p.eps_fw);
    const SamplerMode first_mode = p.exact ? SamplerMode::exact() : SamplerMode::monte_carlo(p.samples);
    MdviResult first = wls_mdvi(mdp, p.alpha, ones, out.first_design, p.iterations, first_mode, streams,
                                StreamTag::wls_first, [&](const MdviState& st) {
                                    record({1, st.iteration, st.samples_used, st.greedy});
                                });

    const VarianceEstimate var =
        variance_estimation(mdp, out.first_design, first.v_final, p.variance_samples, streams);
    out.omega = var.omega;
    const std::int64_t offset = first.state.samples_used + var.samples_used;
    record({2, p.iterations, offset, first.policies.back()});

    const WeightingFunction sigma = make_sigma_weighting(mdp, out.omega);
    out.second_design = frank_wolfe(mdp, sigma, p.eps_fw);
    const SamplerMode second_mode =
        p.exact ? SamplerMode::exact() : SamplerMode::monte_carlo(p.second_samples);
    MdviResult second = wls_mdvi(mdp, p.alpha, sigma, out.second_design, p.second_iterations,
                                 second_mode, streams, StreamTag::wls_second, [&](const MdviState& st) {
                                     record({3, p.iterations + st.iteration, offset + st.samples_used,
                                             st.greedy});
                                 });
    out.samples_used = offset + second.state.samples_used;
    out.policies = std::move(second.policies);
    out.state = std::move(second.state);
    return out;
}

/**
 * Iteration and sample counts shaped like the formal sample-complexity
 * results, with every unspecified constant set to 1 and the failure constant
 * c0 = 8. Heuristic only: the true constants are unknown.
 */
struct TheoremShapedCounts {
    double core_bound = 0;        ///< 4 d log log(d + 4) + 28
    std::int64_t iterations_weighted = 0;   ///< K for the sigma-weighted run
    std::int64_t samples_weighted = 0;      ///< M for the sigma-weighted run
    std::int64_t iterations_unweighted = 0; ///< K for the f = 1 run
    std::int64_t samples_unweighted = 0;    ///< M for the f = 1 run
    std::int64_t samples_variance = 0;      ///< M_sigma
};

inline TheoremShapedCounts theorem_shaped_counts(int dim, double gamma, double epsilon, double delta) {
    if (dim < 1 || !(gamma > 0.0 && gamma < 1.0) || !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("theorem_shaped_counts: need d >= 1, gamma in (0,1), eps > 0, delta in (0,1)");
    constexpr double c0 = 8.0;
    const double d = dim;
    const double h = 1.0 / (1.0 - gamma);
    const double alpha = gamma;
    TheoremShapedCounts out;
    out.core_bound = 4.0 * d * std::log(std::log(d + 4.0)) + 28.0;
    const double cc = out.core_bound;
    const auto k = static_cast<std::int64_t>(std::ceil(3.0 / (1.0 - alpha) * std::log(h) + 1.0));
    const double kd = static_cast<double>(k);
    out.iterations_weighted = k;
    out.iterations_unweighted = k;
    out.samples_weighted = static_cast<std::int64_t>(std::ceil(
        d * h * h / (epsilon * epsilon) *
        std::log(2.0 * c0 * c0 * cc * kd / ((c0 - 5.0) * delta) *
                 std::log2(16.0 * kd * h * h / ((c0 - 5.0) * delta)))));
    out.samples_unweighted = static_cast<std::int64_t>(
        std::ceil(d * h * h / epsilon * std::log(2.0 * c0 * c0 * cc * kd / ((c0 - 5.0) * delta))));
    out.samples_variance = static_cast<std::int64_t>(
        std::ceil(d * h * h * std::log(2.0 * c0 * c0 * cc * kd / ((c0 - 3.0) * delta))));
    return out;
}

}  // namespace vwmdvi
