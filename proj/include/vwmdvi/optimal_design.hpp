#pragma once

#include "vwmdvi/errors.hpp"
#include "vwmdvi/linear_mdp.hpp"
#include "vwmdvi/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace vwmdvi {

struct DesignPoint {
    StateAction pair;
    Eigen::Index index = 0;  ///< linear pair index x*A + a
    double mass = 0.0;
};

/**
 * A distribution over state-action pairs together with its weighted design
 * matrix G_f = sum rho phi phi^T / f^2 and g_f(rho) = max phi^T G_f^-1 phi / f^2.
 * The support is kept sorted by pair index and holds only positive masses.
 */
struct Design {
    std::vector<DesignPoint> support;
    Matrix design_matrix;
    double g_value = 0.0;
    double eps_fw = 0.0;
    int iterations = 0;                ///< Frank-Wolfe steps taken
    std::vector<double> delta_trace;   ///< delta(rho) before each step and at exit
    std::vector<double> logdet_trace;  ///< log det G_f alongside delta_trace

    std::vector<StateAction> core_set() const {
        std::vector<StateAction> out;
        out.reserve(support.size());
        for (const auto& p : support) out.push_back(p.pair);
        return out;
    }

    std::size_t size() const noexcept { return support.size(); }
};

namespace detail {

/// Rows phi(x,a) / f(x,a).
inline Matrix weighted_features(const LinearMdp& mdp, const WeightingFunction& f) {
    if (f.size() != mdp.num_pairs())
        throw std::invalid_argument("weighting function size does not match the number of pairs");
    return f.values().cwiseInverse().asDiagonal() * mdp.features();
}

/// Cholesky of a design matrix with a 1e-10 trace/d ridge as the only fallback.
class DesignFactor {
public:
    explicit DesignFactor(const Matrix& g) {
        llt_.compute(g);
        if (healthy(g)) return;
        const double ridge = 1e-10 * g.trace() / static_cast<double>(g.rows());
        Matrix ridged = g;
        ridged.diagonal().array() += ridge;
        llt_.compute(ridged);
        if (!healthy(ridged)) throw SingularDesign("design matrix is singular");
    }

    Vector solve(const Vector& b) const { return llt_.solve(b); }
    Matrix solve(const Matrix& b) const { return llt_.solve(b); }

    double log_det() const { return 2.0 * llt_.matrixLLT().diagonal().array().log().sum(); }

    /// phi_i^T G^-1 phi_i for every row of `rows`.
    Vector leverages(const Matrix& rows) const {
        Matrix w = llt_.matrixL().solve(rows.transpose());
        return w.colwise().squaredNorm().transpose();
    }

private:
    bool healthy(const Matrix& g) const {
        if (llt_.info() != Eigen::Success || !(g.trace() > 0.0)) return false;
        const double smallest = llt_.matrixLLT().diagonal().cwiseAbs2().minCoeff();
        return smallest > 1e-12 * std::max(1.0, g.trace() / static_cast<double>(g.rows())) &&
               std::isfinite(smallest);
    }

    Eigen::LLT<Matrix> llt_;
};

inline Matrix design_matrix_from_masses(const Matrix& phi_f, const Vector& masses) {
    return phi_f.transpose() * masses.asDiagonal() * phi_f;
}

inline Eigen::Index argmax_lowest(const Vector& values) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

inline Design assemble(const LinearMdp& mdp, const Matrix& phi_f, const Vector& masses,
                       double eps_fw) {
    Design design;
    for (Eigen::Index i = 0; i < masses.size(); ++i)
        if (masses[i] > 0.0) design.support.push_back({mdp.pair(i), i, masses[i]});
    design.design_matrix = design_matrix_from_masses(phi_f, masses);
    // Symmetrize away rounding so downstream consumers see an exactly symmetric matrix.
    design.design_matrix = 0.5 * (design.design_matrix + design.design_matrix.transpose()).eval();
    DesignFactor factor(design.design_matrix);
    design.g_value = factor.leverages(phi_f).maxCoeff();
    design.eps_fw = eps_fw;
    return design;
}

inline Vector masses_of(const Design& design, Eigen::Index num_pairs) {
    Vector rho = Vector::Zero(num_pairs);
    for (const auto& p : design.support) rho[p.index] = p.mass;
    return rho;
}

}  // namespace detail

/**
 * Kumar-Yildirim style starting design on phi_f = phi / f.
 *
 * The sweep runs over the symmetrized point set {+phi_f, -phi_f}, which has
 * the same G-optimal designs as phi_f. There, the argmax and argmin of
 * c_j^T phi are mirror images of the pair maximizing |c_j^T phi_f|, so each
 * sweep step selects one pair. c_0 = e_1 and every later direction is the
 * canonical vector with the largest component orthogonal to the selections
 * so far (lowest index on ties), normalized. Equal mass goes on the distinct
 * selected pairs.
 */
inline Design initialize_design(const LinearMdp& mdp, const WeightingFunction& f) {
    const Matrix phi_f = detail::weighted_features(mdp, f);
    const int d = mdp.dim();
    const double scale = phi_f.rowwise().norm().maxCoeff();
    if (!(scale > 0.0)) throw RankDeficiency("initialize_design: all features are zero");

    Matrix basis(d, 0);  // orthonormal basis of the span of selected points
    std::vector<Eigen::Index> selected;
    for (int j = 0; j < d; ++j) {
        // Completion direction: canonical vector with the largest residual.
        Vector c;
        double best_norm = -1.0;
        for (int i = 0; i < d; ++i) {
            Vector e = Vector::Unit(d, i);
            Vector r = e - basis * (basis.transpose() * e);
            const double n = r.norm();
            if (n > best_norm + 1e-12) {
                best_norm = n;
                c = r / n;
            }
        }
        const Vector scores = phi_f * c;
        const Eigen::Index pick = detail::argmax_lowest(scores.cwiseAbs());
        if (!(std::abs(scores[pick]) > 1e-10 * scale))
            throw RankDeficiency("initialize_design: weighted features do not span R^d");
        selected.push_back(pick);

        Vector y = phi_f.row(pick).transpose();
        for (int pass = 0; pass < 2; ++pass) y -= basis * (basis.transpose() * y);
        basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
        basis.col(basis.cols() - 1) = y.normalized();
    }

    std::sort(selected.begin(), selected.end());
    selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
    Vector rho = Vector::Zero(mdp.num_pairs());
    for (auto i : selected) rho[i] = 1.0 / static_cast<double>(selected.size());
    return detail::assemble(mdp, phi_f, rho, 0.0);
}

/// Iteration cap used when the caller passes none: 100 d log(d+1) / eps, at most 1e6.
inline int default_frank_wolfe_iterations(int dim, double eps_fw) {
    const double cap = 100.0 * dim * std::log(dim + 1.0) / eps_fw;
    return static_cast<int>(std::clamp(std::ceil(cap), 1.0, 1e6));
}

/**
 * Frank-Wolfe (Fedorov-Wynn step) for the weighted G-optimal design over the
 * finite pair grid, followed by core-set pruning.
 *
 * Stops when delta = (max omega - d) / d <= eps_fw, so g_f <= d (1 + eps_fw)
 * before pruning. Pruning keeps support points with
 * omega >= d (1 + delta d / 2 - sqrt(delta (d - 1) + delta^2 d^2 / 4)) and
 * renormalizes the kept mass.
 */
inline Design frank_wolfe(const LinearMdp& mdp, const WeightingFunction& f, double eps_fw,
                          std::optional<int> max_iters = std::nullopt) {
    if (!(eps_fw > 0.0)) throw std::invalid_argument("frank_wolfe: eps_fw must be positive");
    const int d = mdp.dim();
    const int cap = max_iters.value_or(default_frank_wolfe_iterations(d, eps_fw));
    if (cap < 1) throw std::invalid_argument("frank_wolfe: max_iters must be >= 1");

    const Matrix phi_f = detail::weighted_features(mdp, f);
    Vector rho = detail::masses_of(initialize_design(mdp, f), mdp.num_pairs());
    const double dd = static_cast<double>(d);

    Design out;
    Vector omega;
    double delta = 0.0;
    int steps = 0;
    for (;;) {
        detail::DesignFactor factor(detail::design_matrix_from_masses(phi_f, rho));
        omega = factor.leverages(phi_f);
        const Eigen::Index top = detail::argmax_lowest(omega);
        delta = (omega[top] - dd) / dd;
        out.delta_trace.push_back(delta);
        out.logdet_trace.push_back(factor.log_det());
        if (delta <= eps_fw) break;
        if (steps >= cap)
            throw NotConverged("frank_wolfe: iteration cap reached with delta = " +
                               std::to_string(delta));
        if (d == 1) {
            // One dimension: all mass on the largest |phi_f| is exactly optimal.
            rho.setZero();
            rho[top] = 1.0;
            ++steps;
            continue;
        }
        const double lambda = (omega[top] - dd) / ((dd - 1.0) * omega[top]);
        if (!(lambda > 0.0)) break;
        rho[top] += lambda;
        rho /= (1.0 + lambda);
        ++steps;
    }

    const double dl = std::max(delta, 0.0);
    const double threshold =
        dd * (1.0 + dl * dd / 2.0 - std::sqrt(dl * (dd - 1.0) + dl * dl * dd * dd / 4.0));
    Vector pruned = Vector::Zero(rho.size());
    for (Eigen::Index i = 0; i < rho.size(); ++i)
        if (rho[i] > 0.0 && omega[i] >= threshold - 1e-9 * dd) pruned[i] = rho[i];

    Design design;
    bool use_pruned = pruned.sum() > 0.0;
    if (use_pruned) {
        pruned /= pruned.sum();
        try {
            design = detail::assemble(mdp, phi_f, pruned, eps_fw);
        } catch (const SingularDesign&) {
            use_pruned = false;
        }
    }
    if (!use_pruned) design = detail::assemble(mdp, phi_f, rho / rho.sum(), eps_fw);
    design.iterations = steps;
    design.delta_trace = std::move(out.delta_trace);
    design.logdet_trace = std::move(out.logdet_trace);
    return design;
}

/// g_f(rho) over the full grid, with G_f rebuilt from the design's masses and `f`.
inline double g_value(const LinearMdp& mdp, const WeightingFunction& f, const Design& design) {
    const Matrix phi_f = detail::weighted_features(mdp, f);
    detail::DesignFactor factor(
        detail::design_matrix_from_masses(phi_f, detail::masses_of(design, mdp.num_pairs())));
    return factor.leverages(phi_f).maxCoeff();
}

/**
 * Precomputed weighted least-squares map z -> Z(f, z) = G_f^-1 sum rho phi z / f^2
 * for a fixed design, as a d x |C| matrix applied to core-set targets.
 */
class WeightedProjector {
public:
    WeightedProjector(const LinearMdp& mdp, const Design& design, const WeightingFunction& f) {
        if (design.support.empty()) throw std::invalid_argument("WeightedProjector: empty design");
        if (f.size() != mdp.num_pairs())
            throw std::invalid_argument("WeightedProjector: weighting size mismatch");
        const auto c = static_cast<Eigen::Index>(design.support.size());
        Matrix rows(c, mdp.dim());  // rho phi / f^2 per core point
        Matrix g = Matrix::Zero(mdp.dim(), mdp.dim());
        indices_.reserve(design.support.size());
        for (Eigen::Index k = 0; k < c; ++k) {
            const auto& p = design.support[static_cast<std::size_t>(k)];
            const double w = f[p.index];
            const Vector phi = mdp.features().row(p.index).transpose();
            rows.row(k) = (p.mass / (w * w)) * phi.transpose();
            g.noalias() += (p.mass / (w * w)) * phi * phi.transpose();
            indices_.push_back(p.index);
        }
        map_ = detail::DesignFactor(g).solve(Matrix(rows.transpose()));
    }

    /// z aligned with the design support order.
    Vector solve(const Vector& z_core) const {
        if (z_core.size() != map_.cols())
            throw std::invalid_argument("WeightedProjector: target size does not match core set");
        return map_ * z_core;
    }

    /// Reads the core-set entries out of a full Q-table.
    Vector solve_full(const QFunction& z) const {
        Vector core(static_cast<Eigen::Index>(indices_.size()));
        for (std::size_t k = 0; k < indices_.size(); ++k) core[static_cast<Eigen::Index>(k)] = z[indices_[k]];
        return solve(core);
    }

    const std::vector<Eigen::Index>& core_indices() const noexcept { return indices_; }
    const Matrix& map() const noexcept { return map_; }

private:
    std::vector<Eigen::Index> indices_;
    Matrix map_;
};

/// Z(f, z) for targets given on the core set, in design support order.
inline Vector weighted_ls_solve(const LinearMdp& mdp, const Design& design,
                                const WeightingFunction& f, const Vector& z_core) {
    return WeightedProjector(mdp, design, f).solve(z_core);
}

}  // namespace vwmdvi
