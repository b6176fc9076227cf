#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace vwmdvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Values over states, length X.
using ValueFunction = Vector;

/// Values over state-action pairs, length X*A, indexed by x*A + a.
using QFunction = Vector;

struct StateAction {
    int state = 0;
    int action = 0;

    friend bool operator==(const StateAction&, const StateAction&) = default;
};

/// Deterministic policy: one action index per state.
struct Policy {
    std::vector<int> action;

    int operator()(int state) const { return action[static_cast<std::size_t>(state)]; }
    std::size_t size() const noexcept { return action.size(); }

    friend bool operator==(const Policy&, const Policy&) = default;
};

/// Strictly positive weights over state-action pairs (same indexing as QFunction).
class WeightingFunction {
public:
    static constexpr double min_weight = 1e-12;

    explicit WeightingFunction(Vector values) : values_(std::move(values)) {
        if (values_.size() == 0) throw std::invalid_argument("weighting function is empty");
        for (Eigen::Index i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i]) || values_[i] < min_weight) {
                throw std::invalid_argument("weighting function entry " + std::to_string(i) +
                                            " is not a finite value >= 1e-12");
            }
        }
    }

    static WeightingFunction constant(Eigen::Index num_pairs, double value = 1.0) {
        return WeightingFunction(Vector::Constant(num_pairs, value));
    }

    const Vector& values() const noexcept { return values_; }
    double operator[](Eigen::Index i) const { return values_[i]; }
    Eigen::Index size() const noexcept { return values_.size(); }

    WeightingFunction scaled(double c) const { return WeightingFunction(values_ * c); }

private:
    Vector values_;
};

}  // namespace vwmdvi
