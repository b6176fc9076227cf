#pragma once

#include <stdexcept>
#include <string>

namespace vwmdvi {

// Argument validation uses std::invalid_argument directly. The types below
// cover failures that depend on the numerical content of the inputs.

/// The randomized hard instance could not produce valid transition
/// probabilities within the resampling budget.
class ConstructionFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The (weighted) feature vectors do not span R^d.
class RankDeficiency : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A design matrix could not be factorized, even after ridging.
class SingularDesign : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Frank-Wolfe hit its iteration cap before reaching the requested accuracy.
class NotConverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The normalized gap is undefined because the optimal value is ~0.
class DegenerateInstance : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A direct solve that cannot fail for gamma < 1 did fail.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vwmdvi
