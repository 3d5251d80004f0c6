#pragma once

#include <functional>
#include <vector>

namespace dashlab {

// Objective returning f(x) and writing the gradient into grad (same length as x).
using GradientObjective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct BoxMinimizerOptions {
    int maxIterations = 200;
    double gradientTolerance = 1e-6;  // on the projected gradient, infinity norm
    double valueTolerance = 1e-10;    // relative decrease between iterations
};

struct MinimizeResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Projected BFGS for box-constrained problems of small dimension.
//
// Variables sitting on a bound with the gradient pushing outward are frozen for
// the step; the free block follows the quasi-Newton direction and the step is
// projected back onto the box with Armijo backtracking. Non-finite objective
// values are treated as infeasible and trigger further backtracking.
MinimizeResult minimizeInBox(const GradientObjective& objective, std::vector<double> start,
                             const std::vector<double>& lower, const std::vector<double>& upper,
                             const BoxMinimizerOptions& options = {});

// Central finite differences around a value-only objective.
GradientObjective withNumericGradient(std::function<double(const std::vector<double>&)> f,
                                      double relativeStep = 1e-6);

struct ScalarMinimum {
    double x;
    double value;
    int evaluations;
};

// Golden-section search on [lo, hi] until the bracket is narrower than tolerance.
ScalarMinimum goldenSectionMinimize(const std::function<double(double)>& f, double lo, double hi,
                                    double tolerance);

}  // namespace dashlab
