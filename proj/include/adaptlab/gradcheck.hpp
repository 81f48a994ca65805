#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adaptlab/tape.hpp"

namespace adaptlab {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    // Location of the worst (or first non-finite) coordinate.
    int param_index = -1;
    i64 coord = -1;
    std::string note;
};

// Compares analytic gradients of a scalar-valued function against central
// finite differences, coordinate by coordinate over every given parameter.
// f must rebuild its forward pass from the current parameter values on each
// call and be deterministic given fixed random state. Relative error uses
// max(1, |analytic|, |numeric|) as the denominator.
GradCheckReport gradient_check(const std::function<TensorRef(Tape&)>& f,
                               const std::vector<TensorRef>& params, double eps,
                               double tol);

}  // namespace adaptlab
