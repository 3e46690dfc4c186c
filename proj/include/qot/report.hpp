#pragma once

#include "qot/herm.hpp"

#include <optional>
#include <vector>

namespace qot {

struct DualPotentials {
    HermitianOperator U;
    HermitianOperator V;
};

struct IterationRecord {
    int iteration = 0;
    double dual_value = 0.0;
    double residual1 = 0.0;
    double residual2 = 0.0;
    double lambda_shift = 0.0;
    int inner_iterations = 0;
};

// Outcome of one dual solve. The plan is present whenever the regularizer is
// C1; primal_value is filled by callers that also run the primal oracle.
struct SolveReport {
    DualPotentials potentials;
    std::optional<HermitianOperator> plan;
    double dual_value = 0.0;
    std::optional<double> primal_value;
    double residual1 = 0.0;
    double residual2 = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<IterationRecord> history;
};

} // namespace qot
