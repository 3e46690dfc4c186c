#pragma once

#include "qot/herm.hpp"
#include "qot/regularizer.hpp"

#include <cmath>
#include <stdexcept>

namespace qot {

// F^eps(Gamma) = Tr[C Gamma] + eps sum_i phi(lambda_i(Gamma)).
// Eigenvalues in [-1e-10, 0] are clamped to zero (eigensolver roundoff on PSD
// input); anything below -1e-10 is rejected. phi may evaluate to +inf, which
// propagates as the value of the functional.
inline double primal_energy(const HermitianOperator& plan, const HermitianOperator& cost,
                            double epsilon, const Regularizer& reg) {
    if (plan.dim() != cost.dim())
        throw std::invalid_argument("primal_energy: plan/cost dimension mismatch");
    const auto sd = spectral_decompose(plan);
    double phi_sum = 0.0;
    for (Index k = 0; k < sd.eigenvalues.size(); ++k) {
        double lam = sd.eigenvalues(k);
        if (lam < -1e-10)
            throw std::invalid_argument("primal_energy: plan is not PSD within tolerance");
        if (lam < 0.0) lam = 0.0;
        const double p = reg.phi(lam);
        if (std::isnan(p)) throw std::runtime_error("primal_energy: phi returned NaN");
        phi_sum += p;
        if (phi_sum == kInf) return kInf;
    }
    return hs_inner(cost, plan) + epsilon * phi_sum;
}

} // namespace qot
