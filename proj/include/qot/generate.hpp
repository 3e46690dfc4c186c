#pragma once

#include "qot/dual_balanced.hpp"
#include "qot/dual_unbalanced.hpp"
#include "qot/herm.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace qot {

// Deterministic random source. Gaussians come from Box-Muller over raw
// mt19937_64 bits, so streams are reproducible across standard libraries
// (std::normal_distribution is not pinned by the standard).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { // (0, 1)
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform(), u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ------------------------------ Random operators ----------------------------

// i.i.d. standard normal entries (complex off the diagonal), symmetrized.
inline HermitianOperator random_hermitian(Rng& rng, Index d, bool unit_sup_norm = true) {
    CMatrix g(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
    HermitianOperator h = hermitian_project(g);
    if (unit_sup_norm) {
        const double s = sup_norm(h);
        if (s > 0.0) h = h * (1.0 / s);
    }
    return h;
}

// G G^dag normalized to unit trace, with lambda_1 floored by mixing with the
// maximally mixed state; keeps generated marginals well inside the
// trivial-kernel assumption.
inline HermitianOperator random_density(Rng& rng, Index d) {
    CMatrix g(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
    CMatrix w = g * g.adjoint();
    w /= w.trace().real();
    HermitianOperator rho = hermitian_project(w);
    const double floor = std::min(0.05, 0.5 / static_cast<double>(d));
    const double lam1 = smallest_eigenvalue(rho);
    if (lam1 < floor) {
        const double alpha = (floor - lam1) / (1.0 / static_cast<double>(d) - lam1);
        rho = hermitian_project((1.0 - alpha) * rho.matrix() +
                                (alpha / static_cast<double>(d)) *
                                    CMatrix::Identity(d, d));
    }
    return rho;
}

inline HermitianOperator uniform_density(Index d) {
    return hermitian_project(CMatrix::Identity(d, d) / static_cast<double>(d));
}

// Cost built from number and hopping quadratures:
// (N1 (x) Id - Id (x) N2)^2 + (X1 (x) Id - Id (x) X2)^2, sup-norm scaled to 1.
inline HermitianOperator quadrature_cost(const ProductSpace& sp) {
    auto number_op = [](Index d) {
        CMatrix n = CMatrix::Zero(d, d);
        for (Index i = 0; i < d; ++i) n(i, i) = static_cast<double>(i);
        return hermitian_project(n);
    };
    auto hopping_op = [](Index d) {
        CMatrix x = CMatrix::Zero(d, d);
        for (Index i = 0; i + 1 < d; ++i) {
            x(i, i + 1) = 1.0;
            x(i + 1, i) = 1.0;
        }
        return hermitian_project(x);
    };
    const HermitianOperator dn = oplus(number_op(sp.d1), -1.0 * number_op(sp.d2));
    const HermitianOperator dx = oplus(hopping_op(sp.d1), -1.0 * hopping_op(sp.d2));
    HermitianOperator c =
        hermitian_project(dn.matrix() * dn.matrix() + dx.matrix() * dx.matrix());
    const double s = sup_norm(c);
    return s > 0.0 ? c * (1.0 / s) : c;
}

// ------------------------------ Instance generation -------------------------

struct GeneratorSpec {
    enum class Cost { random_hermitian, quadrature_like };
    enum class Marginals { random_density, uniform };

    Index d1 = 2;
    Index d2 = 2;
    std::uint64_t seed = 0;
    Cost cost = Cost::random_hermitian;
    Marginals marginals = Marginals::random_density;
};

namespace detail {
struct GeneratedData {
    HermitianOperator cost;
    HermitianOperator rho;
    HermitianOperator sigma;
};

inline GeneratedData generate_data(const GeneratorSpec& spec) {
    if (spec.d1 < 1 || spec.d2 < 1)
        throw std::invalid_argument("generate: dims must be >= 1");
    const ProductSpace sp(spec.d1, spec.d2);
    Rng rng(spec.seed);
    HermitianOperator cost = spec.cost == GeneratorSpec::Cost::random_hermitian
                                 ? random_hermitian(rng, sp.dim())
                                 : quadrature_cost(sp);
    HermitianOperator rho = spec.marginals == GeneratorSpec::Marginals::random_density
                                ? random_density(rng, spec.d1)
                                : uniform_density(spec.d1);
    HermitianOperator sigma = spec.marginals == GeneratorSpec::Marginals::random_density
                                  ? random_density(rng, spec.d2)
                                  : uniform_density(spec.d2);
    return {std::move(cost), std::move(rho), std::move(sigma)};
}
} // namespace detail

inline BalancedInstance generate_balanced(const GeneratorSpec& spec, double epsilon,
                                          Regularizer reg) {
    auto data = detail::generate_data(spec);
    return BalancedInstance(ProductSpace(spec.d1, spec.d2), std::move(data.cost),
                            std::move(data.rho), std::move(data.sigma), epsilon, std::move(reg));
}

inline UnbalancedInstance generate_unbalanced(const GeneratorSpec& spec, double epsilon,
                                              double tau1, double tau2, Regularizer reg) {
    auto data = detail::generate_data(spec);
    return UnbalancedInstance(ProductSpace(spec.d1, spec.d2), std::move(data.cost),
                              std::move(data.rho), std::move(data.sigma), epsilon, tau1, tau2,
                              std::move(reg));
}

} // namespace qot
