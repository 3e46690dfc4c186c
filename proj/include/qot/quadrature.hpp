#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qot {

// Gauss-Legendre nodes and weights on [-1, 1].
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Newton iteration on the Legendre polynomial, exploiting node symmetry.
inline QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double t = std::cos(M_PI * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Recurrence: (k+1) P_{k+1} = (2k+1) t P_k - k P_{k-1}
            double p0 = 1.0, p1 = t;
            for (std::size_t k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double step = p1 / dp;
            t -= step;
            if (std::abs(step) < 1e-15) break;
        }
        rule.nodes[i] = -t;
        rule.nodes[n - 1 - i] = t;
        rule.weights[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    return rule;
}

// Integrate f over [-1, 1], doubling the rule until two successive results
// agree to abs_tol. Starts at 64 nodes per the adopted convention.
template <class F>
double integrate_adaptive(F&& f, double abs_tol, std::size_t max_nodes = 8192) {
    double prev = 0.0;
    bool have_prev = false;
    for (std::size_t n = 64; n <= max_nodes; n *= 2) {
        const QuadratureRule rule = gauss_legendre(n);
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += rule.weights[k] * f(rule.nodes[k]);
        if (have_prev && std::abs(acc - prev) < abs_tol) return acc;
        prev = acc;
        have_prev = true;
    }
    throw std::runtime_error("integrate_adaptive: quadrature did not converge");
}

} // namespace qot
