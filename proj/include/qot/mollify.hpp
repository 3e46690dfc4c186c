#pragma once

#include "qot/quadrature.hpp"
#include "qot/regularizer.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace qot {

namespace detail {

// Bump kernel support: rho(y) = c * exp(-1/(1 - y^2)) on (-1, 1), c chosen so
// that the kernel integrates to one.
inline double bump_unnormalized(double y) {
    const double s = 1.0 - y * y;
    return s > 0.0 ? std::exp(-1.0 / s) : 0.0;
}

inline double bump_unnormalized_derivative(double y) {
    const double s = 1.0 - y * y;
    if (s <= 0.0) return 0.0;
    return std::exp(-1.0 / s) * (-2.0 * y) / (s * s);
}

inline double bump_normalization() {
    static const double c = 1.0 / integrate_adaptive(
        [](double y) { return bump_unnormalized(y); }, 1e-12);
    return c;
}

// Shared state of one mollified regularizer: base functions and cached
// quadrature tables (read-only after construction).
struct MollifyState {
    ScalarFn psi;
    ScalarFn psi_bar;
    int n = 1;
    double norm = 1.0;
    std::vector<QuadratureRule> levels;           // 64, 128, ... nodes
    std::vector<std::vector<double>> rho_values;  // kernel at the nodes
    std::vector<std::vector<double>> drho_values; // kernel derivative at the nodes

    // integrand(x - y/n) weighted by rho (deriv = false) or by n * rho'
    // (deriv = true), refined by doubling until successive levels agree.
    double convolve(double x, bool deriv) const {
        double prev = 0.0;
        bool have_prev = false;
        for (std::size_t lvl = 0; lvl < levels.size(); ++lvl) {
            const auto& rule = levels[lvl];
            const auto& kernel = deriv ? drho_values[lvl] : rho_values[lvl];
            double acc = 0.0;
            for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                const double arg = x - rule.nodes[k] / n;
                const double f = psi(arg) + psi_bar(arg) / n;
                acc += rule.weights[k] * kernel[k] * f;
            }
            if (deriv) acc *= n;
            if (!std::isfinite(acc)) return acc; // base function overflow; pass through
            // Tighter than the 1e-9 contract so finite differences across
            // evaluations stay quiet; relative so large arguments are not held
            // to sub-roundoff accuracy.
            if (have_prev && std::abs(acc - prev) < 1e-11 * (1.0 + std::abs(acc))) return acc;
            prev = acc;
            have_prev = true;
        }
        throw std::runtime_error("mollify: convolution quadrature did not converge");
    }
};

inline std::shared_ptr<const MollifyState> make_mollify_state(ScalarFn psi, ScalarFn psi_bar, int n) {
    auto st = std::make_shared<MollifyState>();
    st->psi = std::move(psi);
    st->psi_bar = std::move(psi_bar);
    st->n = n;
    st->norm = bump_normalization();
    for (std::size_t m = 64; m <= 4096; m *= 2) {
        st->levels.push_back(gauss_legendre(m));
        const auto& rule = st->levels.back();
        std::vector<double> rho(m), drho(m);
        for (std::size_t k = 0; k < m; ++k) {
            rho[k] = st->norm * bump_unnormalized(rule.nodes[k]);
            drho[k] = st->norm * bump_unnormalized_derivative(rule.nodes[k]);
        }
        st->rho_values.push_back(std::move(rho));
        st->drho_values.push_back(std::move(drho));
    }
    return st;
}

// Golden-section minimum of a convex function on [lo, hi].
template <class F>
double golden_min(F&& f, double lo, double hi, double tol) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
    double fa = f(a), fb = f(b);
    while (hi - lo > tol) {
        if (fa <= fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - gr * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + gr * (hi - lo);
            fb = f(b);
        }
    }
    return std::min(fa, fb);
}

// Solve psi_n'(x) = t for the (strictly increasing) mollified derivative.
inline double invert_increasing(const ScalarFn& g, double t, const char* who) {
    double lo = -1.0, hi = 1.0;
    for (int i = 0; i < 80 && g(hi) < t; ++i) hi = 2.0 * hi + 1.0;
    for (int i = 0; i < 80 && g(lo) > t; ++i) lo = 2.0 * lo - 1.0;
    if (g(hi) < t || g(lo) > t)
        throw std::runtime_error(std::string(who) + ": failed to bracket the derivative equation");
    for (int i = 0; i < 200 && hi - lo > 1e-13 * (1.0 + std::abs(hi) + std::abs(lo)); ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < t ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// ------------------------------ Mollification -------------------------------

// psi_n = (psi + psi_bar / n) * rho_n with rho_n(z) = n rho(n z) and rho the
// normalized bump on [-1, 1]. The result is smooth, strictly convex,
// superlinear, bounded below, and >= psi pointwise. Its derivative is
// computed by moving the derivative onto the kernel:
//   psi_n'(x) = int (psi + psi_bar/n)(x - z) rho_n'(z) dz.
// The conjugate phi_n and its derivative are recovered numerically from
// psi_n' (the conjugate of a built-in has no closed form after mollification).
inline Regularizer mollify(ScalarFn psi, int n, ScalarFn psi_bar,
                           const std::string& base_name = "custom") {
    if (n < 1) throw std::invalid_argument("mollify: n must be >= 1");
    auto st = detail::make_mollify_state(std::move(psi), std::move(psi_bar), n);

    Regularizer r;
    {
        std::ostringstream os;
        os << "mollified:" << base_name << ":n=" << n;
        r.name = os.str();
    }
    r.psi = [st](double x) { return st->convolve(x, false); };
    r.psi_prime = [st](double x) { return st->convolve(x, true); };
    r.strictly_convex_psi = true;
    r.c1_psi = true;

    // inf over a wide bracket; convexity makes golden-section valid.
    r.inf_psi = detail::golden_min(r.psi, -1e4, 1e4, 1e-10);
    r.phi_at_zero = -r.inf_psi;

    const ScalarFn psi_n = r.psi;
    const ScalarFn dpsi_n = r.psi_prime;
    const double m_n = r.inf_psi;
    r.phi = [psi_n, dpsi_n, m_n](double t) {
        if (t < 0.0) return kInf;
        if (t == 0.0) return -m_n;
        const double x = detail::invert_increasing(dpsi_n, t, "mollified phi");
        return t * x - psi_n(x);
    };
    r.phi_prime = [dpsi_n](double t) {
        return detail::invert_increasing(dpsi_n, t, "mollified phi_prime");
    };
    return r;
}

inline Regularizer mollify(const Regularizer& base, int n) {
    return mollify(base.psi, n, [](double x) { return std::exp(x); }, base.name);
}

// ------------------------------ Selection string -----------------------------

// Accepted forms: "von_neumann" | "quadratic" | "tsallis:q=<float>" |
// "mollified:<base>:n=<int>".
inline Regularizer make_regularizer(const std::string& spec) {
    if (spec == "von_neumann") return make_von_neumann();
    if (spec == "quadratic") return make_quadratic();
    if (spec.rfind("tsallis:q=", 0) == 0) {
        std::size_t pos = 0;
        const std::string arg = spec.substr(10);
        const double q = std::stod(arg, &pos);
        if (pos != arg.size())
            throw std::invalid_argument("make_regularizer: malformed tsallis parameter '" + spec + "'");
        return make_tsallis(q);
    }
    if (spec.rfind("mollified:", 0) == 0) {
        const std::string rest = spec.substr(10);
        const std::size_t cut = rest.rfind(":n=");
        if (cut == std::string::npos)
            throw std::invalid_argument("make_regularizer: missing ':n=<int>' in '" + spec + "'");
        const std::string base = rest.substr(0, cut);
        const std::string arg = rest.substr(cut + 3);
        std::size_t pos = 0;
        const int n = std::stoi(arg, &pos);
        if (pos != arg.size() || n < 1)
            throw std::invalid_argument("make_regularizer: malformed mollification order in '" + spec + "'");
        return mollify(make_regularizer(base), n);
    }
    throw std::invalid_argument(
        "make_regularizer: unknown regularizer '" + spec +
        "' (expected von_neumann | quadratic | tsallis:q=<float> | mollified:<base>:n=<int>)");
}

} // namespace qot
