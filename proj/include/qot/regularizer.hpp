#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qot {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using ScalarFn = std::function<double(double)>;

// Raised when a solver needs a capability (C1 / strict convexity) the chosen
// regularizer does not provide.
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by the numeric Legendre oracle when the maximizer hits the search
// bound; the caller should enlarge the bound and retry.
class BoundTooSmallError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ------------------------------ Regularizer ---------------------------------

// Convex conjugate pair: phi proper convex superlinear on [0, inf) (returning
// +inf off-domain), psi = phi* on the real line. psi_prime and phi_prime are
// meaningful where the flags say so; phi_prime is the derivative on (0, inf).
struct Regularizer {
    std::string name;
    ScalarFn phi;
    ScalarFn phi_prime;
    ScalarFn psi;
    ScalarFn psi_prime;
    double phi_at_zero = 0.0;
    double inf_psi = 0.0;
    bool strictly_convex_psi = false;
    bool c1_psi = false;
};

inline void require_c1(const Regularizer& reg, const char* who) {
    if (!reg.c1_psi)
        throw CapabilityError(std::string(who) + ": regularizer '" + reg.name +
                              "' has no C1 conjugate; mollify it first");
}

inline void require_strictly_convex(const Regularizer& reg, const char* who) {
    if (!reg.strictly_convex_psi)
        throw CapabilityError(std::string(who) + ": regularizer '" + reg.name +
                              "' has no strictly convex conjugate; mollify it first");
}

// ------------------------------ Numeric Legendre oracle ---------------------

// sup_{t in [0, search_bound]} { x t - phi(t) } by a dense grid followed by
// golden-section refinement around the best grid point. The objective is
// concave in t, so the bracket around the grid argmax is valid.
inline double legendre_numeric(const ScalarFn& phi, double x, double search_bound = 50.0) {
    if (!(search_bound > 0.0))
        throw std::invalid_argument("legendre_numeric: search_bound must be positive");
    constexpr int kGrid = 4096;
    const double h = search_bound / kGrid;
    double best = -kInf;
    int best_i = 0;
    for (int i = 0; i <= kGrid; ++i) {
        const double t = i * h;
        const double p = phi(t);
        if (!std::isfinite(p)) continue;
        const double v = x * t - p;
        if (v > best) {
            best = v;
            best_i = i;
        }
    }
    if (best_i == kGrid) {
        std::ostringstream os;
        os << "legendre_numeric: maximizer at search bound " << search_bound;
        throw BoundTooSmallError(os.str());
    }
    double lo = (best_i == 0) ? 0.0 : (best_i - 1) * h;
    double hi = (best_i + 1) * h;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    auto value = [&](double t) {
        const double p = phi(t);
        return std::isfinite(p) ? x * t - p : -kInf;
    };
    double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
    double fa = value(a), fb = value(b);
    while (hi - lo > 1e-12 * (1.0 + hi)) {
        if (fa >= fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - gr * (hi - lo);
            fa = value(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + gr * (hi - lo);
            fb = value(b);
        }
    }
    return std::max({best, fa, fb});
}

// ------------------------------ Built-ins -----------------------------------

inline Regularizer make_von_neumann() {
    Regularizer r;
    r.name = "von_neumann";
    r.phi = [](double t) {
        if (t < 0.0) return kInf;
        return t == 0.0 ? 0.0 : t * std::log(t) - t; // 0 log 0 := 0
    };
    r.phi_prime = [](double t) { return std::log(t); };
    r.psi = [](double x) { return std::exp(x); };
    r.psi_prime = [](double x) { return std::exp(x); };
    r.phi_at_zero = 0.0;
    r.inf_psi = 0.0;
    r.strictly_convex_psi = true;
    r.c1_psi = true;
    return r;
}

inline Regularizer make_quadratic() {
    Regularizer r;
    r.name = "quadratic";
    r.phi = [](double t) { return t < 0.0 ? kInf : 0.5 * t * t; };
    r.phi_prime = [](double t) { return t; };
    r.psi = [](double x) { return x > 0.0 ? 0.5 * x * x : 0.0; };
    r.psi_prime = [](double x) { return x > 0.0 ? x : 0.0; };
    r.phi_at_zero = 0.0;
    r.inf_psi = 0.0;
    r.strictly_convex_psi = false; // flat on the negative half-line
    r.c1_psi = true;
    return r;
}

// phi_q(t) = (t^q - t)/(q - 1); conjugate worked out in closed form:
//   psi_q(x)  = u^{q/(q-1)},  u = ((q-1) x + 1)_+ / q,
//   psi_q'(x) = u^{1/(q-1)}.
// The closed form is validated against the numeric Legendre oracle at
// construction; on disagreement the numeric oracle wins.
inline Regularizer make_tsallis(double q) {
    if (!(q > 1.0)) throw std::invalid_argument("make_tsallis: requires q > 1");
    Regularizer r;
    {
        std::ostringstream os;
        os << "tsallis:q=" << q;
        r.name = os.str();
    }
    r.phi = [q](double t) { return t < 0.0 ? kInf : (std::pow(t, q) - t) / (q - 1.0); };
    r.phi_prime = [q](double t) { return (q * std::pow(t, q - 1.0) - 1.0) / (q - 1.0); };
    auto u_of = [q](double x) { return std::max((q - 1.0) * x + 1.0, 0.0) / q; };
    r.psi = [q, u_of](double x) { return std::pow(u_of(x), q / (q - 1.0)); };
    r.psi_prime = [q, u_of](double x) { return std::pow(u_of(x), 1.0 / (q - 1.0)); };
    r.phi_at_zero = 0.0;
    r.inf_psi = 0.0;
    r.strictly_convex_psi = true;
    r.c1_psi = true;

    double worst = 0.0;
    for (double x = -5.0; x <= 5.0 + 1e-12; x += 0.5)
        worst = std::max(worst, std::abs(r.psi(x) - legendre_numeric(r.phi, x)));
    if (worst > 1e-6) {
        // Closed form disagrees with the oracle; fall back to the numeric path.
        const ScalarFn phi = r.phi;
        r.psi = [phi](double x) { return legendre_numeric(phi, x); };
        const ScalarFn psi_num = r.psi;
        r.psi_prime = [psi_num](double x) {
            const double h = 1e-6;
            return (psi_num(x + h) - psi_num(x - h)) / (2.0 * h);
        };
        r.name += "(numeric)";
    }
    return r;
}

// ------------------------------ Assumption checks ---------------------------

struct AssumptionReport {
    std::vector<double> convexity_violations;   // midpoints failing the midpoint test
    std::vector<double> monotonicity_violations;
    std::vector<double> lower_bound_violations; // psi(t) < m
    double superlinearity_proxy = 0.0;          // min of psi(t)/t over the top decile
    bool clean() const {
        return convexity_violations.empty() && monotonicity_violations.empty() &&
               lower_bound_violations.empty();
    }
};

// Sampled checks of the standing assumptions on psi: midpoint convexity,
// monotone non-decrease, psi >= m, and a superlinearity proxy. Report-only.
inline AssumptionReport check_assumptions(const Regularizer& reg, const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("check_assumptions: empty grid");
    AssumptionReport rep;
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) vals[i] = reg.psi(grid[i]);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double mid = 0.5 * (grid[i] + grid[i + 1]);
        const double fmid = reg.psi(mid);
        const double chord = 0.5 * (vals[i] + vals[i + 1]);
        const double tol = 1e-9 * (1.0 + std::abs(chord));
        if (fmid > chord + tol) rep.convexity_violations.push_back(mid);
        if (vals[i + 1] < vals[i] - tol) rep.monotonicity_violations.push_back(grid[i + 1]);
    }
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (vals[i] < reg.inf_psi - 1e-9 * (1.0 + std::abs(reg.inf_psi)))
            rep.lower_bound_violations.push_back(grid[i]);

    const std::size_t decile = std::max<std::size_t>(1, grid.size() / 10);
    double proxy = kInf;
    for (std::size_t i = grid.size() - decile; i < grid.size(); ++i)
        if (grid[i] > 0.0) proxy = std::min(proxy, vals[i] / grid[i]);
    rep.superlinearity_proxy = proxy;
    return rep;
}

} // namespace qot
