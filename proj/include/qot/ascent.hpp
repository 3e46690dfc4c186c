#pragma once

#include "qot/herm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace qot {

// ------------------------------ Vector-space glue ---------------------------

// The ascent engine is generic over the iterate type. Two instantiations are
// used: a single Hermitian matrix (inner transform solves) and a potential
// pair (joint dual ascent).
inline double vec_dot(const CMatrix& a, const CMatrix& b) {
    return a.cwiseProduct(b.conjugate()).sum().real();
}

inline CMatrix vec_axpy(const CMatrix& x, double t, const CMatrix& g) {
    return x + t * g;
}

struct PotentialVec {
    CMatrix u;
    CMatrix v;
};

inline double vec_dot(const PotentialVec& a, const PotentialVec& b) {
    return vec_dot(a.u, b.u) + vec_dot(a.v, b.v);
}

inline PotentialVec vec_axpy(const PotentialVec& x, double t, const PotentialVec& g) {
    return {x.u + t * g.u, x.v + t * g.v};
}

// ------------------------------ BB ascent -----------------------------------

inline constexpr double kInfAscent = std::numeric_limits<double>::infinity();

struct AscentOptions {
    double grad_tol = 1e-9;
    int max_iters = 20000;
    double armijo = 1e-4;
    int max_backtracks = 60;
    double initial_step = 1.0;
    // Enables noise-floor handling: when the sufficient-increase test cannot
    // be certified (stiff spectra push the attainable objective gain below
    // the eigendecomposition evaluation noise long before the gradient norm
    // bottoms out), steps that keep the computed value and shrink the
    // gradient are still accepted, and exhaustion returns the iterate
    // honestly instead of throwing.
    double value_noise = 0.0;
};

template <class Vec>
struct AscentResult {
    Vec x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Maximizes a concave functional by gradient ascent with Barzilai-Borwein
// steps and Armijo backtracking (halving). `normalize` is applied after each
// accepted step and must leave the objective value unchanged (it is used for
// the lambda_1 recentering of translation-invariant duals). The BB pair is
// taken along the accepted search step t*g, so normalization shifts do not
// pollute the curvature estimate.
template <class Vec, class ValueFn, class GradFn, class NormalizeFn>
AscentResult<Vec> bb_ascent(ValueFn&& value, GradFn&& grad, Vec x0,
                            const AscentOptions& opt, NormalizeFn&& normalize) {
    Vec x = normalize(std::move(x0));
    double f = value(x);
    if (!std::isfinite(f))
        throw std::runtime_error("bb_ascent: objective not finite at the initial point");
    Vec g = grad(x);

    double step = opt.initial_step;
    bool have_pair = false;
    Vec g_prev = g;
    double t_prev = 0.0;
    double best_gn = kInfAscent;
    int last_progress = 0;

    AscentResult<Vec> out{std::move(x), f, std::sqrt(vec_dot(g, g)), 0, false};
    for (int it = 0; it < opt.max_iters; ++it) {
        const double gg = vec_dot(g, g);
        out.grad_norm = std::sqrt(gg);
        if (out.grad_norm <= opt.grad_tol) {
            out.converged = true;
            return out;
        }
        if (out.grad_norm < 0.95 * best_gn) {
            best_gn = out.grad_norm;
            last_progress = it;
        } else if (opt.value_noise > 0.0 && it - last_progress > 500) {
            // Gradient norm has flatlined at its noise floor; stop honestly.
            return out;
        }
        if (have_pair) {
            // s = t_prev * g_prev, y = g - g_prev; concavity gives <s,-y> >= 0.
            const double curv = t_prev * vec_dot(g_prev, g_prev) - t_prev * vec_dot(g_prev, g);
            const double ss = t_prev * t_prev * vec_dot(g_prev, g_prev);
            step = (curv > 1e-300) ? ss / curv : step * 2.0;
            step = std::min(std::max(step, 1e-12), 1e8);
        }

        double t = step;
        bool accepted = false;
        Vec x_try = out.x;
        double f_try = f;
        Vec g_try = g;
        bool have_g_try = false;
        for (int k = 0; k < opt.max_backtracks; ++k) {
            x_try = vec_axpy(out.x, t, g);
            f_try = value(x_try);
            // Tiny negative slack absorbs last-ulp rounding near stationarity.
            if (f_try >= f + opt.armijo * t * gg - 4e-16 * (1.0 + std::abs(f))) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted && opt.value_noise > 0.0) {
            // Noise-floor regime: certify progress by the gradient norm. The
            // computed value must not decrease (beyond last-ulp rounding), so
            // chains of these steps stay monotone to evaluation accuracy.
            t = step;
            for (int k = 0; k < opt.max_backtracks; ++k) {
                x_try = vec_axpy(out.x, t, g);
                f_try = value(x_try);
                if (f_try >= f - 4e-16 * (1.0 + std::abs(f))) {
                    Vec g_cand = grad(x_try);
                    if (vec_dot(g_cand, g_cand) <= gg * (1.0 - 1e-3)) {
                        g_try = std::move(g_cand);
                        have_g_try = true;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        if (!accepted) {
            if (opt.value_noise > 0.0) {
                // All candidate steps are indistinguishable from noise: the
                // iterate sits on the evaluation-noise floor. Report honestly.
                out.converged = out.grad_norm <= opt.grad_tol;
                return out;
            }
            throw std::runtime_error("bb_ascent: line search failed (concavity or capability bug)");
        }

        g_prev = g;
        t_prev = t;
        have_pair = true;
        out.x = normalize(std::move(x_try));
        f = f_try;
        out.value = f;
        g = have_g_try ? std::move(g_try) : grad(out.x);
        out.iterations = it + 1;
    }
    out.grad_norm = std::sqrt(vec_dot(g, g));
    out.converged = out.grad_norm <= opt.grad_tol;
    return out;
}

template <class Vec, class ValueFn, class GradFn>
AscentResult<Vec> bb_ascent(ValueFn&& value, GradFn&& grad, Vec x0, const AscentOptions& opt) {
    return bb_ascent(std::forward<ValueFn>(value), std::forward<GradFn>(grad), std::move(x0),
                     opt, [](Vec v) { return v; });
}

} // namespace qot
