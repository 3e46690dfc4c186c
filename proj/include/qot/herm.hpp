#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace qot {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline double max_abs(const CMatrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// ------------------------------ HermitianOperator ---------------------------

// Dense complex Hermitian matrix. The validating constructor accepts input
// with |A - A^dag| <= 1e-12 * (1 + |A|) entrywise and stores (A + A^dag)/2,
// so the stored matrix is Hermitian to the last bit.
class HermitianOperator {
public:
    explicit HermitianOperator(CMatrix m) {
        if (m.rows() != m.cols() || m.rows() < 1)
            throw std::invalid_argument("HermitianOperator: matrix must be square with dim >= 1");
        if (!m.allFinite())
            throw std::invalid_argument("HermitianOperator: non-finite entries");
        const double dev = max_abs(m - m.adjoint());
        if (dev > 1e-12 * (1.0 + max_abs(m))) {
            std::ostringstream os;
            os << "HermitianOperator: matrix is not Hermitian (max deviation " << dev << ")";
            throw std::invalid_argument(os.str());
        }
        m_ = 0.5 * (m + m.adjoint().eval());
    }

    static HermitianOperator zero(Index d) { return HermitianOperator(CMatrix::Zero(d, d)); }
    static HermitianOperator identity(Index d) { return HermitianOperator(CMatrix::Identity(d, d)); }

    Index dim() const { return m_.rows(); }
    const CMatrix& matrix() const { return m_; }

    HermitianOperator operator+(const HermitianOperator& o) const { return wrap(m_ + o.m_); }
    HermitianOperator operator-(const HermitianOperator& o) const { return wrap(m_ - o.m_); }
    HermitianOperator operator-() const { return wrap(-m_); }
    HermitianOperator operator*(double s) const { return wrap(s * m_); }
    friend HermitianOperator operator*(double s, const HermitianOperator& a) { return a * s; }

private:
    HermitianOperator() = default;
    static HermitianOperator wrap(CMatrix m) {
        HermitianOperator h;
        h.m_ = std::move(m);
        return h;
    }
    friend HermitianOperator hermitian_project(const CMatrix&);

    CMatrix m_;
};

// (A + A^dag)/2. Idempotent on Hermitian input.
inline HermitianOperator hermitian_project(const CMatrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1)
        throw std::invalid_argument("hermitian_project: matrix must be square with dim >= 1");
    HermitianOperator h;
    h.m_ = 0.5 * (m + m.adjoint().eval());
    return h;
}

// ------------------------------ ProductSpace --------------------------------

// Pair (d1, d2) for H1 (x) H2. Tensor layout: the product-space index of the
// basis pair (i, j) is i*d2 + j, i.e. the first factor is the slow index.
// All Kronecker/partial-trace loops below commit to this layout.
struct ProductSpace {
    ProductSpace(Index dim1, Index dim2) : d1(dim1), d2(dim2) {
        if (d1 < 1 || d2 < 1)
            throw std::invalid_argument("ProductSpace: dimensions must be >= 1");
    }
    Index dim() const { return d1 * d2; }

    Index d1;
    Index d2;
};

// ------------------------------ Spectral calculus ---------------------------

// Eigenvalues ascending; k-th column of eigenvectors pairs with eigenvalue k.
struct SpectralDecomposition {
    RVector eigenvalues;
    CMatrix eigenvectors;
};

inline SpectralDecomposition spectral_decompose(const HermitianOperator& a) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(a.matrix());
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("spectral_decompose: eigensolver failed to converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

inline double smallest_eigenvalue(const HermitianOperator& a) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(a.matrix(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("smallest_eigenvalue: eigensolver failed to converge");
    return solver.eigenvalues()(0);
}

namespace detail {
inline void require_finite_at(double fx, double lambda, const char* who) {
    if (!std::isfinite(fx)) {
        std::ostringstream os;
        os << who << ": scalar function undefined at eigenvalue " << lambda;
        throw std::domain_error(os.str());
    }
}
} // namespace detail

// Lifting of a scalar function through the spectral decomposition:
// f(A) = sum_k f(lambda_k) |xi_k><xi_k|.
template <class F>
HermitianOperator lift(F&& f, const HermitianOperator& a) {
    const auto sd = spectral_decompose(a);
    RVector fx(sd.eigenvalues.size());
    for (Index k = 0; k < sd.eigenvalues.size(); ++k) {
        fx(k) = f(sd.eigenvalues(k));
        detail::require_finite_at(fx(k), sd.eigenvalues(k), "lift");
    }
    return hermitian_project(sd.eigenvectors * fx.asDiagonal() * sd.eigenvectors.adjoint());
}

// Tr[f(A)] = sum_k f(lambda_k), without building the lifted operator.
template <class F>
double trace_function(F&& f, const HermitianOperator& a) {
    const auto sd = spectral_decompose(a);
    double acc = 0.0;
    for (Index k = 0; k < sd.eigenvalues.size(); ++k) {
        const double fx = f(sd.eigenvalues(k));
        detail::require_finite_at(fx, sd.eigenvalues(k), "trace_function");
        acc += fx;
    }
    return acc;
}

// ------------------------------ Product-space ops ---------------------------

inline HermitianOperator kron(const HermitianOperator& a, const HermitianOperator& b) {
    const Index da = a.dim(), db = b.dim();
    CMatrix out(da * db, da * db);
    for (Index i = 0; i < da; ++i)
        for (Index k = 0; k < da; ++k)
            for (Index j = 0; j < db; ++j)
                for (Index l = 0; l < db; ++l)
                    out(i * db + j, k * db + l) = a.matrix()(i, k) * b.matrix()(j, l);
    return hermitian_project(out);
}

// U (+) V = U (x) Id + Id (x) V.
inline HermitianOperator oplus(const HermitianOperator& u, const HermitianOperator& v) {
    const Index d1 = u.dim(), d2 = v.dim();
    CMatrix out = CMatrix::Zero(d1 * d2, d1 * d2);
    for (Index i = 0; i < d1; ++i)
        for (Index k = 0; k < d1; ++k)
            for (Index j = 0; j < d2; ++j)
                out(i * d2 + j, k * d2 + j) += u.matrix()(i, k);
    for (Index i = 0; i < d1; ++i)
        for (Index j = 0; j < d2; ++j)
            for (Index l = 0; l < d2; ++l)
                out(i * d2 + j, i * d2 + l) += v.matrix()(j, l);
    return hermitian_project(out);
}

namespace detail {
inline void require_product_dim(const HermitianOperator& g, const ProductSpace& space, const char* who) {
    if (g.dim() != space.dim()) {
        std::ostringstream os;
        os << who << ": operator dim " << g.dim() << " does not match product space "
           << space.d1 << "x" << space.d2;
        throw std::invalid_argument(os.str());
    }
}
} // namespace detail

// First partial trace: (P1 G)(i,k) = sum_j G(i*d2+j, k*d2+j), the unique rho
// with Tr[G (U (x) Id)] = Tr[rho U] for all U.
inline HermitianOperator partial_trace_1(const HermitianOperator& g, const ProductSpace& space) {
    detail::require_product_dim(g, space, "partial_trace_1");
    CMatrix out = CMatrix::Zero(space.d1, space.d1);
    for (Index i = 0; i < space.d1; ++i)
        for (Index k = 0; k < space.d1; ++k)
            for (Index j = 0; j < space.d2; ++j)
                out(i, k) += g.matrix()(i * space.d2 + j, k * space.d2 + j);
    return hermitian_project(out);
}

// Second partial trace: (P2 G)(j,l) = sum_i G(i*d2+j, i*d2+l).
inline HermitianOperator partial_trace_2(const HermitianOperator& g, const ProductSpace& space) {
    detail::require_product_dim(g, space, "partial_trace_2");
    CMatrix out = CMatrix::Zero(space.d2, space.d2);
    for (Index j = 0; j < space.d2; ++j)
        for (Index l = 0; l < space.d2; ++l)
            for (Index i = 0; i < space.d1; ++i)
                out(j, l) += g.matrix()(i * space.d2 + j, i * space.d2 + l);
    return hermitian_project(out);
}

// ------------------------------ Trace primitives ----------------------------

// Hilbert-Schmidt pairing <A,B> = Re Tr[A B]. For Hermitian inputs Tr[A B] is
// real; the O(1e-16) imaginary residue is discarded.
inline double hs_inner(const HermitianOperator& a, const HermitianOperator& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("hs_inner: dimension mismatch");
    return a.matrix().cwiseProduct(b.matrix().conjugate()).sum().real();
}

inline double hs_norm(const HermitianOperator& a) {
    return a.matrix().norm();
}

inline double trace_re(const HermitianOperator& a) {
    return a.matrix().trace().real();
}

// Operator sup norm = max |eigenvalue|.
inline double sup_norm(const HermitianOperator& a) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(a.matrix(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("sup_norm: eigensolver failed to converge");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace qot
