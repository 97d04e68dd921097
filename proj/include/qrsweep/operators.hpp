// operators.hpp: dense complex operator kernel for truncated qubit-oscillator spaces.
//
// All operators are dense Eigen matrices wrapped with a Hermiticity hint.  The
// tensor ordering convention used everywhere in the library is qubit first,
// then oscillator mode(s): index = qubit * N + n.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qrsweep/errors.hpp"

namespace qrsweep {

using cplx = std::complex<double>;
using Eigen::Index;

/// Square complex matrix with an optional (verified) Hermiticity promise.
class OperatorMatrix {
public:
    OperatorMatrix() = default;

    explicit OperatorMatrix(Eigen::MatrixXcd m, bool hermitian_hint = false)
        : m_(std::move(m)), hermitian_(hermitian_hint) {
        require(m_.rows() == m_.cols() && m_.rows() > 0, ErrorKind::invalid_parameter,
                "operator matrix must be square and non-empty");
        if (hermitian_) {
            require(hermiticity_defect() <= 1e-12 * std::max(max_abs(), 1e-300),
                    ErrorKind::symmetry_violation, "matrix flagged Hermitian is not Hermitian");
        }
    }

    static OperatorMatrix identity(Index dim) {
        return OperatorMatrix(Eigen::MatrixXcd::Identity(dim, dim), true);
    }

    Index dim() const noexcept { return m_.rows(); }
    bool hermitian_hint() const noexcept { return hermitian_; }
    const Eigen::MatrixXcd& matrix() const noexcept { return m_; }
    cplx operator()(Index i, Index j) const { return m_(i, j); }

    double max_abs() const { return m_.cwiseAbs().maxCoeff(); }
    double hermiticity_defect() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }
    /// Spectral-norm surrogate used for relative tolerances (Frobenius bound).
    double norm() const { return m_.norm(); }

    OperatorMatrix adjoint() const { return OperatorMatrix(m_.adjoint(), hermitian_); }

    friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b);
        return OperatorMatrix(a.m_ + b.m_, a.hermitian_ && b.hermitian_);
    }
    friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b);
        return OperatorMatrix(a.m_ - b.m_, a.hermitian_ && b.hermitian_);
    }
    friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
        check_same(a, b);
        return OperatorMatrix(a.m_ * b.m_);
    }
    friend OperatorMatrix operator*(double s, const OperatorMatrix& a) {
        return OperatorMatrix(s * a.m_, a.hermitian_);
    }
    friend OperatorMatrix operator*(cplx s, const OperatorMatrix& a) {
        return OperatorMatrix(s * a.m_, a.hermitian_ && s.imag() == 0.0);
    }

private:
    static void check_same(const OperatorMatrix& a, const OperatorMatrix& b) {
        require(a.dim() == b.dim(), ErrorKind::invalid_parameter, "operator dimension mismatch");
    }

    Eigen::MatrixXcd m_;
    bool hermitian_ = false;
};

/// Labeling scheme of a state's coordinates.
enum class BasisTag { bare, parity_symmetric, parity_antisymmetric, displaced };

/// Unit-norm complex amplitude vector.
class StateVector {
public:
    static constexpr double norm_tolerance = 1e-10;

    StateVector() = default;

    explicit StateVector(Eigen::VectorXcd amplitudes, BasisTag tag = BasisTag::bare)
        : a_(std::move(amplitudes)), tag_(tag) {
        require(a_.size() > 0, ErrorKind::invalid_parameter, "empty state vector");
        require(std::abs(a_.norm() - 1.0) <= norm_tolerance, ErrorKind::invalid_parameter,
                "state vector is not normalized (norm = " + std::to_string(a_.norm()) + ")");
    }

    static StateVector normalized(Eigen::VectorXcd v, BasisTag tag = BasisTag::bare) {
        const double n = v.norm();
        require(n > 0.0 && std::isfinite(n), ErrorKind::invalid_parameter,
                "cannot normalize a zero or non-finite vector");
        return StateVector(v / n, tag);
    }

    static StateVector basis(Index dim, Index k, BasisTag tag = BasisTag::bare) {
        require(k >= 0 && k < dim, ErrorKind::invalid_parameter, "basis index out of range");
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
        v(k) = 1.0;
        return StateVector(std::move(v), tag);
    }

    Index dim() const noexcept { return a_.size(); }
    BasisTag tag() const noexcept { return tag_; }
    const Eigen::VectorXcd& amplitudes() const noexcept { return a_; }
    cplx operator[](Index i) const { return a_(i); }
    double norm() const { return a_.norm(); }

    cplx inner(const StateVector& other) const { return a_.dot(other.a_); }
    double fidelity(const StateVector& other) const { return std::norm(inner(other)); }

private:
    Eigen::VectorXcd a_;
    BasisTag tag_ = BasisTag::bare;
};

inline void require_truncation(Index n) {
    require(n >= 2, ErrorKind::invalid_truncation,
            "Fock truncation must be at least 2 (got " + std::to_string(n) + ")");
}

/// <m|a|n> = sqrt(n) delta_{m,n-1}
inline OperatorMatrix annihilation(Index n_fock) {
    require_truncation(n_fock);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n_fock, n_fock);
    for (Index n = 1; n < n_fock; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return OperatorMatrix(std::move(a));
}

inline OperatorMatrix creation(Index n_fock) { return annihilation(n_fock).adjoint(); }

inline OperatorMatrix number_operator(Index n_fock) {
    require_truncation(n_fock);
    Eigen::MatrixXcd n = Eigen::MatrixXcd::Zero(n_fock, n_fock);
    for (Index k = 0; k < n_fock; ++k) n(k, k) = static_cast<double>(k);
    return OperatorMatrix(std::move(n), true);
}

namespace pauli {

inline OperatorMatrix x() {
    Eigen::Matrix2cd m;
    m << 0, 1, 1, 0;
    return OperatorMatrix(m, true);
}
inline OperatorMatrix y() {
    Eigen::Matrix2cd m;
    m << 0, cplx(0, -1), cplx(0, 1), 0;
    return OperatorMatrix(m, true);
}
// |up> is index 0, |down> is index 1.
inline OperatorMatrix z() {
    Eigen::Matrix2cd m;
    m << 1, 0, 0, -1;
    return OperatorMatrix(m, true);
}

}  // namespace pauli

inline OperatorMatrix kron(const OperatorMatrix& a, const OperatorMatrix& b) {
    const Index da = a.dim(), db = b.dim();
    Eigen::MatrixXcd out(da * db, da * db);
    for (Index i = 0; i < da; ++i)
        for (Index j = 0; j < da; ++j) out.block(i * db, j * db, db, db) = a(i, j) * b.matrix();
    return OperatorMatrix(std::move(out), a.hermitian_hint() && b.hermitian_hint());
}

struct EigenSystem {
    Eigen::VectorXd values;    // ascending
    Eigen::MatrixXcd vectors;  // orthonormal columns
};

inline EigenSystem eig_hermitian(const OperatorMatrix& h) {
    require(h.hermiticity_defect() <= 1e-12 * std::max(h.max_abs(), 1e-300),
            ErrorKind::symmetry_violation, "eig_hermitian requires a Hermitian matrix");
    // Symmetrize so round-off in the lower triangle cannot leak into the solver.
    const Eigen::MatrixXcd sym = 0.5 * (h.matrix() + h.matrix().adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(sym);
    require(solver.info() == Eigen::Success, ErrorKind::numerical_instability,
            "Hermitian eigensolver did not converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

/// exp(-i H t) for Hermitian H.  Eigendecomposition up to dim 256, scaling-and-squaring Pade above.
inline OperatorMatrix unitary_exponential(const OperatorMatrix& h, double t) {
    require(std::isfinite(t), ErrorKind::invalid_parameter, "non-finite time step");
    if (h.dim() <= 256) {
        const EigenSystem es = eig_hermitian(h);
        const Eigen::VectorXcd phases =
            (es.values.cast<cplx>() * cplx(0.0, -t)).array().exp().matrix();
        return OperatorMatrix(es.vectors * phases.asDiagonal() * es.vectors.adjoint());
    }
    require(h.hermiticity_defect() <= 1e-12 * std::max(h.max_abs(), 1e-300),
            ErrorKind::symmetry_violation, "unitary_exponential requires a Hermitian matrix");
    const Eigen::MatrixXcd generator = cplx(0.0, -t) * h.matrix();
    return OperatorMatrix(generator.exp());
}

/// D(alpha) = exp(alpha a^dag - conj(alpha) a) in the n_fock-dimensional truncation.
inline OperatorMatrix displacement(cplx alpha, Index n_fock) {
    require_truncation(n_fock);
    require(std::isfinite(alpha.real()) && std::isfinite(alpha.imag()),
            ErrorKind::invalid_parameter, "displacement amplitude must be finite");
    const Eigen::MatrixXcd a = annihilation(n_fock).matrix();
    // K = alpha a^dag - alpha* a is anti-Hermitian; G = iK is Hermitian and exp(K) = exp(-iG).
    const Eigen::MatrixXcd k = alpha * a.adjoint() - std::conj(alpha) * a;
    const Eigen::MatrixXcd g = cplx(0.0, 1.0) * k;
    return unitary_exponential(OperatorMatrix(0.5 * (g + g.adjoint()), true), 1.0);
}

/// One step of exp(-i H dt) psi.
inline StateVector propagate_step(const OperatorMatrix& h, double dt, const StateVector& psi) {
    require(h.dim() == psi.dim(), ErrorKind::invalid_parameter, "state/operator dimension mismatch");
    require(std::isfinite(dt), ErrorKind::invalid_parameter, "non-finite time step");
    Eigen::VectorXcd out = unitary_exponential(h, dt).matrix() * psi.amplitudes();
    const double drift = std::abs(out.norm() - psi.norm());
    require(drift <= 1e-6, ErrorKind::numerical_instability,
            "norm drift " + std::to_string(drift) + " in propagate_step");
    return StateVector(std::move(out), psi.tag());
}

}  // namespace qrsweep
