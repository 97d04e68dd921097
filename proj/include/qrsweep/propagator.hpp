// propagator.hpp: sparse Hamiltonians that depend linearly on one swept parameter, and the
// Chebyshev evaluation of exp(-i H dt) psi used by the sweep engine.
//
// The model Hamiltonians are real symmetric in the bare (and parity-adapted) bases, so the
// hot path stores real CSR values and acts on complex state vectors.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "qrsweep/errors.hpp"
#include "qrsweep/operators.hpp"

namespace qrsweep {

using SparseReal = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// H(s) = base + s * slope on a shared CSR pattern.
class LinearHamiltonian {
public:
    LinearHamiltonian() = default;

    LinearHamiltonian(const SparseReal& base, const SparseReal& slope) {
        require(base.rows() == base.cols() && slope.rows() == slope.cols() &&
                    base.rows() == slope.rows() && base.rows() > 0,
                ErrorKind::invalid_parameter, "linear Hamiltonian terms must be square and equal size");
        dim_ = base.rows();
        // Union pattern; cancellation in base + slope must not drop structural entries.
        SparseReal pattern = base.cwiseAbs() + slope.cwiseAbs();
        for (Index i = 0; i < dim_; ++i) pattern.coeffRef(i, i) += 1.0;
        pattern.makeCompressed();
        row_ptr_.assign(pattern.outerIndexPtr(), pattern.outerIndexPtr() + dim_ + 1);
        col_.assign(pattern.innerIndexPtr(), pattern.innerIndexPtr() + pattern.nonZeros());
        base_.resize(col_.size());
        slope_.resize(col_.size());
        for (Index i = 0; i < dim_; ++i) {
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                base_[k] = base.coeff(i, col_[k]);
                slope_[k] = slope.coeff(i, col_[k]);
            }
        }
        const double asym = (base - SparseReal(base.transpose())).norm() +
                            (slope - SparseReal(slope.transpose())).norm();
        require(asym <= 1e-12 * (1.0 + base.norm() + slope.norm()), ErrorKind::symmetry_violation,
                "linear Hamiltonian terms must be symmetric");
    }

    Index dim() const noexcept { return dim_; }
    std::size_t nonzeros() const noexcept { return col_.size(); }

    SparseReal base() const { return assemble(1.0, 0.0); }
    SparseReal slope() const { return assemble(0.0, 1.0); }
    SparseReal sparse_at(double s) const { return assemble(1.0, s); }

    Eigen::MatrixXd dense_real(double s) const { return Eigen::MatrixXd(sparse_at(s)); }

    OperatorMatrix at(double s) const {
        return OperatorMatrix(dense_real(s).cast<cplx>(), true);
    }

    /// Gershgorin interval of H(s).
    std::pair<double, double> gershgorin(double s) const {
        double lo = 0.0, hi = 0.0;
        bool first = true;
        for (Index i = 0; i < dim_; ++i) {
            double centre = 0.0, radius = 0.0;
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                const double v = base_[k] + s * slope_[k];
                if (col_[k] == i) centre = v;
                else radius += std::abs(v);
            }
            if (first) {
                lo = centre - radius;
                hi = centre + radius;
                first = false;
            } else {
                lo = std::min(lo, centre - radius);
                hi = std::max(hi, centre + radius);
            }
        }
        return {lo, hi};
    }

    /// Spectral enclosure valid for every s in [s0, s1]; Gershgorin bounds are convex in s.
    std::pair<double, double> spectral_bounds(double s0, double s1) const {
        const auto [lo0, hi0] = gershgorin(s0);
        const auto [lo1, hi1] = gershgorin(s1);
        return {std::min(lo0, lo1), std::max(hi0, hi1)};
    }

    void values_at(double s, std::vector<double>& out) const {
        out.resize(col_.size());
        for (std::size_t k = 0; k < col_.size(); ++k) out[k] = base_[k] + s * slope_[k];
    }

    /// y = (H - shift) x * scale with H given by precomputed CSR values.
    void apply(const std::vector<double>& values, const cplx* x, cplx* y, double shift,
               double scale) const {
        for (Index i = 0; i < dim_; ++i) {
            cplx acc = -shift * x[i];
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += values[k] * x[col_[k]];
            y[i] = scale * acc;
        }
    }

    /// E^T H E for a real isometry E (dim x m), e.g. a parity-sector basis.
    LinearHamiltonian project(const SparseReal& isometry) const {
        require(isometry.rows() == dim_, ErrorKind::invalid_parameter, "isometry row count mismatch");
        const SparseReal et = isometry.transpose();
        SparseReal b = et * base() * isometry;
        SparseReal s = et * slope() * isometry;
        b.prune(0.0, 1e-14);
        s.prune(0.0, 1e-14);
        return LinearHamiltonian(b, s);
    }

private:
    SparseReal assemble(double wb, double ws) const {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(col_.size());
        for (Index i = 0; i < dim_; ++i)
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                const double v = wb * base_[k] + ws * slope_[k];
                if (v != 0.0) t.emplace_back(i, col_[k], v);
            }
        SparseReal m(dim_, dim_);
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }

    Index dim_ = 0;
    std::vector<int> row_ptr_;
    std::vector<int> col_;
    std::vector<double> base_;
    std::vector<double> slope_;
};

/// J_0(x) ... J_{k_max}(x) by Miller's backward recurrence, normalized with
/// J_0 + 2 sum J_{2k} = 1.  Valid for any finite x >= 0.
inline std::vector<double> bessel_j_sequence(double x, std::size_t k_max) {
    std::vector<double> j(k_max + 1, 0.0);
    if (x == 0.0) {
        j[0] = 1.0;
        return j;
    }
    const std::size_t start = k_max + 20 + static_cast<std::size_t>(x) +
                              static_cast<std::size_t>(10.0 * std::cbrt(x + 1.0));
    double next = 0.0, cur = 1e-300, norm = 0.0;
    std::vector<double> tmp(start + 2, 0.0);
    tmp[start] = cur;
    for (std::size_t k = start; k > 0; --k) {
        const double prev = 2.0 * static_cast<double>(k) / x * cur - next;
        next = cur;
        cur = prev;
        tmp[k - 1] = cur;
        if (std::abs(cur) > 1e250) {
            for (std::size_t m = k - 1; m <= start; ++m) tmp[m] *= 1e-250;
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    norm = tmp[0];
    for (std::size_t k = 2; k <= start; k += 2) norm += 2.0 * tmp[k];
    for (std::size_t k = 0; k <= k_max; ++k) j[k] = tmp[k] / norm;
    return j;
}

/// exp(-i H(s) dt) psi by a Chebyshev expansion on a fixed spectral interval.
///
/// The interval must enclose the spectrum of every H(s) the propagator is used with;
/// the expansion is truncated once the Bessel weights fall below `tolerance`, which
/// makes each step unitary to round-off.
class ChebyshevPropagator {
public:
    ChebyshevPropagator(const LinearHamiltonian& h, double e_min, double e_max, double dt,
                        double tolerance = 1e-16)
        : h_(&h), dt_(dt) {
        require(std::isfinite(dt) && std::isfinite(e_min) && std::isfinite(e_max) && e_max >= e_min,
                ErrorKind::invalid_parameter, "invalid Chebyshev propagator setup");
        const double pad = 1e-9 * std::max({std::abs(e_min), std::abs(e_max), 1.0});
        centre_ = 0.5 * (e_max + e_min);
        half_width_ = 0.5 * (e_max - e_min) + pad;
        const double x = std::abs(half_width_ * dt);
        const auto k_max = static_cast<std::size_t>(x + 12.0 * std::cbrt(x + 1.0) + 40.0);
        const std::vector<double> j = bessel_j_sequence(x, k_max);
        std::size_t order = 1;
        for (std::size_t k = 0; k <= k_max; ++k)
            if (std::abs(j[k]) > tolerance) order = k + 1;
        coeffs_.resize(order);
        // exp(-i x T) expansion: sum (2 - delta_k0) (-i)^k J_k(x) T_k; negative dt flips odd terms.
        const cplx minus_i(0.0, -1.0);
        cplx ipow(1.0, 0.0);
        for (std::size_t k = 0; k < order; ++k) {
            const double sign = (dt < 0.0 && (k % 2 == 1)) ? -1.0 : 1.0;
            coeffs_[k] = (k == 0 ? 1.0 : 2.0) * ipow * (sign * j[k]);
            ipow *= minus_i;
        }
        phase_ = std::exp(cplx(0.0, -centre_ * dt));
        const auto n = static_cast<std::size_t>(h.dim());
        t0_.resize(n);
        t1_.resize(n);
        t2_.resize(n);
        acc_.resize(n);
    }

    std::size_t order() const noexcept { return coeffs_.size(); }
    double dt() const noexcept { return dt_; }

    void step(double s, Eigen::VectorXcd& psi) {
        const auto n = static_cast<std::size_t>(psi.size());
        h_->values_at(s, values_);
        const double scale = 1.0 / half_width_;
        std::copy(psi.data(), psi.data() + n, t0_.begin());
        for (std::size_t i = 0; i < n; ++i) acc_[i] = coeffs_[0] * t0_[i];
        if (coeffs_.size() > 1) {
            h_->apply(values_, t0_.data(), t1_.data(), centre_, scale);
            for (std::size_t i = 0; i < n; ++i) acc_[i] += coeffs_[1] * t1_[i];
        }
        for (std::size_t k = 2; k < coeffs_.size(); ++k) {
            h_->apply(values_, t1_.data(), t2_.data(), centre_, 2.0 * scale);
            const cplx c = coeffs_[k];
            for (std::size_t i = 0; i < n; ++i) {
                t2_[i] -= t0_[i];
                acc_[i] += c * t2_[i];
            }
            std::swap(t0_, t1_);
            std::swap(t1_, t2_);
        }
        for (std::size_t i = 0; i < n; ++i) psi(static_cast<Index>(i)) = phase_ * acc_[i];
    }

private:
    const LinearHamiltonian* h_;
    double dt_;
    double centre_ = 0.0;
    double half_width_ = 1.0;
    cplx phase_{1.0, 0.0};
    std::vector<cplx> coeffs_;
    std::vector<double> values_;
    std::vector<cplx> t0_, t1_, t2_, acc_;
};

}  // namespace qrsweep
