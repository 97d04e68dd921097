#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qrsweep/operators.hpp"

using namespace qrsweep;

namespace {

Eigen::MatrixXcd random_matrix(Index n, std::mt19937& rng) {
    std::normal_distribution<double> d;
    Eigen::MatrixXcd m(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) m(i, j) = cplx(d(rng), d(rng));
    return m;
}

OperatorMatrix random_hermitian(Index n, std::mt19937& rng) {
    const Eigen::MatrixXcd m = random_matrix(n, rng);
    return OperatorMatrix(0.5 * (m + m.adjoint()), true);
}

}  // namespace

TEST(Annihilation, TwoLevel) {
    const auto a = annihilation(2);
    EXPECT_EQ(a(0, 1), cplx(1.0));
    EXPECT_EQ(a(0, 0), cplx(0.0));
    EXPECT_EQ(a(1, 0), cplx(0.0));
    EXPECT_EQ(a(1, 1), cplx(0.0));
}

TEST(Annihilation, SuperdiagonalIsSqrtN) {
    const auto a = annihilation(4);
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j) {
            const double want = (j == i + 1) ? std::sqrt(double(j)) : 0.0;
            EXPECT_DOUBLE_EQ(a(i, j).real(), want);
            EXPECT_DOUBLE_EQ(a(i, j).imag(), 0.0);
        }
}

TEST(Annihilation, CommutatorTruncationSignature) {
    const Index n = 7;
    const auto a = annihilation(n);
    const auto ad = creation(n);
    const Eigen::MatrixXcd c = (a * ad - ad * a).matrix();
    Eigen::MatrixXcd want = Eigen::MatrixXcd::Identity(n, n);
    want(n - 1, n - 1) = -double(n - 1);
    EXPECT_LT((c - want).norm(), 1e-14);
}

TEST(Annihilation, RejectsTinyTruncation) {
    EXPECT_THROW(annihilation(1), Error);
    try {
        annihilation(0);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_truncation);
    }
}

TEST(Kron, IdentityAndPauli) {
    const auto i6 = kron(OperatorMatrix::identity(2), OperatorMatrix::identity(3));
    EXPECT_LT((i6.matrix() - Eigen::MatrixXcd::Identity(6, 6)).norm(), 1e-15);
    EXPECT_TRUE(i6.hermitian_hint());

    const auto zi = kron(pauli::z(), OperatorMatrix::identity(2));
    const Eigen::VectorXcd d = zi.matrix().diagonal();
    EXPECT_EQ(d(0), cplx(1.0));
    EXPECT_EQ(d(1), cplx(1.0));
    EXPECT_EQ(d(2), cplx(-1.0));
    EXPECT_EQ(d(3), cplx(-1.0));
}

TEST(Kron, MixedProductProperty) {
    std::mt19937 rng(11);
    const OperatorMatrix a(random_matrix(2, rng)), b(random_matrix(3, rng));
    const OperatorMatrix c(random_matrix(2, rng)), d(random_matrix(3, rng));
    const Eigen::MatrixXcd lhs = (kron(a, b) * kron(c, d)).matrix();
    const Eigen::MatrixXcd rhs = kron(a * c, b * d).matrix();
    EXPECT_LT((lhs - rhs).norm(), 1e-12 * lhs.norm());
}

TEST(Displacement, ZeroIsIdentity) {
    const auto d = displacement(0.0, 6);
    EXPECT_LT((d.matrix() - Eigen::MatrixXcd::Identity(6, 6)).norm(), 1e-14);
}

TEST(Displacement, CoherentStatePoissonWeights) {
    const auto d = displacement(1.0, 40);
    double factorial = 1.0;
    for (Index n = 0; n <= 5; ++n) {
        if (n > 0) factorial *= double(n);
        EXPECT_NEAR(std::norm(d(n, 0)), std::exp(-1.0) / factorial, 1e-12) << "n=" << n;
    }
}

TEST(Displacement, InverseWithinTolerance) {
    for (double a : {0.5, 1.0, 2.0, 3.0}) {
        const auto n = static_cast<Index>(std::ceil(10.0 * (a * a + 1.0)));
        const auto prod = displacement(a, n) * displacement(-a, n);
        // Columns far from the truncation edge are exact; compare the low block.
        const Index k = n / 2;
        const Eigen::MatrixXcd block = prod.matrix().topLeftCorner(k, k);
        EXPECT_LT((block - Eigen::MatrixXcd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-8) << a;
    }
}

TEST(Displacement, RejectsNonFinite) {
    EXPECT_THROW(displacement(cplx(std::nan(""), 0.0), 4), Error);
    try {
        displacement(cplx(INFINITY, 0.0), 4);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
    }
}

TEST(Displacement, TruncationDefectShrinksWithTruncation) {
    // The truncated exponential is unitary by construction; its truncation defect is the
    // distance of the vacuum column from the infinite-space coherent state.
    for (double a : {0.5, 1.0, 2.0, 3.0}) {
        double previous = INFINITY;
        for (Index n : {8, 12, 16, 24, 32, 48}) {
            Eigen::VectorXcd coherent(n);
            double log_factorial = 0.0;
            for (Index m = 0; m < n; ++m) {
                if (m > 0) log_factorial += std::log(double(m));
                coherent(m) = std::exp(-0.5 * a * a + double(m) * std::log(a) - 0.5 * log_factorial);
            }
            const double defect = (displacement(a, n).matrix().col(0) - coherent).norm();
            EXPECT_LE(defect, previous * (1.0 + 1e-9) + 1e-13) << "alpha=" << a << " N=" << n;
            previous = defect;
        }
        EXPECT_LT(previous, 1e-6) << "alpha=" << a;
    }
}

TEST(EigHermitian, DiagonalAndPauli) {
    Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(4, 4);
    d.diagonal() << 3.0, -1.0, 2.0, 0.5;
    const auto es = eig_hermitian(OperatorMatrix(d, true));
    EXPECT_NEAR(es.values(0), -1.0, 1e-14);
    EXPECT_NEAR(es.values(1), 0.5, 1e-14);
    EXPECT_NEAR(es.values(2), 2.0, 1e-14);
    EXPECT_NEAR(es.values(3), 3.0, 1e-14);

    const auto sx = eig_hermitian(pauli::x());
    EXPECT_NEAR(sx.values(0), -1.0, 1e-14);
    EXPECT_NEAR(sx.values(1), 1.0, 1e-14);
}

TEST(EigHermitian, RejectsNonHermitian) {
    Eigen::MatrixXcd m(2, 2);
    m << 0, 1, 0, 0;
    try {
        eig_hermitian(OperatorMatrix(m));
        FAIL() << "expected symmetry violation";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::symmetry_violation);
    }
    EXPECT_THROW(OperatorMatrix(m, true), Error);
}

TEST(EigHermitian, ResidualsOrthonormalityReconstruction) {
    std::mt19937 rng(3);
    for (Index n : {5, 40, 120}) {
        const auto h = random_hermitian(n, rng);
        const auto es = eig_hermitian(h);
        const double hn = h.matrix().operatorNorm();
        for (Index k = 1; k < n; ++k) EXPECT_LE(es.values(k - 1), es.values(k));
        for (Index k = 0; k < n; ++k) {
            const double r = (h.matrix() * es.vectors.col(k) - es.values(k) * es.vectors.col(k)).norm();
            EXPECT_LE(r, 1e-10 * hn);
        }
        const Eigen::MatrixXcd gram = es.vectors.adjoint() * es.vectors;
        EXPECT_LE((gram - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
        const Eigen::MatrixXcd rec =
            es.vectors * es.values.cast<cplx>().asDiagonal() * es.vectors.adjoint();
        EXPECT_LE((rec - h.matrix()).operatorNorm(), 1e-9 * hn);
    }
}

TEST(PropagateStep, ZeroHamiltonianIsIdentity) {
    const OperatorMatrix zero(Eigen::MatrixXcd::Zero(3, 3), true);
    const auto psi = StateVector::normalized(Eigen::Vector3cd(1.0, cplx(0.0, 2.0), -0.5));
    const auto out = propagate_step(zero, 0.7, psi);
    EXPECT_LT((out.amplitudes() - psi.amplitudes()).norm(), 1e-15);
}

TEST(PropagateStep, DiagonalPhases) {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(3, 3);
    h.diagonal() << 0.3, -1.2, 4.0;
    const auto psi = StateVector::normalized(Eigen::Vector3cd(1.0, 2.0, cplx(0.0, 3.0)));
    const double dt = 0.37;
    const auto out = propagate_step(OperatorMatrix(h, true), dt, psi);
    for (Index k = 0; k < 3; ++k) {
        const cplx want = psi[k] * std::exp(cplx(0.0, -h(k, k).real() * dt));
        EXPECT_LT(std::abs(out[k] - want), 1e-14);
        EXPECT_NEAR(std::norm(out[k]), std::norm(psi[k]), 1e-15);
    }
}

TEST(PropagateStep, RabiFlopSwapsPopulation) {
    // H = -(delta/2) sx, psi = |up>, dt = pi/delta gives a full flip to |down>.
    const double delta = 1.3;
    const auto h = (-0.5 * delta) * pauli::x();
    const auto out = propagate_step(h, std::numbers::pi / delta, StateVector::basis(2, 0));
    EXPECT_NEAR(std::norm(out[1]), 1.0, 1e-14);
    EXPECT_NEAR(std::norm(out[0]), 0.0, 1e-14);

    // Cross-check against a fine classical RK4 integration of i dpsi/dt = H psi.
    Eigen::Vector2cd y(1.0, 0.0);
    const int steps = 20000;
    const double h_step = std::numbers::pi / delta / steps;
    auto f = [&](const Eigen::Vector2cd& v) -> Eigen::Vector2cd {
        return cplx(0.0, -1.0) * (h.matrix() * v);
    };
    for (int i = 0; i < steps; ++i) {
        const Eigen::Vector2cd k1 = f(y), k2 = f(y + 0.5 * h_step * k1), k3 = f(y + 0.5 * h_step * k2),
                               k4 = f(y + h_step * k3);
        y += h_step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    EXPECT_LT((y - out.amplitudes()).norm(), 1e-10);
}

TEST(PropagateStep, UnitarityAndEnergyConservation) {
    std::mt19937 rng(5);
    const auto h = random_hermitian(12, rng);
    const double hn = h.matrix().operatorNorm();
    Eigen::VectorXcd v = random_matrix(12, rng).col(0);
    auto psi = StateVector::normalized(v);
    const double e0 = std::real(psi.amplitudes().dot(h.matrix() * psi.amplitudes()));
    // The exact exponential is reused across the 1e5 steps, as the runner would.
    const Eigen::MatrixXcd u = unitary_exponential(h, 0.01).matrix();
    Eigen::VectorXcd a = psi.amplitudes();
    for (int i = 0; i < 100000; ++i) {
        const double before = a.norm();
        a = u * a;
        if (i % 997 == 0) ASSERT_LE(std::abs(a.norm() - before), 1e-12);
    }
    const double e1 = std::real(a.dot(h.matrix() * a));
    EXPECT_LE(std::abs(e1 - e0), 1e-9 * hn);
    const auto one = propagate_step(h, 0.01, psi);
    EXPECT_LE(std::abs(one.norm() - 1.0), 1e-12);
}

TEST(UnitaryExponential, PadeBranchAgreesWithEigenBranch) {
    std::mt19937 rng(9);
    const auto h = random_hermitian(300, rng);
    const auto u = unitary_exponential(h, 0.05);  // dim > 256: scaling and squaring
    const auto es = eig_hermitian(h);
    const Eigen::MatrixXcd ref = es.vectors *
                                 (es.values.cast<cplx>() * cplx(0.0, -0.05)).array().exp().matrix().asDiagonal() *
                                 es.vectors.adjoint();
    EXPECT_LT((u.matrix() - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StateVector, RejectsUnnormalized) {
    EXPECT_THROW(StateVector(Eigen::Vector2cd(1.0, 1.0)), Error);
    EXPECT_NO_THROW(StateVector::normalized(Eigen::Vector2cd(1.0, 1.0)));
}
