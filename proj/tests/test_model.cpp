#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "qrsweep/model.hpp"

using namespace qrsweep;

namespace {

std::vector<double> sorted(const Eigen::VectorXd& v) {
    std::vector<double> s(v.data(), v.data() + v.size());
    std::sort(s.begin(), s.end());
    return s;
}

double commutator_norm(const OperatorMatrix& a, const OperatorMatrix& b) {
    return (a.matrix() * b.matrix() - b.matrix() * a.matrix()).norm();
}

}  // namespace

TEST(BuildQrm, DecoupledSpectrum) {
    const QrmParams p{0.7, 0.0, 1.3, 0.0, 12};
    const auto es = eig_hermitian(build_qrm(p));
    std::vector<double> want;
    for (int m = 0; m < 12; ++m) {
        want.push_back(m * 1.3 - 0.35);
        want.push_back(m * 1.3 + 0.35);
    }
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(es.values(static_cast<Index>(i)), want[i], 1e-12);
}

TEST(BuildQrm, ZeroGapGroundEnergyAndSuperradiantGroundState) {
    for (double g : {0.5, 1.0, 2.0}) {
        const QrmParams p{0.0, 0.0, 1.0, g, default_n_fock(g)};
        const auto es = eig_hermitian(build_qrm(p));
        EXPECT_NEAR(es.values(0), -g * g, 1e-9) << "g=" << g;
        // The ground level is doubly degenerate at delta = 0; its span contains |+,0>.
        const StateVector plus0 = superradiant_state(p, QubitLabel::plus, 0);
        const Eigen::VectorXcd c = es.vectors.leftCols(2).adjoint() * plus0.amplitudes();
        EXPECT_GE(c.squaredNorm(), 1.0 - 1e-6);
    }
}

TEST(BuildQrm, SectorGroundStateIsPlusZeroAtZeroGap) {
    const QrmParams p{0.0, 0.0, 1.0, 1.5, default_n_fock(1.5)};
    const SparseReal e = sector_isometry(p.n_fock, ParitySector::symmetric());
    const Eigen::MatrixXd hs = qrm_linear(p, SweptParameter::delta).project(e).dense_real(0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hs);
    const Eigen::VectorXcd ground = e.cast<cplx>() * es.eigenvectors().col(0).cast<cplx>();
    EXPECT_GE(superradiant_state(p, QubitLabel::plus, 0).fidelity(StateVector::normalized(ground)), 1.0 - 1e-6);
}

TEST(BuildQrm, HermitianAndRejectsBadParameters) {
    const QrmParams p{1.1, 0.4, 0.9, 0.8, 20};
    EXPECT_LE(build_qrm(p).hermiticity_defect(), 1e-12);
    EXPECT_THROW(build_qrm(QrmParams{1.0, 0.0, 0.0, 1.0, 10}), Error);
    EXPECT_THROW(build_qrm(QrmParams{1.0, 0.0, 1.0, NAN, 10}), Error);
    try {
        build_qrm(QrmParams{1.0, 0.0, 1.0, 1.0, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_truncation);
    }
}

TEST(Parity, InvolutionAndCommutation) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int trial = 0; trial < 5; ++trial) {
        const QrmParams p{u(rng), 0.0, u(rng), u(rng), 16};
        const OperatorMatrix par = parity_operator(p);
        const OperatorMatrix h = build_qrm(p);
        EXPECT_LE((par.matrix() * par.matrix() - Eigen::MatrixXcd::Identity(p.dim(), p.dim())).cwiseAbs().maxCoeff(),
                  1e-12);
        EXPECT_LE(par.hermiticity_defect(), 1e-15);
        EXPECT_LE(commutator_norm(h, par), 1e-10 * h.norm());
    }
    for (double eps : {0.3, -1.2}) {
        const QrmParams p{1.0, eps, 1.0, 0.7, 16};
        EXPECT_GT(commutator_norm(build_qrm(p), parity_operator(p)), 0.1 * std::abs(eps));
    }
}

TEST(Parity, ExponentialDefinitionDiffersBySign) {
    // exp{i pi (n + s+ s-)} with s+- = (sy +- i sz)/2 gives s+ s- = (1 + sx)/2.
    const QrmParams p{1.0, 0.0, 1.0, 0.5, 6};
    const Eigen::MatrixXcd sp = 0.5 * (pauli::y().matrix() + cplx(0, 1) * pauli::z().matrix());
    const Eigen::MatrixXcd sm = 0.5 * (pauli::y().matrix() - cplx(0, 1) * pauli::z().matrix());
    const OperatorMatrix gen = kron(OperatorMatrix(sp * sm), OperatorMatrix::identity(p.n_fock)) +
                               kron(OperatorMatrix::identity(2), number_operator(p.n_fock));
    const OperatorMatrix literal = unitary_exponential(OperatorMatrix(gen.matrix(), true), -std::numbers::pi);
    EXPECT_LE((literal.matrix() + parity_operator(p).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Parity, ProjectorsAndSectorSpectra) {
    const QrmParams p{2.5, 0.0, 1.0, 1.1, 24};
    const auto plus = parity_projector(p, ParitySector::symmetric());
    const auto minus = parity_projector(p, ParitySector::antisymmetric());
    const Eigen::MatrixXcd& pp = plus.projector.matrix();
    EXPECT_LE((pp * pp - pp).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(pp.trace().real(), double(p.n_fock), 1e-12);
    EXPECT_EQ(plus.subspace_basis.size(), std::size_t(p.n_fock));
    EXPECT_EQ(plus.subspace_basis[0], BasisLabel::single(Scheme::normal, QubitLabel::right, 0));
    EXPECT_EQ(plus.subspace_basis[1], BasisLabel::single(Scheme::normal, QubitLabel::left, 1));
    EXPECT_EQ(minus.subspace_basis[0], BasisLabel::single(Scheme::normal, QubitLabel::left, 0));

    const LinearHamiltonian h = qrm_linear(p, SweptParameter::delta);
    std::vector<double> both;
    for (ParitySector s : {ParitySector::symmetric(), ParitySector::antisymmetric()}) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.project(sector_isometry(p.n_fock, s)).dense_real(p.delta));
        for (Index i = 0; i < es.eigenvalues().size(); ++i) both.push_back(es.eigenvalues()(i));
    }
    std::sort(both.begin(), both.end());
    const auto full = sorted(eig_hermitian(build_qrm(p)).values);
    ASSERT_EQ(both.size(), full.size());
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(both[i], full[i], 1e-10);

    // Off-block norm in the two-sector basis.
    const SparseReal ep = sector_isometry(p.n_fock, ParitySector::symmetric());
    const SparseReal em = sector_isometry(p.n_fock, ParitySector::antisymmetric());
    const Eigen::MatrixXd off = Eigen::MatrixXd(ep).transpose() * h.dense_real(p.delta) * Eigen::MatrixXd(em);
    EXPECT_LE(off.norm(), 1e-12 * h.dense_real(p.delta).norm());
}

TEST(Parity, SectorIsometryMatchesProjector) {
    const QrmParams p{1.0, 0.0, 1.0, 0.5, 10};
    for (ParitySector s : {ParitySector::symmetric(), ParitySector::antisymmetric()}) {
        const Eigen::MatrixXd e(sector_isometry(p.n_fock, s));
        EXPECT_LE((e.transpose() * e - Eigen::MatrixXd::Identity(p.n_fock, p.n_fock)).norm(), 1e-14);
        const Eigen::MatrixXcd proj = e.cast<cplx>() * e.transpose().cast<cplx>();
        EXPECT_LE((proj - parity_projector(p, s).projector.matrix()).norm(), 1e-14);
    }
    EXPECT_THROW(ParitySector(0), Error);
}

TEST(States, SchemesAreOrthonormalAndCarryParity) {
    const QrmParams p{1.0, 0.0, 1.0, 2.0, default_n_fock(2.0)};
    for (Scheme s : {Scheme::bare, Scheme::normal, Scheme::superradiant, Scheme::displaced}) {
        const auto basis = reference_basis(p, s);
        const double tol = (s == Scheme::bare || s == Scheme::normal) ? 1e-10 : 1e-8;
        Eigen::MatrixXcd m(p.dim(), static_cast<Index>(basis.size()));
        for (std::size_t k = 0; k < basis.size(); ++k) m.col(static_cast<Index>(k)) = basis[k].state.amplitudes();
        const Eigen::MatrixXcd gram = m.adjoint() * m;
        EXPECT_LE((gram - Eigen::MatrixXcd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), tol)
            << to_string(s);
        if (s == Scheme::bare || s == Scheme::normal) EXPECT_EQ(basis.size(), std::size_t(p.dim()));
    }
    const auto plus_sector = reference_basis(p, Scheme::superradiant, ParitySector::symmetric());
    for (const auto& ls : plus_sector) {
        const bool even = ls.label.n() % 2 == 0;
        EXPECT_EQ(ls.label.qubit, even ? QubitLabel::plus : QubitLabel::minus) << ls.label.to_string();
    }
    EXPECT_THROW(reference_basis(p, Scheme::displaced, ParitySector::symmetric()), Error);
}

TEST(States, DisplacedFockMatchesDisplacementOperator) {
    const Index n_fock = 60;
    for (double alpha : {-1.5, 0.8, 2.0}) {
        const OperatorMatrix d = displacement(cplx(alpha, 0.0), n_fock);
        for (Index n : {0, 1, 4}) {
            const Eigen::VectorXd v = displaced_fock(alpha, n, n_fock);
            EXPECT_LE((d.matrix().col(n) - v.cast<cplx>()).norm(), 1e-9) << "alpha=" << alpha << " n=" << n;
        }
    }
    EXPECT_THROW(displaced_fock(6.0, 0, 20), Error);
}

TEST(States, DisplacedStatesDiagonalizeZeroGapHamiltonian) {
    const QrmParams p{0.0, 0.0, 1.0, 1.2, 50};
    const OperatorMatrix h = build_qrm(p);
    for (QubitLabel q : {QubitLabel::up, QubitLabel::down})
        for (Index n : {0, 1, 3}) {
            const StateVector s = displaced_state(p, q, n);
            const Eigen::VectorXcd hs = h.matrix() * s.amplitudes();
            const double e = double(n) - p.g * p.g;
            EXPECT_LE((hs - e * s.amplitudes()).norm(), 1e-8);
        }
    // n_up = (a^dag + g/omega)(a + g/omega) counts zero quanta in |up>D(-g/omega)|0>.
    const StateVector up0 = displaced_state(p, QubitLabel::up, 0);
    const OperatorMatrix shifted = annihilation(p.n_fock) + p.g * OperatorMatrix::identity(p.n_fock);
    const Eigen::VectorXcd osc = up0.amplitudes().head(p.n_fock);
    EXPECT_LE((shifted.matrix() * osc).norm(), 1e-8);
}

TEST(States, ConstructorsValidate) {
    const QrmParams p{1.0, 0.0, 1.0, 0.5, 10};
    EXPECT_THROW(normal_state(p, QubitLabel::plus, 0), Error);
    EXPECT_THROW(superradiant_state(p, QubitLabel::plus, 10), Error);
    EXPECT_EQ(displaced_state(p, QubitLabel::up, 0).tag(), BasisTag::displaced);
    EXPECT_TRUE(BasisLabel::single(Scheme::normal, QubitLabel::right, 2).valid());
    EXPECT_FALSE(BasisLabel::single(Scheme::normal, QubitLabel::up, 2).valid());
}

TEST(Multimode, SingleModeReducesToQrm) {
    const QrmParams p{0.8, 0.3, 1.2, 0.6, 14};
    const OperatorMatrix a = build_multimode(MultiModeParams::single(p), p.epsilon);
    EXPECT_LE((a.matrix() - build_qrm(p).matrix()).norm(), 1e-14);
}

TEST(Multimode, DecoupledSpectrumIsMinkowskiSum) {
    const MultiModeParams p{0.9, {{1.0, 0.0, 4}, {2.3, 0.0, 3}}};
    const auto got = sorted(eig_hermitian(build_multimode(p, 0.0)).values);
    std::vector<double> want;
    for (double q : {-0.45, 0.45})
        for (int n1 = 0; n1 < 4; ++n1)
            for (int n2 = 0; n2 < 3; ++n2) want.push_back(q + n1 * 1.0 + n2 * 2.3);
    std::sort(want.begin(), want.end());
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Multimode, ZeroGapGroundEnergy) {
    const MultiModeParams p{0.0, {{1.0, 0.7, 24}, {2.3, 0.9, 20}}};
    const auto e = eig_hermitian(build_multimode(p, 0.0)).values;
    EXPECT_NEAR(e(0), -(0.49 / 1.0 + 0.81 / 2.3), 1e-9);
}

TEST(Multimode, DimensionCapAndDisplacedBasis) {
    const MultiModeParams big{1.0, {{1.0, 0.5, 64}, {2.0, 0.5, 64}}};
    try {
        build_multimode(big, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::resource_limit);
    }
    const MultiModeParams p{0.0, {{1.0, 0.4, 16}, {2.3, 0.3, 14}}};
    const OperatorMatrix h = build_multimode(p, 0.0);
    const StateVector s = multimode_displaced_state(p, QubitLabel::down, {1, 2});
    EXPECT_LE((h.matrix() * s.amplitudes() - (1.0 + 2 * 2.3 - 0.16 - 0.09 / 2.3) * s.amplitudes()).norm(), 1e-8);
}

TEST(CriticalDelta, Values) {
    EXPECT_EQ(critical_delta(0.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(critical_delta(1.0, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(critical_delta(20.0, 1.0), 1600.0);
    EXPECT_THROW(critical_delta(1.0, 0.0), Error);
}

TEST(CriticalDelta, MinimumGapNearCriticalPoint) {
    // Gap between the two lowest levels of the + sector over delta in [0.5, 1.5] x delta_c.
    for (double g : {5.0, 6.0}) {
        const double dc = critical_delta(g, 1.0);
        const QrmParams p{dc, 0.0, 1.0, g, default_n_fock(g)};
        const LinearHamiltonian h =
            qrm_linear(p, SweptParameter::delta).project(sector_isometry(p.n_fock, ParitySector::symmetric()));
        double best_gap = INFINITY, best_delta = 0.0;
        for (int k = 0; k <= 200; ++k) {
            const double d = dc * (0.5 + k / 200.0);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.dense_real(d), Eigen::EigenvaluesOnly);
            const double gap = es.eigenvalues()(1) - es.eigenvalues()(0);
            if (gap < best_gap) {
                best_gap = gap;
                best_delta = d;
            }
        }
        EXPECT_LE(std::abs(best_delta - dc), 0.2 * dc) << "g=" << g << " min at " << best_delta;
    }
}
