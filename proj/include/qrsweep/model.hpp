// model.hpp: the biased quantum Rabi Hamiltonian
//
//   H = -(delta/2) sx - (epsilon/2) sz + omega a^dag a + g sz (a + a^dag)
//
// its multi-mode generalization, the Z2 parity symmetry at epsilon = 0, and the three
// labeled readout bases (normal, superradiant, displaced-number).
//
// Conventions: qubit first in the tensor product (index = q * N + n), |up> = 0, |down> = 1,
// sz|up> = |up>.  Parity is sx (x) (-1)^n so that the ground state |->,0> has parity +1.

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "qrsweep/errors.hpp"
#include "qrsweep/operators.hpp"
#include "qrsweep/propagator.hpp"

namespace qrsweep {

/// max(32, ceil(10 ((g/omega)^2 + 1)))
inline Index default_n_fock(double g_over_omega) {
    const double r2 = g_over_omega * g_over_omega;
    return std::max<Index>(32, static_cast<Index>(std::ceil(10.0 * (r2 + 1.0) - 1e-9)));
}

struct QrmParams {
    double delta = 1.0;
    double epsilon = 0.0;
    double omega = 1.0;
    double g = 0.0;
    Index n_fock = 32;

    double g_over_omega() const { return g / omega; }
    double delta_over_omega() const { return delta / omega; }
    Index dim() const { return 2 * n_fock; }

    void validate() const {
        require(std::isfinite(delta) && std::isfinite(epsilon) && std::isfinite(omega) &&
                    std::isfinite(g),
                ErrorKind::invalid_parameter, "Rabi parameters must be finite");
        require(omega > 0.0, ErrorKind::invalid_parameter, "oscillator frequency must be positive");
        require_truncation(n_fock);
    }
};

struct Mode {
    double omega = 1.0;
    double g = 0.0;
    Index n_fock = 8;
};

struct MultiModeParams {
    double delta = 1.0;
    std::vector<Mode> modes;

    Index oscillator_dim() const {
        Index d = 1;
        for (const Mode& m : modes) d *= m.n_fock;
        return d;
    }
    Index dim() const { return 2 * oscillator_dim(); }

    void validate() const {
        require(!modes.empty(), ErrorKind::invalid_parameter, "at least one oscillator mode is required");
        require(std::isfinite(delta), ErrorKind::invalid_parameter, "qubit gap must be finite");
        for (const Mode& m : modes) {
            require(std::isfinite(m.omega) && std::isfinite(m.g), ErrorKind::invalid_parameter,
                    "mode parameters must be finite");
            require(m.omega > 0.0, ErrorKind::invalid_parameter, "mode frequencies must be positive");
            require_truncation(m.n_fock);
        }
    }

    static MultiModeParams single(const QrmParams& p) {
        return MultiModeParams{p.delta, {Mode{p.omega, p.g, p.n_fock}}};
    }
};

/// Which Hamiltonian parameter a linear schedule drives.
enum class SweptParameter { delta, epsilon };

// ---------------------------------------------------------------------------
// Labels

enum class Scheme { bare, normal, superradiant, displaced, eigen };
/// up/down for bare and displaced, right/left for normal, plus/minus for superradiant.
enum class QubitLabel { up, down, right, left, plus, minus, none };

inline std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::bare: return "bare";
        case Scheme::normal: return "normal";
        case Scheme::superradiant: return "superradiant";
        case Scheme::displaced: return "displaced";
        case Scheme::eigen: return "eigen";
    }
    return "?";
}

inline std::string to_string(QubitLabel q) {
    switch (q) {
        case QubitLabel::up: return "up";
        case QubitLabel::down: return "down";
        case QubitLabel::right: return "right";
        case QubitLabel::left: return "left";
        case QubitLabel::plus: return "plus";
        case QubitLabel::minus: return "minus";
        case QubitLabel::none: return "none";
    }
    return "?";
}

inline std::optional<Scheme> scheme_from_string(const std::string& s) {
    for (Scheme v : {Scheme::bare, Scheme::normal, Scheme::superradiant, Scheme::displaced, Scheme::eigen})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

inline std::optional<QubitLabel> qubit_label_from_string(const std::string& s) {
    for (QubitLabel v : {QubitLabel::up, QubitLabel::down, QubitLabel::right, QubitLabel::left,
                         QubitLabel::plus, QubitLabel::minus, QubitLabel::none})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

struct BasisLabel {
    Scheme scheme = Scheme::bare;
    QubitLabel qubit = QubitLabel::none;
    std::vector<int> photons;  // one entry per mode; eigen labels store the level index

    static BasisLabel single(Scheme s, QubitLabel q, int n) { return {s, q, {n}}; }
    static BasisLabel eigen(int level) { return {Scheme::eigen, QubitLabel::none, {level}}; }

    int n() const { return photons.empty() ? 0 : photons.front(); }

    bool valid() const {
        if (photons.empty()) return false;
        for (int k : photons)
            if (k < 0) return false;
        switch (scheme) {
            case Scheme::bare:
            case Scheme::displaced: return qubit == QubitLabel::up || qubit == QubitLabel::down;
            case Scheme::normal: return qubit == QubitLabel::right || qubit == QubitLabel::left;
            case Scheme::superradiant: return qubit == QubitLabel::plus || qubit == QubitLabel::minus;
            case Scheme::eigen: return qubit == QubitLabel::none && photons.size() == 1;
        }
        return false;
    }

    std::string photons_string() const {
        std::string s;
        for (std::size_t i = 0; i < photons.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(photons[i]);
        }
        return s;
    }

    std::string to_string() const {
        return qrsweep::to_string(scheme) + "(" + qrsweep::to_string(qubit) + "," + photons_string() + ")";
    }

    auto operator<=>(const BasisLabel&) const = default;
};

struct ParitySector {
    int sign = 1;

    explicit ParitySector(int s = 1) : sign(s) {
        require(s == 1 || s == -1, ErrorKind::invalid_parameter, "parity sector sign must be +1 or -1");
    }
    static ParitySector symmetric() { return ParitySector(1); }
    static ParitySector antisymmetric() { return ParitySector(-1); }
    ParitySector opposite() const { return ParitySector(-sign); }
    bool operator==(const ParitySector&) const = default;
};

// ---------------------------------------------------------------------------
// Hamiltonians

namespace detail {

inline void add(std::vector<Eigen::Triplet<double>>& t, Index i, Index j, double v) {
    if (v != 0.0) t.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
}

inline SparseReal from_triplets(Index dim, const std::vector<Eigen::Triplet<double>>& t) {
    SparseReal m(dim, dim);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

struct Terms {
    SparseReal sigma_x;  // -(1/2) sx (x) I
    SparseReal sigma_z;  // -(1/2) sz (x) I
    SparseReal field;    // sum_j omega_j n_j + g_j sz (a_j + a_j^dag)
};

inline Terms multimode_terms(const MultiModeParams& p) {
    p.validate();
    const Index osc = p.oscillator_dim();
    const Index dim = 2 * osc;
    // Mixed-radix strides, mode 1 most significant.
    std::vector<Index> stride(p.modes.size(), 1);
    for (std::size_t j = p.modes.size(); j-- > 1;) stride[j - 1] = stride[j] * p.modes[j].n_fock;

    std::vector<Eigen::Triplet<double>> tx, tz, tf;
    for (Index q = 0; q < 2; ++q) {
        const double sz = q == 0 ? 1.0 : -1.0;
        for (Index o = 0; o < osc; ++o) {
            const Index i = q * osc + o;
            add(tx, i, (1 - q) * osc + o, -0.5);
            add(tz, i, i, -0.5 * sz);
            double diag = 0.0;
            for (std::size_t j = 0; j < p.modes.size(); ++j) {
                const Index nj = (o / stride[j]) % p.modes[j].n_fock;
                diag += p.modes[j].omega * static_cast<double>(nj);
                if (nj + 1 < p.modes[j].n_fock) {
                    const double c = p.modes[j].g * sz * std::sqrt(static_cast<double>(nj + 1));
                    add(tf, i, i + stride[j], c);
                    add(tf, i + stride[j], i, c);
                }
            }
            add(tf, i, i, diag);
        }
    }
    return {from_triplets(dim, tx), from_triplets(dim, tz), from_triplets(dim, tf)};
}

}  // namespace detail

/// Full-space H(s) = base + s * slope with the swept parameter s replacing delta or epsilon.
inline LinearHamiltonian multimode_linear(const MultiModeParams& p, double epsilon,
                                          SweptParameter swept) {
    const detail::Terms t = detail::multimode_terms(p);
    if (swept == SweptParameter::delta) {
        return LinearHamiltonian(SparseReal(t.field + epsilon * t.sigma_z), t.sigma_x);
    }
    return LinearHamiltonian(SparseReal(t.field + p.delta * t.sigma_x), t.sigma_z);
}

inline LinearHamiltonian qrm_linear(const QrmParams& p, SweptParameter swept) {
    p.validate();
    return multimode_linear(MultiModeParams::single(p), p.epsilon, swept);
}

inline SparseReal qrm_sparse(const QrmParams& p) {
    return qrm_linear(p, SweptParameter::epsilon).sparse_at(p.epsilon);
}

/// Dense 2 n_fock dimensional Rabi Hamiltonian.
inline OperatorMatrix build_qrm(const QrmParams& p) {
    return qrm_linear(p, SweptParameter::epsilon).at(p.epsilon);
}

inline constexpr Index default_dimension_cap = 4096;

inline OperatorMatrix build_multimode(const MultiModeParams& p, double epsilon,
                                      Index dimension_cap = default_dimension_cap) {
    p.validate();
    require(std::isfinite(epsilon), ErrorKind::invalid_parameter, "bias must be finite");
    require(p.dim() <= dimension_cap, ErrorKind::resource_limit,
            "multimode dimension " + std::to_string(p.dim()) + " exceeds cap " +
                std::to_string(dimension_cap));
    return multimode_linear(p, epsilon, SweptParameter::epsilon).at(epsilon);
}

/// Semiclassical critical gap 4 g^2 / omega.
inline double critical_delta(double g, double omega) {
    require(omega > 0.0, ErrorKind::invalid_parameter, "oscillator frequency must be positive");
    return 4.0 * g * g / omega;
}

// ---------------------------------------------------------------------------
// Parity

inline OperatorMatrix parity_operator(const QrmParams& p) {
    p.validate();
    const Index n = p.n_fock;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    for (Index k = 0; k < n; ++k) {
        const double s = (k % 2 == 0) ? 1.0 : -1.0;
        m(k, n + k) = s;
        m(n + k, k) = s;
    }
    return OperatorMatrix(std::move(m), true);
}

/// Normal-basis qubit label of the k-th state of a parity sector.
inline QubitLabel sector_qubit(ParitySector sector, Index k) {
    const bool even = k % 2 == 0;
    return (even == (sector.sign > 0)) ? QubitLabel::right : QubitLabel::left;
}

/// Columns are |->,0>, |<-,1>, |->,2>, ... (sign +1) or |<-,0>, |->,1>, ... (sign -1).
inline SparseReal sector_isometry(Index n_fock, ParitySector sector) {
    require_truncation(n_fock);
    const double r = 1.0 / std::sqrt(2.0);
    std::vector<Eigen::Triplet<double>> t;
    for (Index k = 0; k < n_fock; ++k) {
        const double down = sector_qubit(sector, k) == QubitLabel::right ? r : -r;
        t.emplace_back(static_cast<int>(k), static_cast<int>(k), r);
        t.emplace_back(static_cast<int>(n_fock + k), static_cast<int>(k), down);
    }
    SparseReal e(2 * n_fock, n_fock);
    e.setFromTriplets(t.begin(), t.end());
    return e;
}

struct SectorProjector {
    OperatorMatrix projector;
    std::vector<BasisLabel> subspace_basis;
};

inline SectorProjector parity_projector(const QrmParams& p, ParitySector sector) {
    const OperatorMatrix parity = parity_operator(p);
    const Eigen::MatrixXcd proj =
        0.5 * (Eigen::MatrixXcd::Identity(p.dim(), p.dim()) + double(sector.sign) * parity.matrix());
    std::vector<BasisLabel> basis;
    basis.reserve(static_cast<std::size_t>(p.n_fock));
    for (Index k = 0; k < p.n_fock; ++k)
        basis.push_back(BasisLabel::single(Scheme::normal, sector_qubit(sector, k), static_cast<int>(k)));
    return {OperatorMatrix(proj, true), std::move(basis)};
}

/// Parity sign of a full-space state, if it is a parity eigenstate to 1e-8.
inline std::optional<ParitySector> parity_of(const QrmParams& p, const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd ppsi = parity_operator(p).matrix() * psi;
    const double e = std::real(psi.dot(ppsi)) / psi.squaredNorm();
    if (std::abs(e - 1.0) < 1e-8) return ParitySector(1);
    if (std::abs(e + 1.0) < 1e-8) return ParitySector(-1);
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Displaced Fock states and labeled bases

/// Tail weight allowed beyond the truncation for displaced constructions.
inline constexpr double displaced_tail_tolerance = 1e-8;

/// D(alpha)|n> for real alpha, truncated to n_fock levels.  Built by the recurrence
/// D|k+1> = (a^dag - alpha) D|k> / sqrt(k+1) from the coherent state in an enlarged buffer;
/// throws insufficient-truncation when more than the tolerated weight lies beyond n_fock.
inline Eigen::VectorXd displaced_fock(double alpha, Index n, Index n_fock) {
    require_truncation(n_fock);
    require(std::isfinite(alpha), ErrorKind::invalid_parameter, "displacement must be finite");
    require(n >= 0 && n < n_fock, ErrorKind::invalid_parameter, "photon number outside truncation");
    const double a = std::abs(alpha);
    const double sq = std::sqrt(static_cast<double>(n_fock));
    const Index buffer = n_fock + 40 +
                         static_cast<Index>(std::ceil(2.0 * a * sq + a * a + 10.0 * (sq + a)));
    Eigen::VectorXd v(buffer);
    for (Index m = 0; m < buffer; ++m) {
        if (alpha == 0.0) {
            v(m) = m == 0 ? 1.0 : 0.0;
            continue;
        }
        const double md = static_cast<double>(m);
        const double logmag = -0.5 * a * a + md * std::log(a) - 0.5 * std::lgamma(md + 1.0);
        const double sign = (alpha < 0.0 && (m % 2 == 1)) ? -1.0 : 1.0;
        v(m) = sign * std::exp(logmag);
    }
    Eigen::VectorXd next(buffer);
    for (Index k = 0; k < n; ++k) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(k + 1));
        next(0) = -alpha * v(0) * inv;
        for (Index m = 1; m < buffer; ++m)
            next(m) = (std::sqrt(static_cast<double>(m)) * v(m - 1) - alpha * v(m)) * inv;
        v.swap(next);
    }
    const double tail = v.tail(buffer - n_fock).squaredNorm();
    require(tail <= displaced_tail_tolerance, ErrorKind::insufficient_truncation,
            "displaced Fock state n=" + std::to_string(n) + " at alpha=" + std::to_string(alpha) +
                " leaves weight " + std::to_string(tail) + " beyond n_fock=" + std::to_string(n_fock));
    Eigen::VectorXd out = v.head(n_fock);
    return out / out.norm();
}

namespace detail {

inline Eigen::VectorXcd qubit_product(const Eigen::VectorXd& up, const Eigen::VectorXd& down) {
    const Index n = up.size();
    Eigen::VectorXcd v(2 * n);
    v.head(n) = up.cast<cplx>();
    v.tail(n) = down.cast<cplx>();
    return v;
}

inline void check_photons(const QrmParams& p, Index n) {
    p.validate();
    require(n >= 0 && n < p.n_fock, ErrorKind::invalid_parameter,
            "photon number " + std::to_string(n) + " outside truncation " + std::to_string(p.n_fock));
}

}  // namespace detail

/// |->,n> or |<-,n> with |-> = (|up> + |down>)/sqrt2.
inline StateVector normal_state(const QrmParams& p, QubitLabel gamma, Index n) {
    detail::check_photons(p, n);
    require(gamma == QubitLabel::right || gamma == QubitLabel::left, ErrorKind::invalid_parameter,
            "normal states take right/left qubit labels");
    Eigen::VectorXd fock = Eigen::VectorXd::Zero(p.n_fock);
    fock(n) = 1.0 / std::sqrt(2.0);
    const double s = gamma == QubitLabel::right ? 1.0 : -1.0;
    return StateVector(detail::qubit_product(fock, s * fock));
}

/// (|up> D(-g/omega)|n> +- |down> D(g/omega)|n>)/sqrt2.  The displacement signs follow
/// the sign of the coupling term, so |+,0> is exactly the ground state at delta = 0.
inline StateVector superradiant_state(const QrmParams& p, QubitLabel pm, Index n) {
    detail::check_photons(p, n);
    require(pm == QubitLabel::plus || pm == QubitLabel::minus, ErrorKind::invalid_parameter,
            "superradiant states take plus/minus labels");
    const double alpha = p.g_over_omega();
    const double r = 1.0 / std::sqrt(2.0);
    const Eigen::VectorXd up = displaced_fock(-alpha, n, p.n_fock);
    const Eigen::VectorXd down = displaced_fock(alpha, n, p.n_fock);
    const double s = pm == QubitLabel::plus ? 1.0 : -1.0;
    return StateVector(detail::qubit_product(r * up, s * r * down));
}

/// |up> (x) D(-g/omega)|n>  or  |down> (x) D(+g/omega)|n>.
inline StateVector displaced_state(const QrmParams& p, QubitLabel gamma, Index n) {
    detail::check_photons(p, n);
    require(gamma == QubitLabel::up || gamma == QubitLabel::down, ErrorKind::invalid_parameter,
            "displaced states take up/down labels");
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p.n_fock);
    if (gamma == QubitLabel::up)
        return StateVector(detail::qubit_product(displaced_fock(-p.g_over_omega(), n, p.n_fock), zero),
                           BasisTag::displaced);
    return StateVector(detail::qubit_product(zero, displaced_fock(p.g_over_omega(), n, p.n_fock)),
                       BasisTag::displaced);
}

inline StateVector bare_state(const QrmParams& p, QubitLabel gamma, Index n) {
    detail::check_photons(p, n);
    require(gamma == QubitLabel::up || gamma == QubitLabel::down, ErrorKind::invalid_parameter,
            "bare states take up/down labels");
    return StateVector::basis(p.dim(), (gamma == QubitLabel::up ? 0 : p.n_fock) + n);
}

/// Multimode displaced product |gamma> (x)_j D(-+ g_j/omega_j)|n_j>.
inline StateVector multimode_displaced_state(const MultiModeParams& p, QubitLabel gamma,
                                             const std::vector<int>& photons) {
    p.validate();
    require(photons.size() == p.modes.size(), ErrorKind::invalid_parameter,
            "one photon number per mode is required");
    require(gamma == QubitLabel::up || gamma == QubitLabel::down, ErrorKind::invalid_parameter,
            "displaced states take up/down labels");
    const double sign = gamma == QubitLabel::up ? -1.0 : 1.0;
    Eigen::VectorXd osc = Eigen::VectorXd::Ones(1);
    for (std::size_t j = 0; j < p.modes.size(); ++j) {
        const Mode& m = p.modes[j];
        const Eigen::VectorXd f = displaced_fock(sign * m.g / m.omega, photons[j], m.n_fock);
        Eigen::VectorXd next(osc.size() * f.size());
        for (Index i = 0; i < osc.size(); ++i) next.segment(i * f.size(), f.size()) = osc(i) * f;
        osc.swap(next);
    }
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(osc.size());
    return gamma == QubitLabel::up ? StateVector(detail::qubit_product(osc, zero), BasisTag::displaced)
                                   : StateVector(detail::qubit_product(zero, osc), BasisTag::displaced);
}

struct LabeledState {
    BasisLabel label;
    StateVector state;
};

/// Every constructible state of a labeling scheme (states whose displaced tails do not fit
/// the truncation are omitted).  With a sector, only the states of that parity are returned.
inline std::vector<LabeledState> reference_basis(const QrmParams& p, Scheme scheme,
                                                 std::optional<ParitySector> sector = std::nullopt) {
    p.validate();
    std::vector<LabeledState> out;
    auto in_sector = [&](const StateVector& s) {
        if (!sector) return true;
        const auto par = parity_of(p, s.amplitudes());
        return par && *par == *sector;
    };
    auto push = [&](QubitLabel q, Index n, auto&& make) {
        try {
            StateVector s = make(q, n);
            if (in_sector(s)) out.push_back({BasisLabel::single(scheme, q, static_cast<int>(n)), std::move(s)});
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::insufficient_truncation) throw;
        }
    };
    switch (scheme) {
        case Scheme::bare:
        case Scheme::displaced:
            require(!sector, ErrorKind::invalid_parameter,
                    to_string(scheme) + " states are not parity eigenstates");
            for (QubitLabel q : {QubitLabel::up, QubitLabel::down})
                for (Index n = 0; n < p.n_fock; ++n)
                    push(q, n, [&](QubitLabel qq, Index nn) {
                        return scheme == Scheme::bare ? bare_state(p, qq, nn) : displaced_state(p, qq, nn);
                    });
            break;
        case Scheme::normal:
            for (Index n = 0; n < p.n_fock; ++n)
                for (QubitLabel q : {QubitLabel::right, QubitLabel::left})
                    push(q, n, [&](QubitLabel qq, Index nn) { return normal_state(p, qq, nn); });
            break;
        case Scheme::superradiant:
            for (Index n = 0; n < p.n_fock; ++n)
                for (QubitLabel q : {QubitLabel::plus, QubitLabel::minus})
                    push(q, n, [&](QubitLabel qq, Index nn) { return superradiant_state(p, qq, nn); });
            break;
        case Scheme::eigen:
            throw Error(ErrorKind::invalid_parameter, "eigen labels have no constructed reference basis");
    }
    return out;
}

/// Displaced-number basis of a multimode system, all occupations within the truncations.
inline std::vector<LabeledState> multimode_displaced_basis(const MultiModeParams& p) {
    p.validate();
    std::vector<LabeledState> out;
    const Index osc = p.oscillator_dim();
    for (QubitLabel q : {QubitLabel::up, QubitLabel::down}) {
        for (Index o = 0; o < osc; ++o) {
            std::vector<int> occ(p.modes.size());
            Index rest = o;
            for (std::size_t j = p.modes.size(); j-- > 0;) {
                occ[j] = static_cast<int>(rest % p.modes[j].n_fock);
                rest /= p.modes[j].n_fock;
            }
            try {
                out.push_back({BasisLabel{Scheme::displaced, q, occ}, multimode_displaced_state(p, q, occ)});
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::insufficient_truncation) throw;
            }
        }
    }
    return out;
}

}  // namespace qrsweep
