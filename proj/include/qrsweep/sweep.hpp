// sweep.hpp: time evolution under linear schedules of delta or epsilon.
//
// The stepper is the piecewise-constant midpoint exponential: on each grid step the
// Hamiltonian is frozen at the step midpoint and its exact exponential is applied.  The
// exponential is evaluated by a Chebyshev expansion on a spectral interval fixed for the
// whole run, so each step costs a handful of sparse products instead of a diagonalization.
//
// Readout projects onto instantaneous eigenvectors.  Eigenvectors get asymptotic labels
// by greedy maximum-overlap matching against a reference scheme (normal, superradiant,
// displaced) at the final parameter value, and are tracked backward through a trace by
// matching eigenvectors of neighbouring samples.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qrsweep/analytics.hpp"
#include "qrsweep/errors.hpp"
#include "qrsweep/model.hpp"
#include "qrsweep/operators.hpp"
#include "qrsweep/propagator.hpp"

namespace qrsweep {

// ---------------------------------------------------------------------------
// Schedule

struct SweepSchedule {
    static constexpr std::size_t min_steps = 1000;
    static constexpr std::size_t default_samples = 400;

    SweptParameter parameter = SweptParameter::delta;
    double start_value = 0.0;
    double end_value = 0.0;
    double rate_v = 1.0;
    std::size_t n_steps = 100000;
    std::vector<double> sample_times;  // within [0, T]; t = T is always emitted

    double duration() const { return std::abs(end_value - start_value) / rate_v; }
    double direction() const { return end_value >= start_value ? 1.0 : -1.0; }
    double value_at(double t) const { return start_value + direction() * rate_v * t; }

    void validate() const {
        require(std::isfinite(start_value) && std::isfinite(end_value), ErrorKind::invalid_parameter,
                "schedule endpoints must be finite");
        require(std::isfinite(rate_v) && rate_v > 0.0, ErrorKind::invalid_parameter,
                "sweep rate must be positive and finite");
        require(std::isfinite(duration()), ErrorKind::invalid_parameter, "sweep duration is not finite");
        require(n_steps >= min_steps, ErrorKind::invalid_parameter,
                "n_steps must be at least " + std::to_string(min_steps));
        const double T = duration();
        const double tol = 1e-12 * std::max(T, 1.0);
        for (std::size_t i = 0; i < sample_times.size(); ++i) {
            require(sample_times[i] >= -tol && sample_times[i] <= T + tol, ErrorKind::invalid_parameter,
                    "sample time outside [0, T]");
            require(i == 0 || sample_times[i] > sample_times[i - 1], ErrorKind::invalid_parameter,
                    "sample times must be strictly increasing");
        }
    }

    /// Linear ramp with n_samples uniform sample times including 0 and T.
    static SweepSchedule linear(SweptParameter parameter, double start, double end, double v,
                                std::size_t n_steps = 100000, std::size_t n_samples = default_samples) {
        SweepSchedule s{parameter, start, end, v, n_steps, {}};
        const double T = s.duration();
        if (n_samples >= 2 && T > 0.0) {
            s.sample_times.resize(n_samples);
            for (std::size_t i = 0; i < n_samples; ++i)
                s.sample_times[i] = T * static_cast<double>(i) / static_cast<double>(n_samples - 1);
            s.sample_times.back() = T;
        }
        return s;
    }
};

// ---------------------------------------------------------------------------
// System: full space or one parity sector

class SweepSystem {
public:
    static SweepSystem qrm(const QrmParams& p, std::optional<ParitySector> sector = std::nullopt) {
        p.validate();
        SweepSystem s;
        s.mm_ = MultiModeParams::single(p);
        s.epsilon_ = p.epsilon;
        s.sector_ = sector;
        if (sector)
            require(p.epsilon == 0.0, ErrorKind::invalid_parameter,
                    "parity sectors require zero bias");
        return s;
    }

    static SweepSystem multimode(const MultiModeParams& p, double epsilon = 0.0) {
        p.validate();
        require(std::isfinite(epsilon), ErrorKind::invalid_parameter, "bias must be finite");
        SweepSystem s;
        s.mm_ = p;
        s.epsilon_ = epsilon;
        return s;
    }

    bool single_mode() const { return mm_.modes.size() == 1; }
    const MultiModeParams& modes() const { return mm_; }
    double epsilon() const { return epsilon_; }
    std::optional<ParitySector> sector() const { return sector_; }

    QrmParams qrm_params() const {
        require(single_mode(), ErrorKind::invalid_parameter, "not a single-mode system");
        const Mode& m = mm_.modes.front();
        return QrmParams{mm_.delta, epsilon_, m.omega, m.g, m.n_fock};
    }

    Index full_dim() const { return mm_.dim(); }
    Index dim() const { return sector_ ? mm_.modes.front().n_fock : full_dim(); }

    BasisTag tag() const {
        if (!sector_) return BasisTag::bare;
        return sector_->sign > 0 ? BasisTag::parity_symmetric : BasisTag::parity_antisymmetric;
    }

    LinearHamiltonian hamiltonian(SweptParameter swept) const {
        if (sector_)
            require(swept == SweptParameter::delta, ErrorKind::invalid_parameter,
                    "a bias sweep breaks parity; run it in the full space");
        LinearHamiltonian h = multimode_linear(mm_, epsilon_, swept);
        if (sector_) return h.project(isometry());
        return h;
    }

    SparseReal isometry() const { return sector_isometry(mm_.modes.front().n_fock, *sector_); }

    Eigen::VectorXcd to_full(const Eigen::VectorXcd& w) const {
        if (!sector_) return w;
        return isometry().cast<cplx>() * w;
    }

    /// Working-space coordinates of a full-space or working-space vector.  Full-space
    /// vectors must lie in the sector.
    Eigen::VectorXcd to_working(const Eigen::VectorXcd& v) const {
        if (v.size() == dim()) return v;
        require(v.size() == full_dim(), ErrorKind::invalid_parameter,
                "state dimension " + std::to_string(v.size()) + " does not match the model");
        if (!sector_) return v;
        const SparseReal e = isometry();
        Eigen::VectorXcd w = e.transpose().cast<cplx>() * v;
        const double outside = std::max(0.0, v.squaredNorm() - w.squaredNorm());
        require(outside <= 1e-10, ErrorKind::symmetry_violation,
                "state has weight " + std::to_string(outside) + " outside the parity sector");
        return w;
    }

    /// Largest probability held in the top 10% of any mode's Fock levels.
    double truncation_tail(const Eigen::VectorXcd& working) const {
        const Eigen::VectorXcd v = to_full(working);
        const Index osc = mm_.oscillator_dim();
        double worst = 0.0;
        for (std::size_t j = 0; j < mm_.modes.size(); ++j) {
            const Index n = mm_.modes[j].n_fock;
            const Index top = std::max<Index>(1, static_cast<Index>(std::ceil(0.1 * static_cast<double>(n))));
            double w = 0.0;
            for (Index i = 0; i < v.size(); ++i) {
                const std::vector<int> occ = occupation(i % osc);
                if (occ[j] >= n - top) w += std::norm(v(i));
            }
            worst = std::max(worst, w);
        }
        return worst;
    }

    /// Occupations of oscillator index o, mode 1 most significant.
    std::vector<int> occupation(Index o) const {
        std::vector<int> occ(mm_.modes.size());
        for (std::size_t j = mm_.modes.size(); j-- > 0;) {
            occ[j] = static_cast<int>(o % mm_.modes[j].n_fock);
            o /= mm_.modes[j].n_fock;
        }
        return occ;
    }

    /// The same physics with every Fock truncation multiplied by `factor`.
    SweepSystem with_n_fock_scaled(double factor) const {
        SweepSystem s = *this;
        for (Mode& m : s.mm_.modes)
            m.n_fock = static_cast<Index>(std::llround(static_cast<double>(m.n_fock) * factor));
        s.mm_.validate();
        return s;
    }

    /// Pads a working-space vector of this system into a system with larger truncations.
    Eigen::VectorXcd embed_into(const SweepSystem& target, const Eigen::VectorXcd& working) const {
        require(target.mm_.modes.size() == mm_.modes.size(), ErrorKind::invalid_parameter,
                "mode count mismatch");
        const Eigen::VectorXcd v = to_full(working);
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(target.full_dim());
        const Index osc = mm_.oscillator_dim(), tosc = target.mm_.oscillator_dim();
        for (Index i = 0; i < v.size(); ++i) {
            const std::vector<int> occ = occupation(i % osc);
            Index o = 0;
            for (std::size_t j = 0; j < occ.size(); ++j) {
                require(occ[j] < target.mm_.modes[j].n_fock || v(i) == cplx(0.0),
                        ErrorKind::invalid_parameter, "target truncation is smaller");
                o = o * target.mm_.modes[j].n_fock + std::min<Index>(occ[j], target.mm_.modes[j].n_fock - 1);
            }
            out((i / osc) * tosc + o) += v(i);
        }
        return target.to_working(out);
    }

    /// Labeled reference states of a scheme, as working-space columns.
    std::pair<std::vector<BasisLabel>, Eigen::MatrixXcd> reference(Scheme scheme) const {
        std::vector<BasisLabel> labels;
        std::vector<Eigen::VectorXcd> cols;
        if (scheme == Scheme::eigen) return {labels, Eigen::MatrixXcd(dim(), 0)};
        if (scheme == Scheme::bare) {
            require(!sector_, ErrorKind::invalid_parameter, "bare states are not parity eigenstates");
            const Index osc = mm_.oscillator_dim();
            for (Index i = 0; i < full_dim(); ++i) {
                Eigen::VectorXcd e = Eigen::VectorXcd::Zero(full_dim());
                e(i) = 1.0;
                labels.push_back({Scheme::bare, i < osc ? QubitLabel::up : QubitLabel::down, occupation(i % osc)});
                cols.push_back(e);
            }
        } else if (single_mode()) {
            for (LabeledState& s : reference_basis(qrm_params(), scheme, sector_)) {
                labels.push_back(s.label);
                cols.push_back(s.state.amplitudes());
            }
        } else {
            require(scheme == Scheme::displaced, ErrorKind::invalid_parameter,
                    "multimode readout supports the displaced and bare schemes");
            for (LabeledState& s : multimode_displaced_basis(mm_)) {
                labels.push_back(s.label);
                cols.push_back(s.state.amplitudes());
            }
        }
        Eigen::MatrixXcd m(dim(), static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Index>(k)) = to_working(cols[k]);
        return {std::move(labels), std::move(m)};
    }

private:
    SweepSystem() = default;

    MultiModeParams mm_;
    double epsilon_ = 0.0;
    std::optional<ParitySector> sector_;
};

// ---------------------------------------------------------------------------
// Instantaneous eigenbasis and labeling

struct LabeledEigenbasis {
    Eigen::VectorXd energies;
    Eigen::MatrixXd vectors;  // working-space columns
    std::vector<BasisLabel> labels;
    std::vector<bool> degenerate;
};

/// Eigenpairs of a real symmetric matrix; tridiagonal input takes the cheaper route.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> real_eigensystem(const Eigen::MatrixXd& m) {
    const Index n = m.rows();
    bool tridiagonal = true;
    for (Index j = 0; j < n && tridiagonal; ++j)
        for (Index i = j + 2; i < n; ++i)
            if (m(i, j) != 0.0) {
                tridiagonal = false;
                break;
            }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (tridiagonal && n > 1) {
        const Eigen::VectorXd d = m.diagonal();
        const Eigen::VectorXd e = m.diagonal(-1);
        es.computeFromTridiagonal(d, e);
    } else {
        es.compute(m);
    }
    require(es.info() == Eigen::Success, ErrorKind::numerical_instability, "eigensolver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Greedy assignment on |overlap|^2 (rows: new vectors, columns: labeled targets),
/// largest first, ties by row (energy) order.  Returns target index per row or -1.
inline std::vector<int> greedy_match(const Eigen::MatrixXd& overlap) {
    struct Pair {
        double w;
        int row, col;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(overlap.size()));
    for (Index i = 0; i < overlap.rows(); ++i)
        for (Index j = 0; j < overlap.cols(); ++j)
            if (overlap(i, j) > 1e-14) pairs.push_back({overlap(i, j), static_cast<int>(i), static_cast<int>(j)});
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.w != b.w) return a.w > b.w;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });
    std::vector<int> row_to(static_cast<std::size_t>(overlap.rows()), -1);
    std::vector<bool> taken(static_cast<std::size_t>(overlap.cols()), false);
    for (const Pair& p : pairs) {
        if (row_to[p.row] >= 0 || taken[p.col]) continue;
        row_to[p.row] = p.col;
        taken[p.col] = true;
    }
    return row_to;
}

inline std::vector<bool> degeneracy_flags(const Eigen::VectorXd& e, double rel = 1e-8) {
    const double scale = std::max(e.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<bool> flag(static_cast<std::size_t>(e.size()), false);
    for (Index i = 0; i + 1 < e.size(); ++i)
        if (e(i + 1) - e(i) <= rel * scale) flag[i] = flag[i + 1] = true;
    return flag;
}

/// Diagonalizes H at parameter value s and labels eigenvectors against a reference set.
inline LabeledEigenbasis labeled_eigenbasis(const LinearHamiltonian& h, double s,
                                            const std::vector<BasisLabel>& ref_labels,
                                            const Eigen::MatrixXcd& ref) {
    LabeledEigenbasis b;
    std::tie(b.energies, b.vectors) = real_eigensystem(h.dense_real(s));
    b.degenerate = degeneracy_flags(b.energies);
    b.labels.resize(static_cast<std::size_t>(b.energies.size()));
    std::vector<int> match(b.labels.size(), -1);
    if (ref.cols() > 0) {
        const Eigen::MatrixXd ov = (ref.adjoint() * b.vectors.cast<cplx>()).cwiseAbs2().transpose();
        match = greedy_match(ov);
    }
    for (std::size_t i = 0; i < b.labels.size(); ++i)
        b.labels[i] = match[i] >= 0 ? ref_labels[static_cast<std::size_t>(match[i])]
                                    : BasisLabel::eigen(static_cast<int>(i));
    return b;
}

/// Carries labels from `previous` onto the eigenbasis at a neighbouring parameter value.
inline LabeledEigenbasis track_eigenbasis(const LinearHamiltonian& h, double s,
                                          const LabeledEigenbasis& previous) {
    LabeledEigenbasis b;
    std::tie(b.energies, b.vectors) = real_eigensystem(h.dense_real(s));
    b.degenerate = degeneracy_flags(b.energies);
    const Eigen::MatrixXd ov = (b.vectors.transpose() * previous.vectors).cwiseAbs2();
    const std::vector<int> match = greedy_match(ov);
    b.labels.resize(static_cast<std::size_t>(b.energies.size()));
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        const int j = match[i];
        b.labels[i] = j >= 0 ? previous.labels[static_cast<std::size_t>(j)] : BasisLabel::eigen(static_cast<int>(i));
        if (j >= 0 && previous.degenerate[static_cast<std::size_t>(j)]) b.degenerate[i] = true;
    }
    return b;
}

inline std::vector<ProbabilityRecord> populations(const LabeledEigenbasis& b, const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd c = b.vectors.transpose().cast<cplx>() * psi;
    std::vector<ProbabilityRecord> out(b.labels.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {b.labels[i], std::norm(c(static_cast<Index>(i))), b.degenerate[i]};
    return out;
}

/// |<eigvec|psi>|^2 over the eigenbasis of H at `value`, labeled in `scheme` (eigen: level index).
/// psi may be given in full-space or working-space coordinates.
inline std::vector<ProbabilityRecord> instantaneous_populations(const SweepSystem& sys, SweptParameter swept,
                                                                double value, const Eigen::VectorXcd& psi,
                                                                Scheme scheme = Scheme::eigen) {
    const LinearHamiltonian h = sys.hamiltonian(swept);
    const auto [labels, ref] = sys.reference(scheme);
    return populations(labeled_eigenbasis(h, value, labels, ref), sys.to_working(psi));
}

/// Direct projections onto a scheme's reference states (no eigenbasis).
inline std::vector<ProbabilityRecord> basis_projections(const SweepSystem& sys, Scheme scheme,
                                                        const Eigen::VectorXcd& psi) {
    const auto [labels, ref] = sys.reference(scheme);
    const Eigen::VectorXcd c = ref.adjoint() * sys.to_working(psi);
    std::vector<ProbabilityRecord> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = {labels[i], std::norm(c(static_cast<Index>(i)))};
    return out;
}

inline std::map<BasisLabel, double> as_map(const std::vector<ProbabilityRecord>& r) {
    std::map<BasisLabel, double> m;
    for (const auto& x : r) m[x.label] += x.probability;
    return m;
}

inline double probability_of(const std::vector<ProbabilityRecord>& r, const BasisLabel& l) {
    double p = 0.0;
    for (const auto& x : r)
        if (x.label == l) p += x.probability;
    return p;
}

// ---------------------------------------------------------------------------
// Propagation

struct ConservationEntry {
    double time = 0.0;
    double norm = 1.0;
    std::optional<double> leakage;  // opposite-parity weight, for zero-bias runs
};

struct Sample {
    double time = 0.0;
    double value = 0.0;  // swept parameter at this time
    StateVector state;   // working-space coordinates
};

struct Trajectory {
    SweepSchedule schedule;
    std::vector<Sample> samples;
    std::vector<ConservationEntry> conservation_log;
    std::vector<ProbabilityRecord> final_populations;
    double truncation_tail = 0.0;
    std::size_t chebyshev_order = 0;

    const Sample& final_sample() const { return samples.back(); }

    double max_norm_drift() const {
        double d = 0.0;
        for (const auto& c : conservation_log) d = std::max(d, std::abs(c.norm - 1.0));
        return d;
    }

    double max_leakage() const {
        double d = 0.0;
        for (const auto& c : conservation_log)
            if (c.leakage) d = std::max(d, *c.leakage);
        return d;
    }
};

inline constexpr double norm_drift_limit = 1e-6;
inline constexpr double truncation_tail_limit = 1e-6;

/// Ground state of H(value) in working coordinates.
inline StateVector ground_state(const SweepSystem& sys, SweptParameter swept, double value) {
    const auto [e, v] = real_eigensystem(sys.hamiltonian(swept).dense_real(value));
    return StateVector(v.col(0).cast<cplx>(), sys.tag());
}

namespace detail {

class LeakageMonitor {
public:
    LeakageMonitor(const SweepSystem& sys, const SweepSchedule& sched, const Eigen::VectorXcd& psi0) {
        const bool zero_bias = sched.parameter == SweptParameter::delta && sys.epsilon() == 0.0;
        if (!zero_bias || !sys.single_mode()) return;
        if (sys.sector()) {
            active_ = true;
            structural_ = true;
            return;
        }
        const QrmParams p = sys.qrm_params();
        const auto par = parity_of(p, psi0);
        if (!par) return;
        active_ = true;
        opposite_ = SweepSystem::qrm(p, par->opposite()).isometry();
    }

    std::optional<double> operator()(const Eigen::VectorXcd& psi) const {
        if (!active_) return std::nullopt;
        if (structural_) return 0.0;
        return (opposite_.transpose().cast<cplx>() * psi).squaredNorm();
    }

private:
    bool active_ = false;
    bool structural_ = false;
    SparseReal opposite_;
};

}  // namespace detail

/// Options beyond the physics: readout scheme of the final populations and time direction.
struct SweepOptions {
    std::optional<Scheme> readout = Scheme::eigen;  // nullopt: no final readout
    bool backward = false;                          // start at t = T and integrate back to t = 0
    bool check_truncation = true;
    double time_limit = 0.0;  // wall seconds, 0: unlimited
};

/// Evolves psi0 under the schedule.  With `backward`, psi0 is taken at t = T and the
/// exact inverse evolution is applied down to t = 0; samples are then emitted in
/// decreasing time order.
inline Trajectory run_sweep(const SweepSystem& sys, const SweepSchedule& sched,
                            const std::optional<StateVector>& psi0 = std::nullopt,
                            const SweepOptions& options = {}) {
    sched.validate();
    const LinearHamiltonian h = sys.hamiltonian(sched.parameter);
    const double T = sched.duration();

    Eigen::VectorXcd psi;
    if (psi0) psi = sys.to_working(psi0->amplitudes());
    else psi = ground_state(sys, sched.parameter, options.backward ? sched.end_value : sched.start_value).amplitudes();
    require(std::abs(psi.norm() - 1.0) <= StateVector::norm_tolerance, ErrorKind::invalid_parameter,
            "initial state is not normalized");

    const detail::LeakageMonitor leakage(sys, sched, sys.to_full(psi));

    Trajectory traj;
    traj.schedule = sched;

    std::vector<double> times = sched.sample_times;
    const double tol = 1e-12 * std::max(T, 1.0);
    if (times.empty() || std::abs(times.back() - T) > tol) times.push_back(T);
    if (options.backward) {
        std::reverse(times.begin(), times.end());
        if (std::abs(times.back()) > tol) times.push_back(0.0);
    }

    auto record = [&](double t, const Eigen::VectorXcd& v) {
        const double n = v.norm();
        require(std::abs(n - 1.0) <= norm_drift_limit, ErrorKind::numerical_instability,
                "norm drifted to " + std::to_string(n) + " at t=" + std::to_string(t));
        traj.conservation_log.push_back({t, n, leakage(v)});
        traj.samples.push_back({t, sched.value_at(t), StateVector(v / n, sys.tag())});
    };

    if (T > 0.0) {
        const auto [lo, hi] = h.spectral_bounds(sched.start_value, sched.end_value);
        const double dt = T / static_cast<double>(sched.n_steps);
        const double sdt = options.backward ? -dt : dt;
        ChebyshevPropagator prop(h, lo, hi, sdt);
        traj.chebyshev_order = prop.order();

        // Grid point k sits at time k*dt (forward) or T - k*dt (backward).
        auto grid_time = [&](std::size_t k) {
            return options.backward ? T - static_cast<double>(k) * dt : static_cast<double>(k) * dt;
        };
        std::size_t next = 0;
        auto emit_up_to = [&](std::size_t k, const Eigen::VectorXcd& v) {
            const double tk = grid_time(k);
            while (next < times.size()) {
                const double ts = times[next];
                const double gap = options.backward ? tk - ts : ts - tk;
                if (gap > tol && k < sched.n_steps) {
                    // Inside the next step: partial step from the grid point.
                    if (gap >= dt - tol) break;
                    Eigen::VectorXcd w = v;
                    ChebyshevPropagator part(h, lo, hi, options.backward ? -gap : gap);
                    part.step(sched.value_at(0.5 * (tk + ts)), w);
                    record(ts, w);
                } else if (gap <= tol) {
                    record(ts, v);
                } else {
                    break;
                }
                ++next;
            }
        };
        emit_up_to(0, psi);
        const auto started = std::chrono::steady_clock::now();
        for (std::size_t k = 0; k < sched.n_steps; ++k) {
            if (options.time_limit > 0.0 && (k & 1023) == 1023) {
                const double spent = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
                require(spent <= options.time_limit, ErrorKind::resource_limit,
                        "wall time limit of " + std::to_string(options.time_limit) + " s exceeded");
            }
            const double mid = options.backward ? T - (static_cast<double>(k) + 0.5) * dt
                                                : (static_cast<double>(k) + 0.5) * dt;
            prop.step(sched.value_at(mid), psi);
            require(std::abs(psi.norm() - 1.0) <= norm_drift_limit, ErrorKind::numerical_instability,
                    "norm drift exceeded " + std::to_string(norm_drift_limit));
            emit_up_to(k + 1, psi);
        }
        while (next < times.size()) record(times[next++], psi);
    } else {
        for (double t : times) record(t, psi);
    }

    const Eigen::VectorXcd& last = traj.samples.back().state.amplitudes();
    traj.truncation_tail = sys.truncation_tail(last);
    if (options.check_truncation)
        require(traj.truncation_tail <= truncation_tail_limit, ErrorKind::insufficient_truncation,
                "final state holds " + std::to_string(traj.truncation_tail) +
                    " in the top 10% of Fock levels");
    if (options.readout)
        traj.final_populations = instantaneous_populations(sys, sched.parameter, traj.samples.back().value,
                                                           last, *options.readout);
    return traj;
}

/// Populations at every sample of a trajectory, with labels assigned at the final sample in
/// `scheme` and carried backward by eigenvector continuity.
inline std::vector<std::vector<ProbabilityRecord>> trace_populations(const SweepSystem& sys,
                                                                     const Trajectory& traj, Scheme scheme) {
    const LinearHamiltonian h = sys.hamiltonian(traj.schedule.parameter);
    const auto [labels, ref] = sys.reference(scheme);
    std::vector<std::vector<ProbabilityRecord>> out(traj.samples.size());
    if (traj.samples.empty()) return out;
    std::size_t i = traj.samples.size() - 1;
    LabeledEigenbasis b = labeled_eigenbasis(h, traj.samples[i].value, labels, ref);
    out[i] = populations(b, traj.samples[i].state.amplitudes());
    while (i-- > 0) {
        b = track_eigenbasis(h, traj.samples[i].value, b);
        out[i] = populations(b, traj.samples[i].state.amplitudes());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convergence scan

enum class ConvergenceKnob { n_steps, n_fock, endpoint_magnitude };

inline std::string to_string(ConvergenceKnob k) {
    switch (k) {
        case ConvergenceKnob::n_steps: return "n_steps";
        case ConvergenceKnob::n_fock: return "n_fock";
        case ConvergenceKnob::endpoint_magnitude: return "endpoint_magnitude";
    }
    return "?";
}

inline std::optional<ConvergenceKnob> convergence_knob_from_string(const std::string& s) {
    for (auto k : {ConvergenceKnob::n_steps, ConvergenceKnob::n_fock, ConvergenceKnob::endpoint_magnitude})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct SweepProblem {
    SweepSystem system;
    SweepSchedule schedule;
    std::optional<StateVector> psi0;  // default: ground state at the start value
    Scheme readout = Scheme::eigen;

    /// The problem with a knob multiplied by `factor`.
    SweepProblem scaled(ConvergenceKnob knob, double factor) const {
        SweepProblem p = *this;
        p.schedule.sample_times.clear();
        switch (knob) {
            case ConvergenceKnob::n_steps:
                p.schedule.n_steps = static_cast<std::size_t>(std::llround(static_cast<double>(schedule.n_steps) * factor));
                break;
            case ConvergenceKnob::n_fock:
                p.system = system.with_n_fock_scaled(factor);
                if (psi0)
                    p.psi0 = StateVector::normalized(system.embed_into(p.system, system.to_working(psi0->amplitudes())),
                                                     p.system.tag());
                break;
            case ConvergenceKnob::endpoint_magnitude:
                p.schedule.start_value *= factor;
                p.schedule.end_value *= factor;
                p.schedule.n_steps = static_cast<std::size_t>(std::llround(static_cast<double>(schedule.n_steps) * factor));
                break;
        }
        return p;
    }

    std::vector<ProbabilityRecord> solve() const {
        SweepSchedule s = schedule;
        s.sample_times.clear();
        return run_sweep(system, s, psi0, SweepOptions{readout}).final_populations;
    }
};

struct ConvergenceReport {
    ConvergenceKnob knob = ConvergenceKnob::n_steps;
    double tolerance = 1e-3;
    std::vector<double> factors;                                   // 1 followed by the refinements
    std::vector<std::vector<ProbabilityRecord>> finals;            // per factor (empty on failure)
    std::vector<std::pair<BasisLabel, double>> max_change_by_label;
    double max_change = 0.0;
    bool passed = false;
    std::string failure;
};

/// Max absolute difference between two labeled probability lists (absent labels count as 0).
inline std::map<BasisLabel, double> probability_changes(const std::vector<ProbabilityRecord>& a,
                                                        const std::vector<ProbabilityRecord>& b) {
    const auto ma = as_map(a), mb = as_map(b);
    std::map<BasisLabel, double> d;
    for (const auto& [l, p] : ma) d[l] = std::abs(p - (mb.count(l) ? mb.at(l) : 0.0));
    for (const auto& [l, p] : mb)
        if (!ma.count(l)) d[l] = p;
    return d;
}

inline ConvergenceReport convergence_scan(const SweepProblem& base, ConvergenceKnob knob, double tolerance = 1e-3,
                                          std::vector<double> refinements = {2.0, 4.0}) {
    ConvergenceReport r;
    r.knob = knob;
    r.tolerance = tolerance;
    r.factors = {1.0};
    r.factors.insert(r.factors.end(), refinements.begin(), refinements.end());
    for (double f : r.factors) {
        try {
            r.finals.push_back(f == 1.0 ? base.solve() : base.scaled(knob, f).solve());
        } catch (const Error& e) {
            r.failure = "factor " + std::to_string(f) + ": " + e.what();
            r.finals.emplace_back();
            return r;
        }
    }
    std::map<BasisLabel, double> worst;
    for (std::size_t k = 1; k < r.finals.size(); ++k)
        for (const auto& [l, d] : probability_changes(r.finals[k - 1], r.finals[k]))
            worst[l] = std::max(worst[l], d);
    for (const auto& [l, d] : worst) {
        r.max_change_by_label.emplace_back(l, d);
        r.max_change = std::max(r.max_change, d);
    }
    r.passed = r.max_change <= tolerance;
    if (!r.passed) r.failure = "max change " + std::to_string(r.max_change) + " exceeds tolerance";
    return r;
}

// ---------------------------------------------------------------------------
// Batch execution

template <class R>
struct Outcome {
    std::optional<R> value;
    std::optional<ErrorKind> error_kind;
    std::string error;
    double wall_seconds = 0.0;

    bool ok() const { return value.has_value(); }
};

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs jobs on a worker pool; results come back in job order whatever the execution order.
template <class R>
std::vector<Outcome<R>> run_batch(const std::vector<std::function<R()>>& jobs, unsigned workers = default_workers()) {
    std::vector<Outcome<R>> out(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                out[i].value.emplace(jobs[i]());
            } catch (const Error& e) {
                out[i].error_kind = e.kind();
                out[i].error = e.what();
            } catch (const std::exception& e) {
                out[i].error_kind = ErrorKind::numerical_instability;
                out[i].error = e.what();
            }
            out[i].wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
    if (n == 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace qrsweep
