// experiments.hpp: figure-level drivers.  Each driver turns an ExperimentSpec into a
// ResultTable: one row per grid point (or per sample time for traces), simulated
// probabilities next to the closed-form oracle where one exists, and a convergence verdict
// obtained by rerunning the point with doubled step count and doubled Fock truncation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qrsweep/analytics.hpp"
#include "qrsweep/errors.hpp"
#include "qrsweep/model.hpp"
#include "qrsweep/sweep.hpp"

namespace qrsweep {

inline constexpr const char* version = "0.3.0";

enum class ExperimentKind { quench_ns, quench_sn, quench_trace, lz_scan, lz_trace, lz_formula, multimode_scan };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::quench_ns: return "quench_ns";
        case ExperimentKind::quench_sn: return "quench_sn";
        case ExperimentKind::quench_trace: return "quench_trace";
        case ExperimentKind::lz_scan: return "lz_scan";
        case ExperimentKind::lz_trace: return "lz_trace";
        case ExperimentKind::lz_formula: return "lz_formula";
        case ExperimentKind::multimode_scan: return "multimode_scan";
    }
    return "?";
}

inline std::optional<ExperimentKind> experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::quench_ns, ExperimentKind::quench_sn, ExperimentKind::quench_trace,
                   ExperimentKind::lz_scan, ExperimentKind::lz_trace, ExperimentKind::lz_formula,
                   ExperimentKind::multimode_scan})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

/// ns: weak to strong correlation (delta decreasing), sn: the reverse.
enum class QuenchDirection { ns, sn };

/// Semiclassical transition point 4 g^2 / omega on the delta axis.
inline double quench_default_delta(double g, double omega) {
    const double k = 2.0 * g / omega;
    return std::max(200.0, 50.0 * k * k) * omega;
}

/// Half-width of the bias window of an LZ sweep.
inline double lz_window(double delta, double g_over_omega_max, double omega_max) {
    const double n_rel = std::ceil(4.0 * g_over_omega_max * g_over_omega_max + 10.0);
    return std::max(50.0 * delta, (n_rel + 10.0) * omega_max + 50.0 * delta);
}

/// points_per_decade log-spaced values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int points_per_decade = 25) {
    require(lo > 0.0 && hi >= lo && points_per_decade > 0, ErrorKind::invalid_parameter, "invalid log grid");
    const double decades = std::log10(hi / lo);
    const int n = std::max(1, static_cast<int>(std::lround(decades * points_per_decade)));
    std::vector<double> g;
    if (hi == lo) return {lo};
    for (int i = 0; i <= n; ++i) g.push_back(lo * std::pow(10.0, decades * i / n));
    g.front() = lo;
    g.back() = hi;
    return g;
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::quench_ns;
    std::variant<QrmParams, MultiModeParams> physics = QrmParams{};
    std::vector<double> grid;  // v/omega^2 (quench) or v/delta^2 (LZ); traces take a single rate

    QuenchDirection direction = QuenchDirection::ns;  // quench_trace
    std::optional<double> delta_weak;                  // default quench_default_delta
    double delta_strong = 0.0;
    std::optional<double> window;                      // LZ bias half-width
    int n_max = 0;                                     // cascade cut, 0 = default_n_max
    std::vector<int> caps;                             // multimode occupation caps, default n_fock - 1
    std::size_t n_steps = 100000;
    std::size_t trace_samples = SweepSchedule::default_samples;
    std::optional<double> trace_from;  // first sampled time-axis value; t = 0 is always sampled
    bool check_convergence = true;
    double tolerance = 1e-3;
    Index max_dimension = 1200;  // multimode: skip simulation above this
    unsigned workers = 0;        // 0: hardware concurrency
    double max_point_seconds = 0.0;  // per simulation, 0: unlimited
    std::vector<BasisLabel> labels;  // labels of interest, for plots

    bool multimode() const { return std::holds_alternative<MultiModeParams>(physics); }
    const QrmParams& qrm() const { return std::get<QrmParams>(physics); }
    MultiModeParams modes() const {
        return multimode() ? std::get<MultiModeParams>(physics) : MultiModeParams::single(qrm());
    }
    bool is_trace() const { return kind == ExperimentKind::quench_trace || kind == ExperimentKind::lz_trace; }
    bool is_quench() const {
        return kind == ExperimentKind::quench_ns || kind == ExperimentKind::quench_sn ||
               kind == ExperimentKind::quench_trace;
    }

    QuenchDirection quench_direction() const {
        if (kind == ExperimentKind::quench_ns) return QuenchDirection::ns;
        if (kind == ExperimentKind::quench_sn) return QuenchDirection::sn;
        return direction;
    }

    double weak_delta() const {
        const QrmParams& p = qrm();
        return delta_weak ? *delta_weak : quench_default_delta(p.g, p.omega);
    }

    double bias_window() const {
        if (window) return *window;
        const MultiModeParams m = modes();
        double r = 0.0, w = 0.0;
        for (const Mode& mode : m.modes) {
            r = std::max(r, std::abs(mode.g / mode.omega));
            w = std::max(w, mode.omega);
        }
        return lz_window(m.delta, r, w);
    }

    std::string scan_variable() const {
        switch (kind) {
            case ExperimentKind::quench_ns:
            case ExperimentKind::quench_sn: return "v/omega^2";
            case ExperimentKind::quench_trace:
                return quench_direction() == QuenchDirection::ns ? "v(t-T)/omega" : "vt/omega";
            case ExperimentKind::lz_trace: return "vt/omega";
            default: return "v/delta^2";
        }
    }

    void validate() const {
        require(!grid.empty(), ErrorKind::invalid_parameter, "scan grid is empty");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            require(std::isfinite(grid[i]) && grid[i] > 0.0, ErrorKind::invalid_parameter,
                    "scan values must be positive and finite");
            require(i == 0 || grid[i] > grid[i - 1], ErrorKind::invalid_parameter,
                    "scan grid must be strictly increasing");
        }
        if (is_trace())
            require(grid.size() == 1, ErrorKind::invalid_parameter, "a trace takes exactly one rate");
        require(n_steps >= SweepSchedule::min_steps, ErrorKind::invalid_parameter,
                "n_steps must be at least " + std::to_string(SweepSchedule::min_steps));
        require(trace_samples >= 2, ErrorKind::invalid_parameter, "a trace needs at least two samples");
        require(tolerance > 0.0, ErrorKind::invalid_parameter, "tolerance must be positive");
        require(max_point_seconds >= 0.0 && std::isfinite(max_point_seconds), ErrorKind::invalid_parameter,
                "max_point_seconds must be finite and non-negative");
        if (kind == ExperimentKind::multimode_scan) {
            const MultiModeParams m = modes();
            m.validate();
            require(m.delta > 0.0, ErrorKind::invalid_parameter, "the v/delta^2 axis needs delta > 0");
            require(caps.empty() || caps.size() == m.modes.size(), ErrorKind::invalid_parameter,
                    "one occupation cap per mode");
        } else {
            require(!multimode(), ErrorKind::invalid_parameter, to_string(kind) + " takes single-mode physics");
            qrm().validate();
        }
        if (is_quench()) {
            require(delta_strong >= 0.0 && std::isfinite(delta_strong), ErrorKind::invalid_parameter,
                    "delta_strong must be finite and non-negative");
            require(weak_delta() > delta_strong && std::isfinite(weak_delta()), ErrorKind::invalid_parameter,
                    "delta_weak must exceed delta_strong");
        } else {
            require(modes().delta > 0.0, ErrorKind::invalid_parameter, "the v/delta^2 axis needs delta > 0");
            require(bias_window() > 0.0 && std::isfinite(bias_window()), ErrorKind::invalid_parameter,
                    "bias window must be positive");
            require(n_max >= 0, ErrorKind::invalid_parameter, "n_max must be non-negative");
        }
    }
};

// ---------------------------------------------------------------------------
// Result tables

enum class Verdict { converged, not_converged, failed, unchecked };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::converged: return "true";
        case Verdict::not_converged: return "false";
        case Verdict::failed: return "false";
        case Verdict::unchecked: return "unchecked";
    }
    return "?";
}

struct ResultRow {
    double scan_value = 0.0;
    std::optional<std::vector<ProbabilityRecord>> simulated;
    std::optional<std::vector<ProbabilityRecord>> oracle;
    Verdict verdict = Verdict::unchecked;
    std::string note;  // convergence detail or error message
    double wall_seconds = 0.0;
    double norm_drift = 0.0;
    std::optional<double> leakage;
    double truncation_tail = 0.0;

    bool converged() const { return verdict == Verdict::converged; }

    double simulated_total() const {
        double s = 0.0;
        if (simulated)
            for (const auto& r : *simulated) s += r.probability;
        return s;
    }

    /// Max |sim - oracle| over the given labels (all shared labels when empty).
    double max_deviation(const std::vector<BasisLabel>& labels = {}) const {
        if (!simulated || !oracle) return 0.0;
        double d = 0.0;
        for (const auto& [l, p] : probability_changes(*simulated, *oracle))
            if (labels.empty() || std::find(labels.begin(), labels.end(), l) != labels.end()) d = std::max(d, p);
        return d;
    }

    double probability(const BasisLabel& l) const { return simulated ? probability_of(*simulated, l) : 0.0; }
    double oracle_probability(const BasisLabel& l) const { return oracle ? probability_of(*oracle, l) : 0.0; }
};

struct ResultTable {
    std::string name;  // file stem
    ExperimentSpec spec;
    std::string scan_variable;
    std::vector<ResultRow> rows;
    std::map<std::string, std::string> metadata;  // provenance

    bool all_converged() const {
        return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.converged(); });
    }

    std::size_t failures() const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) {
            return r.verdict == Verdict::failed;
        }));
    }

    double max_norm_drift() const {
        double d = 0.0;
        for (const auto& r : rows) d = std::max(d, r.norm_drift);
        return d;
    }

    double max_leakage() const {
        double d = 0.0;
        for (const auto& r : rows)
            if (r.leakage) d = std::max(d, *r.leakage);
        return d;
    }
};

/// Gives simulation and oracle the same label set (missing entries are zero), sorted.
inline void share_labels(ResultRow& row) {
    std::set<BasisLabel> all;
    for (auto* side : {&row.simulated, &row.oracle})
        if (*side)
            for (const auto& r : **side) all.insert(r.label);
    for (auto* side : {&row.simulated, &row.oracle}) {
        if (!*side) continue;
        std::map<BasisLabel, ProbabilityRecord> m;
        for (const auto& r : **side) m[r.label] = r;
        std::vector<ProbabilityRecord> out;
        out.reserve(all.size());
        for (const auto& l : all) {
            auto it = m.find(l);
            out.push_back(it != m.end() ? it->second : ProbabilityRecord{l, 0.0, false});
        }
        **side = std::move(out);
    }
}

namespace detail {

inline std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

struct PointResult {
    std::vector<ProbabilityRecord> populations;
    double norm_drift = 0.0;
    std::optional<double> leakage;
    double truncation_tail = 0.0;
};

// Runs one point at (step factor, Fock factor).
using PointRunner = std::function<PointResult(double, double)>;

inline const std::vector<std::pair<double, double>>& refinements() {
    static const std::vector<std::pair<double, double>> r = {{2.0, 1.0}, {1.0, 2.0}};
    return r;
}

/// Evaluates every runner at the base resolution and, when asked, at each refinement;
/// each (point, resolution) pair is an independent job on the worker pool.
inline std::vector<ResultRow> evaluate(const std::vector<double>& scan_values, const std::vector<PointRunner>& runners,
                                       const ExperimentSpec& spec) {
    const auto& refs = refinements();
    const std::size_t per = spec.check_convergence ? 1 + refs.size() : 1;
    std::vector<std::function<PointResult()>> jobs;
    for (const PointRunner& run : runners) {
        jobs.emplace_back([run] { return run(1.0, 1.0); });
        if (spec.check_convergence)
            for (auto [fs, ff] : refs) jobs.emplace_back([run, fs, ff] { return run(fs, ff); });
    }
    const auto out = run_batch(jobs, spec.workers ? spec.workers : default_workers());

    std::vector<ResultRow> rows(runners.size());
    for (std::size_t i = 0; i < runners.size(); ++i) {
        ResultRow& row = rows[i];
        row.scan_value = scan_values[i];
        for (std::size_t k = 0; k < per; ++k) row.wall_seconds += out[i * per + k].wall_seconds;
        const auto& base = out[i * per];
        if (!base.ok()) {
            row.verdict = Verdict::failed;
            row.note = base.error;
            continue;
        }
        row.simulated = base.value->populations;
        row.norm_drift = base.value->norm_drift;
        row.leakage = base.value->leakage;
        row.truncation_tail = base.value->truncation_tail;
        if (!spec.check_convergence) continue;
        row.verdict = Verdict::converged;
        double worst = 0.0;
        for (std::size_t k = 0; k < refs.size(); ++k) {
            const auto& o = out[i * per + 1 + k];
            const std::string what = refs[k].first != 1.0 ? "n_steps x2" : "n_fock x2";
            if (!o.ok()) {
                row.verdict = Verdict::not_converged;
                row.note += (row.note.empty() ? "" : "; ") + what + ": " + o.error;
                continue;
            }
            double d = 0.0;
            for (const auto& [l, c] : probability_changes(base.value->populations, o.value->populations))
                d = std::max(d, c);
            worst = std::max(worst, d);
            if (d > spec.tolerance) {
                row.verdict = Verdict::not_converged;
                row.note += (row.note.empty() ? "" : "; ") + what + " changed a probability by " + fmt(d);
            }
        }
        if (row.verdict == Verdict::converged) row.note = "max change " + fmt(worst);
    }
    return rows;
}

inline std::size_t scaled_steps(std::size_t n, double f) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * f));
}

inline Index scaled_fock(Index n, double f) { return static_cast<Index>(std::llround(static_cast<double>(n) * f)); }

inline PointResult summarize(const Trajectory& t) {
    return {t.final_populations, t.max_norm_drift(),
            t.conservation_log.empty() || !t.conservation_log.front().leakage ? std::nullopt
                                                                              : std::optional<double>(t.max_leakage()),
            t.truncation_tail};
}

inline void common_metadata(ResultTable& t, const ExperimentSpec& s) {
    t.metadata["version"] = version;
    t.metadata["kind"] = to_string(s.kind);
    t.metadata["scan_variable"] = t.scan_variable;
    t.metadata["n_steps"] = std::to_string(s.n_steps);
    t.metadata["convergence_check"] = s.check_convergence ? "n_steps x2, n_fock x2" : "off";
    t.metadata["tolerance"] = fmt(s.tolerance);
    std::string fock;
    for (const Mode& m : s.modes().modes) fock += (fock.empty() ? "" : ";") + std::to_string(m.n_fock);
    t.metadata["n_fock"] = fock;
    double wall = 0.0;
    for (const auto& r : t.rows) wall += r.wall_seconds;
    t.metadata["wall_seconds"] = fmt(wall);
    std::size_t conv = 0;
    for (const auto& r : t.rows) conv += r.converged();
    t.metadata["rows_converged"] = std::to_string(conv) + "/" + std::to_string(t.rows.size());
}

/// Qubit label of the n-th state of the + parity sector in a quench readout scheme.
inline QubitLabel quench_qubit(Scheme s, Index n) {
    const QubitLabel q = sector_qubit(ParitySector::symmetric(), n);
    if (s == Scheme::superradiant) return q == QubitLabel::right ? QubitLabel::plus : QubitLabel::minus;
    return q;
}

inline QrmParams with_fock(QrmParams p, double f) {
    p.n_fock = scaled_fock(p.n_fock, f);
    return p;
}

inline MultiModeParams with_fock(MultiModeParams p, double f) {
    for (Mode& m : p.modes) m.n_fock = scaled_fock(m.n_fock, f);
    return p;
}

struct QuenchSetup {
    double start = 0.0, end = 0.0;
    Scheme readout = Scheme::superradiant;
};

inline QuenchSetup quench_setup(const ExperimentSpec& s) {
    if (s.quench_direction() == QuenchDirection::ns) return {s.weak_delta(), s.delta_strong, Scheme::superradiant};
    return {s.delta_strong, s.weak_delta(), Scheme::normal};
}

}  // namespace detail

/// Fast-sweep limit of a quench: the Poisson photon distribution, on the + sector labels.
inline std::vector<ProbabilityRecord> quench_fast_limit(const QrmParams& p, Scheme readout) {
    std::vector<ProbabilityRecord> out;
    for (Index n = 0; n < p.n_fock; ++n)
        out.push_back({BasisLabel::single(readout, detail::quench_qubit(readout, n), static_cast<int>(n)),
                       poisson_overlap(static_cast<int>(n), p.g, p.omega), false});
    return out;
}

/// Delta-sweep in the + parity sector from the ground state, one run per rate.
inline ResultTable quench_rate_scan(const ExperimentSpec& spec) {
    spec.validate();
    require(spec.kind == ExperimentKind::quench_ns || spec.kind == ExperimentKind::quench_sn,
            ErrorKind::invalid_parameter, "quench_rate_scan needs kind quench_ns or quench_sn");
    const QrmParams p{0.0, 0.0, spec.qrm().omega, spec.qrm().g, spec.qrm().n_fock};
    const detail::QuenchSetup q = detail::quench_setup(spec);

    std::vector<detail::PointRunner> runners;
    for (double x : spec.grid) {
        const double v = x * p.omega * p.omega;
        runners.push_back([=, n_steps = spec.n_steps, limit = spec.max_point_seconds](double fs, double ff) {
            const SweepSystem sys = SweepSystem::qrm(detail::with_fock(p, ff), ParitySector::symmetric());
            const SweepSchedule sched =
                SweepSchedule::linear(SweptParameter::delta, q.start, q.end, v, detail::scaled_steps(n_steps, fs), 0);
            return detail::summarize(run_sweep(sys, sched, std::nullopt, SweepOptions{q.readout, false, true, limit}));
        });
    }
    ResultTable t;
    t.spec = spec;
    t.scan_variable = spec.scan_variable();
    t.rows = detail::evaluate(spec.grid, runners, spec);
    const auto oracle = quench_fast_limit(p, q.readout);
    for (ResultRow& r : t.rows) {
        r.oracle = oracle;
        share_labels(r);
    }
    detail::common_metadata(t, spec);
    t.metadata["g_over_omega"] = detail::fmt(p.g / p.omega);
    t.metadata["delta_start"] = detail::fmt(q.start);
    t.metadata["delta_end"] = detail::fmt(q.end);
    t.metadata["readout"] = to_string(q.readout);
    t.metadata["oracle"] = "fast-sweep Poisson limit";
    return t;
}

namespace detail {

// t = 0, then trace_samples uniform times from the axis value `from` (if any) to T.
inline std::vector<double> trace_times(double T, std::size_t n, std::optional<double> from_time) {
    const double t0 = from_time ? std::clamp(*from_time, 0.0, T) : 0.0;
    std::vector<double> times;
    if (t0 > 0.0) times.push_back(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = i + 1 == n ? T : t0 + (T - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
        if (times.empty() || t > times.back()) times.push_back(t);
    }
    return times;
}

// Shared by the two trace kinds: one trajectory sampled uniformly, tracked populations per
// sample, the final-population convergence verdict copied to every row.
inline ResultTable trace_table(const ExperimentSpec& spec, const SweepSystem& sys, const SweepSchedule& sched,
                               const std::optional<StateVector>& psi0, Scheme readout,
                               const std::function<double(double)>& axis, const PointRunner& refine) {
    ResultTable t;
    t.spec = spec;
    t.scan_variable = spec.scan_variable();
    const auto t0 = std::chrono::steady_clock::now();
    Trajectory traj;
    try {
        traj = run_sweep(sys, sched, psi0, SweepOptions{readout, false, true, spec.max_point_seconds});
    } catch (const Error& e) {
        ResultRow r;
        r.verdict = Verdict::failed;
        r.note = e.what();
        t.rows.push_back(r);
        common_metadata(t, spec);
        return t;
    }
    const auto pops = trace_populations(sys, traj, readout);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Verdict verdict = Verdict::unchecked;
    std::string note;
    if (spec.check_convergence) {
        ExperimentSpec one = spec;
        one.check_convergence = true;
        const auto rows = evaluate({0.0}, {refine}, one);
        verdict = rows.front().verdict;
        note = rows.front().note;
    }
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        ResultRow r;
        r.scan_value = axis(traj.samples[i].time);
        r.simulated = pops[i];
        r.verdict = verdict;
        r.note = note;
        r.norm_drift = std::abs(traj.conservation_log[i].norm - 1.0);
        r.leakage = traj.conservation_log[i].leakage;
        t.rows.push_back(std::move(r));
    }
    t.rows.back().truncation_tail = traj.truncation_tail;
    t.rows.front().wall_seconds = wall;
    common_metadata(t, spec);
    return t;
}

}  // namespace detail

/// Populations along one quench, time measured from the end of the sweep.
inline ResultTable quench_time_trace(const ExperimentSpec& spec) {
    spec.validate();
    require(spec.kind == ExperimentKind::quench_trace, ErrorKind::invalid_parameter,
            "quench_time_trace needs kind quench_trace");
    const QrmParams p{0.0, 0.0, spec.qrm().omega, spec.qrm().g, spec.qrm().n_fock};
    const detail::QuenchSetup q = detail::quench_setup(spec);
    const double v = spec.grid.front() * p.omega * p.omega;
    const SweepSystem sys = SweepSystem::qrm(p, ParitySector::symmetric());
    SweepSchedule sched = SweepSchedule::linear(SweptParameter::delta, q.start, q.end, v, spec.n_steps, 0);
    const double T = sched.duration();
    const bool ns = spec.quench_direction() == QuenchDirection::ns;
    auto axis = [=](double t) { return ns ? v * (t - T) / p.omega : v * t / p.omega; };
    std::optional<double> from;
    if (spec.trace_from) from = ns ? T + *spec.trace_from * p.omega / v : *spec.trace_from * p.omega / v;
    sched.sample_times = detail::trace_times(T, spec.trace_samples, from);
    detail::PointRunner refine = [=, n_steps = spec.n_steps, limit = spec.max_point_seconds](double fs, double ff) {
        const SweepSystem s = SweepSystem::qrm(detail::with_fock(p, ff), ParitySector::symmetric());
        const SweepSchedule sc =
            SweepSchedule::linear(SweptParameter::delta, q.start, q.end, v, detail::scaled_steps(n_steps, fs), 0);
        return detail::summarize(run_sweep(s, sc, std::nullopt, SweepOptions{q.readout, false, true, limit}));
    };
    ResultTable t = detail::trace_table(spec, sys, sched, std::nullopt, q.readout, axis, refine);
    const double critical = critical_delta(p.g, p.omega);
    // Crossing of delta = 4 g^2 / omega on the time axis.
    const double crossing = ns ? -(critical - q.end) / p.omega : (critical - q.start) / p.omega;
    t.metadata["semiclassical_crossing"] = detail::fmt(crossing);
    t.metadata["rate"] = detail::fmt(v);
    t.metadata["g_over_omega"] = detail::fmt(p.g / p.omega);
    t.metadata["delta_start"] = detail::fmt(q.start);
    t.metadata["delta_end"] = detail::fmt(q.end);
    t.metadata["readout"] = to_string(q.readout);
    return t;
}

namespace detail {

inline StateVector lz_initial(const MultiModeParams& m) {
    if (m.modes.size() == 1) {
        const Mode& mode = m.modes.front();
        return displaced_state(QrmParams{m.delta, 0.0, mode.omega, mode.g, mode.n_fock}, QubitLabel::down, 0);
    }
    return multimode_displaced_state(m, QubitLabel::down, std::vector<int>(m.modes.size(), 0));
}

inline PointRunner lz_runner(const MultiModeParams& m, double window, double v, std::size_t n_steps,
                             double limit = 0.0) {
    return [=](double fs, double ff) {
        const MultiModeParams mf = with_fock(m, ff);
        const SweepSystem sys = SweepSystem::multimode(mf, -window);
        const SweepSchedule sched =
            SweepSchedule::linear(SweptParameter::epsilon, -window, window, v, scaled_steps(n_steps, fs), 0);
        return summarize(run_sweep(sys, sched, lz_initial(mf), SweepOptions{Scheme::displaced, false, true, limit}));
    };
}

}  // namespace detail

/// Bias sweep from |down,0> (displaced) at -W to +W with displaced-basis readout, next to
/// the independent-crossing cascade.  lz_formula evaluates the cascade only.
inline ResultTable lz_scan(const ExperimentSpec& spec) {
    spec.validate();
    require(spec.kind == ExperimentKind::lz_scan || spec.kind == ExperimentKind::lz_formula,
            ErrorKind::invalid_parameter, "lz_scan needs kind lz_scan or lz_formula");
    const QrmParams& p = spec.qrm();
    const MultiModeParams m = spec.modes();
    const double d2 = p.delta * p.delta;
    const int n_max = spec.n_max > 0 ? spec.n_max : default_n_max(p.g / p.omega);
    const GapSpectrum gaps = cascade_gaps(p.delta, p.g, p.omega, n_max);
    const double window = spec.bias_window();

    ResultTable t;
    t.spec = spec;
    t.scan_variable = spec.scan_variable();
    if (spec.kind == ExperimentKind::lz_scan) {
        std::vector<detail::PointRunner> runners;
        for (double x : spec.grid) runners.push_back(detail::lz_runner(m, window, x * d2, spec.n_steps, spec.max_point_seconds));
        t.rows = detail::evaluate(spec.grid, runners, spec);
    } else {
        for (double x : spec.grid) t.rows.push_back(ResultRow{x});
    }
    for (ResultRow& r : t.rows) {
        try {
            r.oracle = sequential_probabilities(gaps, r.scan_value * d2);
            if (spec.kind == ExperimentKind::lz_formula) r.verdict = Verdict::converged;
        } catch (const Error& e) {
            if (spec.kind == ExperimentKind::lz_formula) r.verdict = Verdict::failed;
            r.note += (r.note.empty() ? "" : "; ") + std::string("oracle: ") + e.what();
        }
        share_labels(r);
    }
    detail::common_metadata(t, spec);
    t.metadata["g_over_omega"] = detail::fmt(p.g / p.omega);
    t.metadata["delta_over_omega"] = detail::fmt(p.delta / p.omega);
    t.metadata["oracle"] = "independent-crossing cascade, n_max " + std::to_string(n_max);
    t.metadata["sum_rule_tail"] = detail::fmt(gaps.sum_rule_tail);
    if (spec.kind == ExperimentKind::lz_scan) t.metadata["bias_window"] = detail::fmt(window);
    else {
        t.metadata["n_steps"] = "n/a";
        t.metadata["n_fock"] = "n/a";
        t.metadata["convergence_check"] = "formula";
    }
    return t;
}

/// Populations along one LZ sweep against the bias vt/omega (zero at the sweep midpoint).
inline ResultTable lz_trace(const ExperimentSpec& spec) {
    spec.validate();
    require(spec.kind == ExperimentKind::lz_trace, ErrorKind::invalid_parameter, "lz_trace needs kind lz_trace");
    const QrmParams& p = spec.qrm();
    const MultiModeParams m = spec.modes();
    const double v = spec.grid.front() * p.delta * p.delta;
    const double window = spec.bias_window();
    const SweepSystem sys = SweepSystem::multimode(m, -window);
    SweepSchedule sched = SweepSchedule::linear(SweptParameter::epsilon, -window, window, v, spec.n_steps, 0);
    const double half = 0.5 * sched.duration();
    auto axis = [=](double t) { return v * (t - half) / p.omega; };
    std::optional<double> from;
    if (spec.trace_from) from = half + *spec.trace_from * p.omega / v;
    sched.sample_times = detail::trace_times(sched.duration(), spec.trace_samples, from);
    ResultTable t = detail::trace_table(spec, sys, sched, detail::lz_initial(m), Scheme::displaced, axis,
                                        detail::lz_runner(m, window, v, spec.n_steps, spec.max_point_seconds));
    t.metadata["rate"] = detail::fmt(v);
    t.metadata["bias_window"] = detail::fmt(window);
    t.metadata["g_over_omega"] = detail::fmt(p.g / p.omega);
    t.metadata["delta_over_omega"] = detail::fmt(p.delta / p.omega);
    return t;
}

/// Multimode bias sweep: the sequential-crossing oracle over the sorted crossing list, and
/// direct simulation when the Hilbert space is small enough.
inline ResultTable multimode_scan(const ExperimentSpec& spec) {
    spec.validate();
    require(spec.kind == ExperimentKind::multimode_scan, ErrorKind::invalid_parameter,
            "multimode_scan needs kind multimode_scan");
    const MultiModeParams m = spec.modes();
    std::vector<int> caps = spec.caps;
    if (caps.empty())
        for (const Mode& mode : m.modes) caps.push_back(static_cast<int>(mode.n_fock) - 1);
    const GapSpectrum gaps = multimode_gaps(m, caps);
    const auto groups = gaps.degenerate_groups();
    if (!groups.empty()) {
        std::string which;
        for (std::size_t i : groups.front())
            which += (which.empty() ? "" : ", ") +
                     BasisLabel{Scheme::displaced, QubitLabel::up, gaps.entries[i].occupation}.photons_string();
        throw Error(ErrorKind::degenerate_crossing, "coincident crossings for occupations " + which);
    }
    const double d2 = m.delta * m.delta;
    const bool simulate = m.dim() <= spec.max_dimension;
    const double window = spec.bias_window();

    ResultTable t;
    t.spec = spec;
    t.scan_variable = spec.scan_variable();
    if (simulate) {
        std::vector<detail::PointRunner> runners;
        for (double x : spec.grid) runners.push_back(detail::lz_runner(m, window, x * d2, spec.n_steps, spec.max_point_seconds));
        t.rows = detail::evaluate(spec.grid, runners, spec);
    } else {
        for (double x : spec.grid) t.rows.push_back(ResultRow{x});
    }
    for (ResultRow& r : t.rows) {
        try {
            r.oracle = sequential_probabilities(gaps, r.scan_value * d2);
            if (!simulate) r.verdict = Verdict::converged;
        } catch (const Error& e) {
            if (!simulate) r.verdict = Verdict::failed;
            r.note += (r.note.empty() ? "" : "; ") + std::string("oracle: ") + e.what();
        }
        share_labels(r);
    }
    detail::common_metadata(t, spec);
    std::string c;
    for (int k : caps) c += (c.empty() ? "" : ";") + std::to_string(k);
    t.metadata["occupation_caps"] = c;
    t.metadata["dimension"] = std::to_string(m.dim());
    t.metadata["simulated"] = simulate ? "yes" : "no (dimension above max_dimension)";
    t.metadata["sum_rule_tail"] = detail::fmt(gaps.sum_rule_tail);
    if (simulate) t.metadata["bias_window"] = detail::fmt(window);
    return t;
}

/// The single sweep behind one scan point, for convergence studies.
inline SweepProblem sweep_problem(const ExperimentSpec& spec, double scan_value) {
    spec.validate();
    require(std::isfinite(scan_value) && scan_value > 0.0, ErrorKind::invalid_parameter,
            "scan value must be positive and finite");
    SweepProblem prob{SweepSystem::qrm(QrmParams{}), SweepSchedule{}};
    if (spec.is_quench()) {
        const QrmParams& p = spec.qrm();
        const detail::QuenchSetup q = detail::quench_setup(spec);
        prob.system = SweepSystem::qrm(p, ParitySector::symmetric());
        prob.schedule = SweepSchedule::linear(SweptParameter::delta, q.start, q.end, scan_value * p.omega * p.omega,
                                              spec.n_steps, 0);
        prob.readout = q.readout;
    } else {
        const MultiModeParams m = spec.modes();
        const double window = spec.bias_window();
        prob.system = SweepSystem::multimode(m, -window);
        prob.schedule = SweepSchedule::linear(SweptParameter::epsilon, -window, window, scan_value * m.delta * m.delta,
                                              spec.n_steps, 0);
        prob.psi0 = detail::lz_initial(m);
        prob.readout = Scheme::displaced;
    }
    return prob;
}

inline ResultTable run_experiment(const ExperimentSpec& spec) {
    switch (spec.kind) {
        case ExperimentKind::quench_ns:
        case ExperimentKind::quench_sn: return quench_rate_scan(spec);
        case ExperimentKind::quench_trace: return quench_time_trace(spec);
        case ExperimentKind::lz_scan:
        case ExperimentKind::lz_formula: return lz_scan(spec);
        case ExperimentKind::lz_trace: return lz_trace(spec);
        case ExperimentKind::multimode_scan: return multimode_scan(spec);
    }
    throw Error(ErrorKind::invalid_parameter, "unknown experiment kind");
}

// ---------------------------------------------------------------------------
// Presets

struct Preset {
    std::string name;
    std::string description;
    ExperimentSpec spec;
    bool long_running = false;  // opt-in: excluded from "all"
};

namespace detail {

inline BasisLabel lab(Scheme s, QubitLabel q, int n) { return BasisLabel::single(s, q, n); }

inline std::vector<BasisLabel> quench_labels(Scheme s, int count) {
    std::vector<BasisLabel> l;
    for (int n = 0; n < count; ++n) l.push_back(lab(s, quench_qubit(s, n), n));
    return l;
}

inline std::vector<BasisLabel> lz_labels(int up_count) {
    std::vector<BasisLabel> l{lab(Scheme::displaced, QubitLabel::down, 0)};
    for (int n = 0; n < up_count; ++n) l.push_back(lab(Scheme::displaced, QubitLabel::up, n));
    return l;
}

inline Preset quench_preset(const std::string& name, ExperimentKind kind, double g, Index n_fock,
                            std::vector<double> grid, QuenchDirection dir, bool long_running) {
    ExperimentSpec s;
    s.kind = kind;
    s.direction = dir;
    s.physics = QrmParams{0.0, 0.0, 1.0, g, n_fock};
    s.grid = std::move(grid);
    const Scheme readout = dir == QuenchDirection::ns ? Scheme::superradiant : Scheme::normal;
    s.labels = quench_labels(readout, 6);
    std::string what = kind == ExperimentKind::quench_trace ? "time trace at v/omega^2=1e4" : "rate scan";
    if (kind == ExperimentKind::quench_trace && dir == QuenchDirection::ns) s.trace_from = -3.0 * 4.0 * g * g;
    return {name,
            std::string(dir == QuenchDirection::ns ? "weak-to-strong" : "strong-to-weak") + " quench " + what +
                ", g/omega=" + fmt(g),
            s, long_running};
}

inline Preset lz_preset(const std::string& name, ExperimentKind kind, double g, double delta, Index n_fock,
                        std::vector<double> grid) {
    ExperimentSpec s;
    s.kind = kind;
    s.physics = QrmParams{delta, 0.0, 1.0, g, n_fock};
    s.grid = std::move(grid);
    s.labels = lz_labels(kind == ExperimentKind::lz_formula ? 6 : 4);
    return {name,
            std::string(kind == ExperimentKind::lz_formula ? "cascade formula curves" : "LZ simulation vs formula") +
                ", g/omega=" + fmt(g) + (kind == ExperimentKind::lz_formula ? "" : ", delta/omega=" + fmt(delta)),
            s, false};
}

}  // namespace detail

/// The two-mode preset: omega2 = 2.3 omega1, 16 x 9 Fock states (dimension 288).
inline MultiModeParams multimode_preset_params() {
    return MultiModeParams{0.1, {Mode{1.0, 0.5, 16}, Mode{2.3, 0.4, 9}}};
}

inline const std::vector<Preset>& presets() {
    using detail::lz_preset;
    using detail::quench_preset;
    static const std::vector<Preset> all = [] {
        using K = ExperimentKind;
        using D = QuenchDirection;
        std::vector<Preset> p;
        p.push_back(quench_preset("fig1a", K::quench_ns, 1.0, 64, log_grid(1e-2, 1e4), D::ns, false));
        p.push_back(quench_preset("fig1b", K::quench_ns, 2.0, 64, log_grid(1e-1, 1e4), D::ns, false));
        p.push_back(quench_preset("fig1c", K::quench_ns, 5.0, default_n_fock(5.0), log_grid(1e1, 1e4, 10), D::ns, false));
        p.push_back(quench_preset("fig1d", K::quench_ns, 20.0, 900, log_grid(1e2, 1e4, 5), D::ns, true));
        p.push_back(quench_preset("fig2a", K::quench_trace, 1.0, 64, {1e4}, D::ns, false));
        p.push_back(quench_preset("fig2b", K::quench_trace, 2.0, 64, {1e4}, D::ns, false));
        p.push_back(quench_preset("fig2c", K::quench_trace, 5.0, default_n_fock(5.0), {1e4}, D::ns, false));
        p.push_back(quench_preset("fig2d", K::quench_trace, 20.0, 900, {1e4}, D::ns, true));
        p.push_back(quench_preset("fig3a", K::quench_sn, 1.0, 64, log_grid(1e-2, 1e4), D::sn, false));
        p.push_back(quench_preset("fig3b", K::quench_sn, 2.0, 64, log_grid(1e-1, 1e4), D::sn, false));
        p.push_back(quench_preset("fig3c", K::quench_sn, 5.0, default_n_fock(5.0), log_grid(1e1, 1e4, 10), D::sn, false));
        p.push_back(quench_preset("fig3d", K::quench_sn, 20.0, 900, log_grid(1e2, 1e4, 5), D::sn, true));
        p.push_back(quench_preset("fig4a", K::quench_trace, 1.0, 64, {1e4}, D::sn, false));
        p.push_back(quench_preset("fig4b", K::quench_trace, 2.0, 64, {1e4}, D::sn, false));
        p.push_back(quench_preset("fig4c", K::quench_trace, 5.0, default_n_fock(5.0), {1e4}, D::sn, false));
        p.push_back(quench_preset("fig4d", K::quench_trace, 20.0, 900, {1e4}, D::sn, true));
        p.push_back(lz_preset("fig5a", K::lz_formula, 0.1, 1.0, 32, log_grid(1e-2, 1e3)));
        p.push_back(lz_preset("fig5b", K::lz_formula, 1.0, 1.0, 32, log_grid(1e-3, 1e3)));
        p.push_back(lz_preset("fig5c", K::lz_formula, 2.0, 1.0, 50, log_grid(1e-8, 1e3)));
        p.push_back(lz_preset("fig5d", K::lz_formula, 3.0, 1.0, 100, log_grid(1e-18, 1e3)));
        p.push_back(lz_preset("fig6a", K::lz_scan, 0.1, 0.1, 32, log_grid(1e-2, 1e2, 4)));
        p.push_back(lz_preset("fig6b", K::lz_scan, 0.1, 1.0, 32, log_grid(1e-2, 1e2, 4)));
        p.push_back(lz_preset("fig6c", K::lz_scan, 0.1, 10.0, 64, log_grid(1e-2, 1e2, 4)));
        p.push_back(lz_preset("fig6d", K::lz_scan, 1.0, 0.1, 32, log_grid(1e-2, 1e2, 4)));
        p.push_back(lz_preset("fig6e", K::lz_scan, 1.0, 1.0, 48, log_grid(1e-2, 1e2, 4)));
        p.push_back(lz_preset("fig6f", K::lz_scan, 1.0, 10.0, 64, log_grid(1e-2, 1e2, 4)));
        p.push_back(lz_preset("fig6g", K::lz_formula, 3.0, 0.1, 100, log_grid(1e-18, 1e3)));
        {
            ExperimentSpec s;
            s.kind = K::multimode_scan;
            s.physics = multimode_preset_params();
            s.grid = log_grid(1e-1, 1e2, 4);
            s.labels = {BasisLabel{Scheme::displaced, QubitLabel::down, {0, 0}},
                        BasisLabel{Scheme::displaced, QubitLabel::up, {0, 0}},
                        BasisLabel{Scheme::displaced, QubitLabel::up, {1, 0}},
                        BasisLabel{Scheme::displaced, QubitLabel::up, {0, 1}},
                        BasisLabel{Scheme::displaced, QubitLabel::up, {2, 0}}};
            p.push_back({"multimode", "two-mode LZ sweep, omega2=2.3 omega1, sim vs sequential crossings", s, false});
        }
        for (Preset& x : p) x.spec.validate();
        return p;
    }();
    return all;
}

inline const Preset& find_preset(const std::string& name) {
    for (const Preset& p : presets())
        if (p.name == name) return p;
    throw Error(ErrorKind::invalid_parameter, "unknown preset '" + name + "'");
}

}  // namespace qrsweep
