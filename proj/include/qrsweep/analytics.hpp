// analytics.hpp: closed-form results for the swept qubit-oscillator system.
//
// These are the oracles the simulations are checked against: the coherent-state Poisson
// law for sudden quenches, the two-level Landau-Zener survival probability, and the
// independent-crossing cascade with its polaron-dressed gaps.  Gap arithmetic is done in
// log space because e^{-2 (g/omega)^2} underflows long before the physics becomes boring.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "qrsweep/errors.hpp"
#include "qrsweep/model.hpp"

namespace qrsweep {

struct ProbabilityRecord {
    BasisLabel label;
    double probability = 0.0;
    bool degenerate = false;  // set when the readout level was within tracking resolution of a neighbour
};

/// e^{-<n>} <n>^n / n! with <n> = (g/omega)^2.
inline double poisson_overlap(int n, double g, double omega) {
    require(n >= 0, ErrorKind::invalid_parameter, "photon number must be non-negative");
    require(omega > 0.0, ErrorKind::invalid_parameter, "oscillator frequency must be positive");
    const double mean = (g / omega) * (g / omega);
    if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::exp(-mean + n * std::log(mean) - std::lgamma(n + 1.0));
}

/// Two-level Landau-Zener survival e^{-pi delta^2 / (2 v)}.
inline double lz_probability(double delta, double v) {
    require(v > 0.0, ErrorKind::invalid_parameter, "sweep rate must be positive");
    return std::exp(-std::numbers::pi * delta * delta / (2.0 * v));
}

/// ceil(4 (g/omega)^2) + 60, widened to eight Poisson widths (16 g/omega) at strong coupling.
inline int default_n_max(double g_over_omega) {
    const double r = std::abs(g_over_omega);
    const int margin = std::max(60, static_cast<int>(std::ceil(16.0 * r)));
    return static_cast<int>(std::ceil(4.0 * r * r - 1e-12)) + margin;
}

struct GapEntry {
    std::vector<int> occupation;
    double log_gap = -std::numeric_limits<double>::infinity();  // log of the effective gap
    double crossing = 0.0;                                       // bias vt at which the crossing occurs

    double gap() const { return std::exp(log_gap); }
};

struct GapSpectrum {
    double delta = 0.0;
    std::vector<double> ratios;    // g_j / omega_j
    std::vector<GapEntry> entries; // sorted by crossing position
    double sum_rule_tail = 0.0;    // 1 - sum gap^2 / delta^2

    double gap(std::size_t i) const { return entries.at(i).gap(); }

    /// Groups of entries with non-zero gaps that share a crossing position.
    std::vector<std::vector<std::size_t>> degenerate_groups(double tolerance = 1e-9) const {
        std::vector<std::vector<std::size_t>> groups;
        std::size_t i = 0;
        while (i < entries.size()) {
            std::size_t j = i + 1;
            const double scale = std::max(1.0, std::abs(entries[i].crossing));
            while (j < entries.size() && std::abs(entries[j].crossing - entries[i].crossing) <= tolerance * scale) ++j;
            std::vector<std::size_t> live;
            for (std::size_t k = i; k < j; ++k)
                if (std::isfinite(entries[k].log_gap)) live.push_back(k);
            if (live.size() > 1) groups.push_back(std::move(live));
            i = j;
        }
        return groups;
    }
};

namespace detail {

inline double log_abs(double x) { return x == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(std::abs(x)); }

/// log of (1/sqrt(n!)) (2r)^n e^{-2 r^2} for one mode.
inline double log_mode_factor(int n, double ratio) {
    if (n == 0) return -2.0 * ratio * ratio;
    if (ratio == 0.0) return -std::numeric_limits<double>::infinity();
    return -0.5 * std::lgamma(n + 1.0) + n * std::log(2.0 * std::abs(ratio)) - 2.0 * ratio * ratio;
}

inline double sum_rule_tail(double delta, const std::vector<GapEntry>& entries) {
    if (delta == 0.0) return 0.0;
    const double ld = std::log(std::abs(delta));
    double s = 0.0;
    for (const auto& e : entries) s += std::exp(2.0 * (e.log_gap - ld));
    return 1.0 - s;
}

/// x = pi Delta_k^2 / (2 v) evaluated in log space.
inline double lz_exponent(double log_gap, double v) {
    if (!std::isfinite(log_gap)) return 0.0;
    return std::exp(std::log(std::numbers::pi / 2.0) + 2.0 * log_gap - std::log(v));
}

}  // namespace detail

/// Delta_n = (1/sqrt(n!)) (2g/omega)^n e^{-2 (g/omega)^2} delta, n = 0..n_max.
inline GapSpectrum cascade_gaps(double delta, double g, double omega, int n_max) {
    require(n_max >= 1, ErrorKind::invalid_parameter, "n_max must be at least 1");
    require(omega > 0.0, ErrorKind::invalid_parameter, "oscillator frequency must be positive");
    const double r = g / omega;
    GapSpectrum s;
    s.delta = delta;
    s.ratios = {r};
    s.entries.reserve(static_cast<std::size_t>(n_max) + 1);
    for (int n = 0; n <= n_max; ++n)
        s.entries.push_back({{n}, detail::log_abs(delta) + detail::log_mode_factor(n, r), n * omega});
    s.sum_rule_tail = detail::sum_rule_tail(delta, s.entries);
    return s;
}

/// Sequential independent-crossing probabilities over a sorted gap spectrum:
/// P(up, k) = prod_{j<k} e^{-x_j} (1 - e^{-x_k}),  P(down, 0) = e^{-pi delta^2 / 2v}.
/// Throws when crossings coincide or when the spectrum leaves more than `max_residual`
/// of survival probability unassigned.
inline std::vector<ProbabilityRecord> sequential_probabilities(const GapSpectrum& s, double v,
                                                               double max_residual = 1e-9) {
    require(v > 0.0, ErrorKind::invalid_parameter, "sweep rate must be positive");
    if (!s.degenerate_groups().empty())
        throw Error(ErrorKind::degenerate_crossing,
                    "coincident avoided crossings; the independent-crossing picture does not apply");
    std::vector<ProbabilityRecord> out;
    out.reserve(s.entries.size() + 1);
    double log_survival = 0.0;
    for (const GapEntry& e : s.entries) {
        const double x = detail::lz_exponent(e.log_gap, v);
        out.push_back({BasisLabel{Scheme::displaced, QubitLabel::up, e.occupation},
                       std::exp(log_survival) * -std::expm1(-x)});
        log_survival -= x;
    }
    const double down = lz_probability(s.delta, v);
    const double residual = std::exp(log_survival) - down;
    require(residual <= max_residual, ErrorKind::insufficient_truncation,
            "cascade truncated with residual survival " + std::to_string(residual));
    std::vector<int> vacuum(s.ratios.size(), 0);
    out.push_back({BasisLabel{Scheme::displaced, QubitLabel::down, vacuum}, down});
    return out;
}

inline std::vector<ProbabilityRecord> cascade_probabilities(double delta, double v, double g, double omega,
                                                            int n_max) {
    return sequential_probabilities(cascade_gaps(delta, g, omega, n_max), v);
}

inline std::vector<ProbabilityRecord> cascade_probabilities(double delta, double v, double g, double omega) {
    return cascade_probabilities(delta, v, g, omega, default_n_max(g / omega));
}

/// Delta_{n1,n2,...} = delta prod_j (1/sqrt(n_j!)) (2 g_j/omega_j)^{n_j} e^{-2 (g_j/omega_j)^2},
/// crossings at sum_j n_j omega_j, sorted by crossing then lexicographic occupation.
inline GapSpectrum multimode_gaps(const MultiModeParams& p, const std::vector<int>& caps) {
    p.validate();
    require(caps.size() == p.modes.size(), ErrorKind::invalid_parameter, "one occupation cap per mode");
    for (int c : caps) require(c >= 0, ErrorKind::invalid_parameter, "occupation caps must be non-negative");
    GapSpectrum s;
    s.delta = p.delta;
    for (const Mode& m : p.modes) s.ratios.push_back(m.g / m.omega);
    std::vector<int> occ(caps.size(), 0);
    while (true) {
        double lg = detail::log_abs(p.delta), crossing = 0.0;
        for (std::size_t j = 0; j < occ.size(); ++j) {
            lg += detail::log_mode_factor(occ[j], s.ratios[j]);
            crossing += occ[j] * p.modes[j].omega;
        }
        s.entries.push_back({occ, lg, crossing});
        std::size_t j = occ.size();
        while (j > 0 && occ[j - 1] == caps[j - 1]) occ[--j] = 0;
        if (j == 0) break;
        ++occ[j - 1];
    }
    std::stable_sort(s.entries.begin(), s.entries.end(), [](const GapEntry& a, const GapEntry& b) {
        if (a.crossing != b.crossing) return a.crossing < b.crossing;
        return a.occupation < b.occupation;
    });
    s.sum_rule_tail = detail::sum_rule_tail(p.delta, s.entries);
    return s;
}

/// Maximizes f(v) over log v in [v_lo, v_hi]: coarse log grid, then golden section.
inline std::pair<double, double> maximize_over_rate(const std::function<double(double)>& f, double v_lo,
                                                    double v_hi, int coarse_points = 241) {
    require(v_lo > 0.0 && v_hi > v_lo, ErrorKind::invalid_parameter, "invalid rate bracket");
    const double a = std::log(v_lo), b = std::log(v_hi);
    const double h = (b - a) / (coarse_points - 1);
    int best = 0;
    double best_val = -INFINITY;
    for (int i = 0; i < coarse_points; ++i) {
        const double val = f(std::exp(a + i * h));
        if (val > best_val) {
            best_val = val;
            best = i;
        }
    }
    double lo = a + std::max(0, best - 1) * h, hi = a + std::min(coarse_points - 1, best + 1) * h;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = f(std::exp(x1)), f2 = f(std::exp(x2));
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(std::exp(x2));
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(std::exp(x1));
        }
    }
    const double x = 0.5 * (lo + hi);
    const double fx = f(std::exp(x));
    if (best_val > fx) return {std::exp(a + best * h), best_val};
    return {std::exp(x), fx};
}

/// P(up, n) of the cascade at rate v, from precomputed log gaps.
inline double cascade_level_probability(const GapSpectrum& s, std::size_t n, double v) {
    double log_survival = 0.0;
    for (std::size_t k = 0; k < n; ++k) log_survival -= detail::lz_exponent(s.entries[k].log_gap, v);
    return std::exp(log_survival) * -std::expm1(-detail::lz_exponent(s.entries[n].log_gap, v));
}

struct FockPrepWindow {
    bool has_window = false;  // Delta_n > Delta_{n-1}
    bool separated = false;   // v_low < v_high: the target crossing is adiabatic while earlier ones are fast
    double v_low = 0.0;       // 10 x pi Delta_{n-1}^2 / 2
    double v_high = 0.0;      // pi Delta_n^2 / 2 / 10
    double predicted_peak = 0.0;
    double peak_rate = 0.0;
};

inline FockPrepWindow fock_prep_window(double delta, double g, double omega, int target_n) {
    require(target_n >= 1, ErrorKind::invalid_parameter, "target photon number must be at least 1");
    const GapSpectrum s = cascade_gaps(delta, g, omega, std::max(target_n, 1));
    const auto n = static_cast<std::size_t>(target_n);
    const double lg_prev = s.entries[n - 1].log_gap, lg = s.entries[n].log_gap;
    FockPrepWindow w;
    if (!(std::isfinite(lg) && lg > lg_prev)) return w;
    w.has_window = true;
    const double log_half_pi = std::log(std::numbers::pi / 2.0);
    w.v_low = std::exp(log_half_pi + 2.0 * lg_prev + std::log(10.0));
    w.v_high = std::exp(log_half_pi + 2.0 * lg - std::log(10.0));
    w.separated = w.v_low < w.v_high;
    // The peak sits between the two gap scales; bracket generously around both.
    const double lo = std::exp(log_half_pi + 2.0 * std::min(lg_prev, lg) - std::log(1e4));
    const double hi = std::exp(log_half_pi + 2.0 * std::max(lg_prev, lg) + std::log(1e4));
    const auto [v_star, peak] =
        maximize_over_rate([&](double v) { return cascade_level_probability(s, n, v); }, lo, hi);
    w.peak_rate = v_star;
    w.predicted_peak = peak;
    return w;
}

}  // namespace qrsweep
