#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qrsweep/experiments.hpp"

using namespace qrsweep;

namespace {

BasisLabel sr(QubitLabel q, int n) { return BasisLabel::single(Scheme::superradiant, q, n); }
BasisLabel nm(QubitLabel q, int n) { return BasisLabel::single(Scheme::normal, q, n); }
BasisLabel dp(QubitLabel q, int n) { return BasisLabel::single(Scheme::displaced, q, n); }

double total(const std::vector<ProbabilityRecord>& r) {
    double s = 0.0;
    for (const auto& x : r) s += x.probability;
    return s;
}

ExperimentSpec small_quench(ExperimentKind kind, std::vector<double> grid) {
    ExperimentSpec s;
    s.kind = kind;
    s.physics = QrmParams{0.0, 0.0, 1.0, 0.5, 16};
    s.delta_weak = 20.0;
    s.grid = std::move(grid);
    s.n_steps = 20000;
    s.check_convergence = false;
    return s;
}

ExperimentSpec small_lz(double g, double delta, Index n_fock, std::vector<double> grid) {
    ExperimentSpec s;
    s.kind = ExperimentKind::lz_scan;
    s.physics = QrmParams{delta, 0.0, 1.0, g, n_fock};
    s.grid = std::move(grid);
    s.n_steps = 20000;
    s.check_convergence = false;
    return s;
}

}  // namespace

TEST(Grid, LogGridIsInclusiveAndLogSpaced) {
    const auto g = log_grid(1e-2, 1e2, 4);
    ASSERT_EQ(g.size(), 17u);
    EXPECT_DOUBLE_EQ(g.front(), 1e-2);
    EXPECT_DOUBLE_EQ(g.back(), 1e2);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(std::log10(g[i] / g[i - 1]), 0.25, 1e-12);
    EXPECT_EQ(log_grid(1e-1, 1e2, 4).size(), 13u);
}

TEST(Defaults, QuenchDeltaAndWindow) {
    EXPECT_DOUBLE_EQ(quench_default_delta(1.0, 1.0), 200.0);
    EXPECT_DOUBLE_EQ(quench_default_delta(5.0, 1.0), 5000.0);
    EXPECT_GT(lz_window(0.1, 1.0, 1.0), 14.0);
}

TEST(Spec, Validation) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_ns, {});
    EXPECT_THROW(s.validate(), Error);
    s.grid = {2.0, 1.0};
    EXPECT_THROW(s.validate(), Error);
    s.grid = {1.0, 2.0};
    EXPECT_NO_THROW(s.validate());
    s.kind = ExperimentKind::quench_trace;
    EXPECT_THROW(s.validate(), Error);
    s.grid = {1.0};
    EXPECT_NO_THROW(s.validate());
    s.delta_strong = 30.0;
    EXPECT_THROW(s.validate(), Error);

    ExperimentSpec l = small_lz(0.3, 0.0, 12, {1.0});
    EXPECT_THROW(l.validate(), Error);
    l.physics = MultiModeParams{0.3, {Mode{1.0, 0.3, 12}}};
    EXPECT_THROW(l.validate(), Error);
    l.kind = ExperimentKind::multimode_scan;
    EXPECT_NO_THROW(l.validate());
    l.max_point_seconds = -1.0;
    EXPECT_THROW(l.validate(), Error);
}

TEST(Spec, ScanVariables) {
    EXPECT_EQ(small_quench(ExperimentKind::quench_ns, {1.0}).scan_variable(), "v/omega^2");
    ExperimentSpec t = small_quench(ExperimentKind::quench_trace, {1.0});
    EXPECT_EQ(t.scan_variable(), "v(t-T)/omega");
    t.direction = QuenchDirection::sn;
    EXPECT_EQ(t.scan_variable(), "vt/omega");
    EXPECT_EQ(small_lz(0.3, 0.3, 12, {1.0}).scan_variable(), "v/delta^2");
}

TEST(Quench, FastSweepApproachesPoisson) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_ns, {1e4});
    s.delta_weak.reset();
    const ResultTable t = quench_rate_scan(s);
    ASSERT_EQ(t.rows.size(), 1u);
    const ResultRow& r = t.rows.front();
    ASSERT_TRUE(r.simulated && r.oracle);
    EXPECT_EQ(r.verdict, Verdict::unchecked);
    EXPECT_NEAR(r.simulated_total(), 1.0, 1e-6);
    EXPECT_NEAR(r.probability(sr(QubitLabel::plus, 0)), std::exp(-0.25), 5e-3);
    EXPECT_NEAR(r.probability(sr(QubitLabel::minus, 1)), 0.25 * std::exp(-0.25), 5e-3);
    EXPECT_LT(r.max_deviation(), 5e-3);
    EXPECT_LE(r.norm_drift, 1e-8);
}

TEST(Quench, SlowStrongToWeakStaysInGroundState) {
    const ResultTable t = quench_rate_scan(small_quench(ExperimentKind::quench_sn, {0.01}));
    EXPECT_GE(t.rows.front().probability(nm(QubitLabel::right, 0)), 0.99);
}

TEST(Quench, RowsShareLabelsAndOraclesAreDeterministic) {
    const ExperimentSpec s = small_quench(ExperimentKind::quench_ns, {10.0, 1e3});
    const ResultTable a = quench_rate_scan(s);
    const ResultTable b = quench_rate_scan(s);
    ASSERT_EQ(a.rows.size(), 2u);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto& sim = *a.rows[i].simulated;
        const auto& orc = *a.rows[i].oracle;
        ASSERT_EQ(sim.size(), orc.size());
        for (std::size_t k = 0; k < sim.size(); ++k) {
            EXPECT_EQ(sim[k].label, orc[k].label);
            EXPECT_EQ(orc[k].probability, (*b.rows[i].oracle)[k].probability);
        }
    }
}

TEST(Quench, ConvergenceVerdictIsRecorded) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_ns, {1e3});
    s.check_convergence = true;
    const ResultTable t = quench_rate_scan(s);
    EXPECT_EQ(t.rows.front().verdict, Verdict::converged) << t.rows.front().note;
    EXPECT_NE(t.rows.front().note.find("max change"), std::string::npos);
    EXPECT_EQ(t.metadata.at("rows_converged"), "1/1");
}

TEST(Quench, TruncationFailureIsRecordedPerRow) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_ns, {1.0, 1e3});
    s.physics = QrmParams{0.0, 0.0, 1.0, 1.5, 8};
    s.delta_weak = 60.0;
    const ResultTable t = quench_rate_scan(s);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_GE(t.failures(), 1u);
    bool seen = false;
    for (const auto& r : t.rows)
        if (r.verdict == Verdict::failed) {
            seen = true;
            EXPECT_FALSE(r.simulated.has_value());
            EXPECT_NE(r.note.find("insufficient-truncation"), std::string::npos) << r.note;
        }
    EXPECT_TRUE(seen);
}

TEST(Trace, FirstRowIsTheGroundState) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_trace, {100.0});
    s.trace_samples = 20;
    for (QuenchDirection d : {QuenchDirection::ns, QuenchDirection::sn}) {
        s.direction = d;
        const ResultTable t = quench_time_trace(s);
        ASSERT_EQ(t.rows.size(), 20u);
        const BasisLabel ground = d == QuenchDirection::ns ? sr(QubitLabel::plus, 0) : nm(QubitLabel::right, 0);
        EXPECT_NEAR(t.rows.front().probability(ground), 1.0, 1e-10);
        for (const auto& r : t.rows) EXPECT_NEAR(r.simulated_total(), 1.0, 1e-6);
        EXPECT_TRUE(t.metadata.count("semiclassical_crossing"));
    }
}

TEST(Trace, TraceEndMatchesRateScan) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_trace, {100.0});
    s.trace_samples = 10;
    const ResultTable trace = quench_time_trace(s);
    const ResultTable scan = quench_rate_scan(small_quench(ExperimentKind::quench_ns, {100.0}));
    for (int n = 0; n < 4; ++n) {
        const BasisLabel l = sr(detail::quench_qubit(Scheme::superradiant, n), n);
        EXPECT_NEAR(trace.rows.back().probability(l), scan.rows.front().probability(l), 1e-6);
    }
}

TEST(Lz, SurvivalMatchesExactLawWithCoupling) {
    const ResultTable t = lz_scan(small_lz(0.5, 0.3, 16, {0.3, 3.0}));
    for (const auto& r : t.rows) {
        const double exact = lz_probability(0.3, r.scan_value * 0.09);
        EXPECT_NEAR(r.probability(dp(QubitLabel::down, 0)), exact, 5e-3);
        EXPECT_NEAR(r.oracle_probability(dp(QubitLabel::down, 0)), exact, 1e-12);
        EXPECT_NEAR(r.simulated_total(), 1.0, 1e-6);
    }
}

TEST(Lz, FormulaRowsHaveNoSimulation) {
    ExperimentSpec s = small_lz(1.0, 1.0, 32, log_grid(1e-2, 1e2, 2));
    s.kind = ExperimentKind::lz_formula;
    const ResultTable t = lz_scan(s);
    ASSERT_EQ(t.rows.size(), 9u);
    for (const auto& r : t.rows) {
        EXPECT_FALSE(r.simulated.has_value());
        ASSERT_TRUE(r.oracle.has_value());
        EXPECT_NEAR(total(*r.oracle), 1.0, 1e-9);
        EXPECT_EQ(r.verdict, Verdict::converged);
    }
}

TEST(Multimode, OneModeMatchesLzScan) {
    ExperimentSpec single = small_lz(0.3, 0.2, 12, {0.5, 5.0});
    single.window = 8.0;
    ExperimentSpec multi = single;
    multi.kind = ExperimentKind::multimode_scan;
    multi.physics = MultiModeParams{0.2, {Mode{1.0, 0.3, 12}}};
    const ResultTable a = lz_scan(single);
    const ResultTable b = multimode_scan(multi);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        for (const auto& p : *a.rows[i].simulated) EXPECT_NEAR(b.rows[i].probability(p.label), p.probability, 1e-12);
        for (const auto& p : *a.rows[i].oracle) EXPECT_NEAR(b.rows[i].oracle_probability(p.label), p.probability, 1e-12);
    }
}

TEST(Multimode, DecoupledSecondModeGivesTheSingleModeMarginal) {
    ExperimentSpec single = small_lz(0.3, 0.2, 12, {1.0});
    single.window = 8.0;
    ExperimentSpec multi = single;
    multi.kind = ExperimentKind::multimode_scan;
    multi.physics = MultiModeParams{0.2, {Mode{1.0, 0.3, 12}, Mode{2.3, 0.0, 3}}};
    const ResultRow a = lz_scan(single).rows.front();
    const ResultRow b = multimode_scan(multi).rows.front();
    ASSERT_TRUE(b.simulated.has_value());
    EXPECT_NEAR(b.simulated_total(), 1.0, 1e-6);
    for (const auto& p : *a.simulated) {
        if (p.label.scheme != Scheme::displaced || p.label.n() > 6) continue;
        double marginal = 0.0;
        for (const auto& q : *b.simulated)
            if (q.label.qubit == p.label.qubit && q.label.photons.front() == p.label.n()) marginal += q.probability;
        EXPECT_NEAR(marginal, p.probability, 1e-6) << p.label.to_string();
    }
}

TEST(Multimode, CoincidentCrossingsAreRefused) {
    ExperimentSpec s;
    s.kind = ExperimentKind::multimode_scan;
    s.physics = MultiModeParams{0.1, {Mode{1.0, 0.3, 6}, Mode{2.0, 0.3, 4}}};
    s.grid = {1.0};
    try {
        multimode_scan(s);
        FAIL() << "expected degenerate-crossing";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_crossing);
    }
}

TEST(Multimode, LargeSpacesAreOracleOnly) {
    ExperimentSpec s;
    s.kind = ExperimentKind::multimode_scan;
    s.physics = multimode_preset_params();
    s.grid = {1.0, 10.0};
    s.max_dimension = 100;
    const ResultTable t = multimode_scan(s);
    for (const auto& r : t.rows) {
        EXPECT_FALSE(r.simulated.has_value());
        ASSERT_TRUE(r.oracle.has_value());
        EXPECT_NEAR(total(*r.oracle), 1.0, 1e-9);
    }
}

TEST(Sweep, TimeLimitAbortsThePoint) {
    ExperimentSpec s = small_quench(ExperimentKind::quench_ns, {0.01});
    s.n_steps = 2000000;
    s.max_point_seconds = 1e-4;
    const ResultTable t = quench_rate_scan(s);
    EXPECT_EQ(t.rows.front().verdict, Verdict::failed);
    EXPECT_NE(t.rows.front().note.find("resource-limit"), std::string::npos) << t.rows.front().note;
}

TEST(Sweep, ProblemForAScanPoint) {
    const SweepProblem q = sweep_problem(small_quench(ExperimentKind::quench_sn, {1.0}), 4.0);
    EXPECT_EQ(q.readout, Scheme::normal);
    EXPECT_DOUBLE_EQ(q.schedule.duration(), 5.0);
    ExperimentSpec l = small_lz(0.3, 0.5, 12, {1.0});
    l.window = 5.0;
    const SweepProblem p = sweep_problem(l, 2.0);
    EXPECT_EQ(p.readout, Scheme::displaced);
    EXPECT_DOUBLE_EQ(p.schedule.duration(), 20.0);
    EXPECT_TRUE(p.psi0.has_value());
}

TEST(Presets, AllValidateAndCarryFigureLabels) {
    EXPECT_GE(presets().size(), 28u);
    for (const Preset& p : presets()) {
        EXPECT_NO_THROW(p.spec.validate()) << p.name;
        EXPECT_FALSE(p.spec.labels.empty()) << p.name;
    }
    EXPECT_EQ(find_preset("fig5a").spec.labels.size(), 7u);
    EXPECT_TRUE(find_preset("fig1d").long_running);
    EXPECT_FALSE(find_preset("fig1a").long_running);
    EXPECT_EQ(find_preset("fig1a").spec.qrm().n_fock, 64);
    EXPECT_THROW(find_preset("nope"), Error);
}
