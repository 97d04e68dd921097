// qrsweep command-line front end.
//
// Exit codes: 0 success, 1 validation or usage error, 2 numerical or I/O failure.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrsweep/io.hpp"

using namespace qrsweep;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_failure = 2;

struct KeyFlag {
    const char* key;
    const char* help;
};

const std::vector<KeyFlag>& physics_flags() {
    static const std::vector<KeyFlag> f = {
        {"g_over_omega", "coupling g/omega"},
        {"delta_over_omega", "qubit splitting delta/omega (LZ, multimode)"},
        {"epsilon_over_omega", "static bias epsilon/omega"},
        {"n_fock", "Fock states per mode"},
        {"grid", "scan grid: lo:hi[:per_decade] (log spaced) or a comma list"},
        {"n_steps", "propagation steps per sweep"},
        {"check_convergence", "refine with n_steps x2 and n_fock x2 (true/false)"},
        {"tolerance", "convergence tolerance on probabilities"},
        {"workers", "worker threads, 0 = hardware concurrency"},
        {"max_point_seconds", "wall-time limit per simulation, 0 = none"},
        {"labels", "plotted labels, e.g. \"displaced(up,0) displaced(down,0)\""},
        {"name", "output file stem"},
        {"output_dir", "run directory (default out/<name>)"},
        {"emit_svg", "write an SVG plot (true/false)"},
    };
    return f;
}

std::string flag_name(const std::string& key) {
    std::string s = "--" + key;
    for (char& c : s)
        if (c == '_') c = '-';
    return s;
}

/// Registers `--some-key VALUE` options that fill `flags["some_key"]`.
void add_key_flags(CLI::App* app, io::ConfigMap& flags, const std::vector<KeyFlag>& keys) {
    for (const KeyFlag& k : keys) {
        const std::string key = k.key;
        app->add_option_function<std::string>(
            flag_name(key), [&flags, key](const std::string& v) { flags[key] = v; }, k.help);
    }
}

struct RunOptions {
    io::ConfigMap flags;
    std::string config_file;
};

void add_run_flags(CLI::App* app, RunOptions& o, const std::vector<KeyFlag>& extra) {
    app->add_option("--config", o.config_file, "key=value config file; flags override it")->check(CLI::ExistingFile);
    add_key_flags(app, o.flags, physics_flags());
    add_key_flags(app, o.flags, extra);
}

io::ConfigMap effective_keys(const RunOptions& o) {
    io::ConfigMap file;
    if (!o.config_file.empty()) file = io::load_config(o.config_file);
    return io::merge(file, o.flags);
}

std::vector<double> default_grid(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::quench_ns:
        case ExperimentKind::quench_sn: return log_grid(1e-2, 1e4);
        case ExperimentKind::quench_trace:
        case ExperimentKind::lz_trace: return {1e4};
        case ExperimentKind::lz_formula: return log_grid(1e-3, 1e3);
        case ExperimentKind::lz_scan:
        case ExperimentKind::multimode_scan: return log_grid(1e-2, 1e2, 4);
    }
    return {};
}

bool same_family(ExperimentKind a, ExperimentKind b) {
    auto family = [](ExperimentKind k) {
        switch (k) {
            case ExperimentKind::quench_ns:
            case ExperimentKind::quench_sn:
            case ExperimentKind::quench_trace: return 0;
            case ExperimentKind::lz_scan:
            case ExperimentKind::lz_formula:
            case ExperimentKind::lz_trace: return 1;
            case ExperimentKind::multimode_scan: return 2;
        }
        return -1;
    };
    return family(a) == family(b);
}

/// Resolves keys into a validated run; `kind` fills in when neither kind nor preset is given.
io::RunConfig resolve(io::ConfigMap keys, std::optional<ExperimentKind> kind) {
    if (keys.count("preset")) {
        if (kind && !same_family(find_preset(keys["preset"]).spec.kind, *kind))
            throw Error(ErrorKind::invalid_parameter,
                        "preset '" + keys["preset"] + "' is not a " + to_string(*kind) + " experiment");
    } else {
        if (!keys.count("kind") && kind) keys["kind"] = to_string(*kind);
        const auto k = experiment_kind_from_string(keys["kind"]);
        require(k.has_value(), ErrorKind::invalid_parameter, "unknown experiment kind '" + keys["kind"] + "'");
        if (*k != ExperimentKind::multimode_scan)
            require(keys.count("g_over_omega") > 0, ErrorKind::invalid_parameter, "--g-over-omega is required");
        if (!keys.count("grid")) {
            std::string g;
            for (double x : default_grid(*k)) g += (g.empty() ? "" : ",") + io::fmt(x);
            keys["grid"] = g;
        }
    }
    io::RunConfig c = io::run_config_from(keys);
    if (!keys.count("output_dir")) c.output_dir = io::fs::path("out") / c.name;
    return c;
}

int run_tables(const std::vector<io::RunConfig>& runs, const io::fs::path& dir, const io::ConfigMap& echo, bool svg) {
    std::vector<ResultTable> tables;
    bool failed = false;
    for (const io::RunConfig& r : runs) {
        std::cerr << "running " << r.name << " (" << to_string(r.experiment.kind) << ", "
                  << r.experiment.grid.size() << " points)\n";
        ResultTable t = run_experiment(r.experiment);
        t.name = r.name;
        for (const ResultRow& row : t.rows) {
            if (row.verdict == Verdict::failed) {
                failed = true;
                std::cerr << "error: " << r.name << " at " << io::fmt(row.scan_value) << ": " << row.note << "\n";
            } else if (row.verdict == Verdict::not_converged) {
                std::cerr << "warning: " << r.name << " at " << io::fmt(row.scan_value) << " not converged: "
                          << row.note << "\n";
            }
        }
        tables.push_back(std::move(t));
    }
    std::vector<std::string> warnings;
    const auto written = io::write_run(tables, dir, echo, svg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& w : written) {
        const auto& md = w.table.metadata;
        const bool checked = !md.contains("convergence_check") || md.at("convergence_check") != "off";
        std::cout << w.csv.string() << "  rows=" << w.table.rows.size()
                  << (checked ? " converged=" + md.at("rows_converged") : std::string(" convergence unchecked")) << "\n";
        if (w.svg) std::cout << w.svg->string() << "\n";
    }
    std::cout << (dir / "manifest.json").string() << "\n";
    return failed ? exit_failure : exit_ok;
}

int run_single(const RunOptions& o, std::optional<ExperimentKind> kind) {
    const io::RunConfig c = resolve(effective_keys(o), kind);
    return run_tables({c}, c.output_dir, c.echo, c.emit_svg);
}

// ---------------------------------------------------------------------------

struct FormulaOptions {
    double g = 0.0;
    std::optional<int> n;
    double delta = 1.0;
    std::optional<double> v_over_delta2;
    std::optional<int> n_max;
    std::optional<int> fock_prep;
};

int run_formula(const FormulaOptions& f) {
    require(std::isfinite(f.g), ErrorKind::invalid_parameter, "g/omega must be finite");
    require(std::isfinite(f.delta) && f.delta > 0.0, ErrorKind::invalid_parameter, "delta/omega must be positive");
    int printed = 0;
    if (f.n) {
        std::printf("%.6f\n", poisson_overlap(*f.n, f.g, 1.0));
        ++printed;
    }
    if (f.v_over_delta2) {
        require(std::isfinite(*f.v_over_delta2) && *f.v_over_delta2 > 0.0, ErrorKind::invalid_parameter,
                "v/delta^2 must be positive");
        const int n_max = f.n_max ? *f.n_max : default_n_max(f.g);
        const auto probs = cascade_probabilities(f.delta, *f.v_over_delta2 * f.delta * f.delta, f.g, 1.0, n_max);
        std::printf("label,probability\n");
        for (const auto& p : probs) std::printf("%s,%.9g\n", p.label.to_string().c_str(), p.probability);
        ++printed;
    }
    if (f.fock_prep) {
        const FockPrepWindow w = fock_prep_window(f.delta, f.g, 1.0, *f.fock_prep);
        std::printf("n,has_window,separated,v_low_over_delta2,v_high_over_delta2,peak_rate_over_delta2,predicted_peak\n");
        const double d2 = f.delta * f.delta;
        std::printf("%d,%s,%s,%.9g,%.9g,%.9g,%.9g\n", *f.fock_prep, w.has_window ? "true" : "false",
                    w.separated ? "true" : "false", w.v_low / d2, w.v_high / d2, w.peak_rate / d2, w.predicted_peak);
        ++printed;
    }
    require(printed > 0, ErrorKind::invalid_parameter, "give --n, --v-over-delta2 or --fock-prep");
    return exit_ok;
}

struct SpectrumOptions {
    double delta = 0.0, epsilon = 0.0, g = 0.0;
    std::optional<long> n_fock;
    int levels = 10;
};

int run_spectrum(const SpectrumOptions& s) {
    require(s.levels > 0, ErrorKind::invalid_parameter, "--levels must be positive");
    const QrmParams p{s.delta, s.epsilon, 1.0, s.g, s.n_fock ? static_cast<Index>(*s.n_fock) : default_n_fock(s.g)};
    p.validate();
    const EigenSystem e = eig_hermitian(build_qrm(p));
    std::printf("level,energy\n");
    for (Index k = 0; k < std::min<Index>(s.levels, e.values.size()); ++k)
        std::printf("%lld,%.9g\n", static_cast<long long>(k), e.values[k]);
    return exit_ok;
}

struct ConvergenceOptions {
    RunOptions run;
    std::string knob = "all";
    double factor = 2.0;
    std::optional<double> point;
};

int run_convergence(const ConvergenceOptions& o) {
    io::ConfigMap keys = effective_keys(o.run);
    require(keys.count("preset") || keys.count("kind"), ErrorKind::invalid_parameter,
            "convergence needs --preset or --kind");
    const io::RunConfig c = resolve(keys, std::nullopt);
    require(c.experiment.kind != ExperimentKind::lz_formula, ErrorKind::invalid_parameter,
            "formula runs involve no simulation");
    require(std::isfinite(o.factor) && o.factor > 1.0, ErrorKind::invalid_parameter, "--factor must exceed 1");
    std::vector<ConvergenceKnob> knobs;
    if (o.knob == "all") {
        knobs = {ConvergenceKnob::n_steps, ConvergenceKnob::n_fock, ConvergenceKnob::endpoint_magnitude};
    } else {
        const auto k = convergence_knob_from_string(o.knob);
        require(k.has_value(), ErrorKind::invalid_parameter, "unknown knob '" + o.knob + "'");
        knobs = {*k};
    }
    const std::vector<double> points = o.point ? std::vector<double>{*o.point} : c.experiment.grid;
    bool all_passed = true;
    std::printf("scan_value,knob,factor,max_change,passed,failure\n");
    for (double x : points) {
        const SweepProblem prob = sweep_problem(c.experiment, x);
        for (ConvergenceKnob k : knobs) {
            const ConvergenceReport r = convergence_scan(prob, k, c.experiment.tolerance, {o.factor});
            all_passed = all_passed && r.passed;
            std::printf("%s,%s,%s,%s,%s,%s\n", io::fmt(x).c_str(), to_string(k).c_str(), io::fmt(o.factor).c_str(),
                        io::fmt(r.max_change).c_str(), r.passed ? "true" : "false", r.failure.c_str());
        }
    }
    return all_passed ? exit_ok : exit_failure;
}

int list_presets() {
    std::printf("%-10s %-15s %-6s %s\n", "name", "kind", "opt-in", "description");
    for (const Preset& p : presets())
        std::printf("%-10s %-15s %-6s %s\n", p.name.c_str(), to_string(p.spec.kind).c_str(),
                    p.long_running ? "yes" : "", p.description.c_str());
    return exit_ok;
}

int run_presets(const std::string& name, const RunOptions& o) {
    io::ConfigMap keys = effective_keys(o);
    require(!keys.count("kind") && !keys.count("preset"), ErrorKind::invalid_parameter,
            "presets takes the preset name as its argument");
    if (name != "all") {
        keys["preset"] = name;
        const io::RunConfig c = resolve(keys, std::nullopt);
        return run_tables({c}, c.output_dir, c.echo, c.emit_svg);
    }
    require(!keys.count("name"), ErrorKind::invalid_parameter, "--name does not apply to 'all'");
    std::vector<io::RunConfig> runs;
    for (const Preset& p : presets()) {
        if (p.long_running) continue;
        io::ConfigMap k = keys;
        k.erase("output_dir");
        k["preset"] = p.name;
        runs.push_back(resolve(k, std::nullopt));
    }
    const io::fs::path dir = keys.count("output_dir") ? io::fs::path(keys["output_dir"]) : io::fs::path("out") / "all";
    keys["preset"] = "all";
    return run_tables(runs, dir, keys, runs.front().emit_svg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum Rabi model sweep simulator"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    RunOptions quench_o, lz_o, multimode_o, presets_o;
    bool quench_trace = false, lz_trace = false, lz_formula = false;
    bool large_delta = false;

    CLI::App* quench = app.add_subcommand("quench", "delta quench scan or time trace");
    add_run_flags(quench, quench_o,
                  {{"direction", "ns (weak to strong) or sn (strong to weak)"},
                   {"delta_weak", "weak-coupling delta/omega (default max(200, 50 (2g/omega)^2))"},
                   {"delta_strong", "strong-coupling delta/omega (default 0)"},
                   {"trace_samples", "samples in a time trace"},
                   {"trace_from", "first sampled value of the trace time axis"},
                   {"preset", "start from a bundled preset"}});
    quench->add_flag("--trace", quench_trace, "time trace at the single grid rate");
    quench->add_flag("--large-delta", large_delta, "use delta_weak/omega = 4000");

    CLI::App* lz = app.add_subcommand("lz", "bias (Landau-Zener) sweep against the cascade formula");
    add_run_flags(lz, lz_o,
                  {{"window", "bias half-width in omega units"},
                   {"n_max", "cascade cut"},
                   {"trace_samples", "samples in a time trace"},
                   {"trace_from", "first sampled value of the trace time axis"},
                   {"preset", "start from a bundled preset"}});
    lz->add_flag("--trace", lz_trace, "time trace at the single grid rate");
    lz->add_flag("--formula-only", lz_formula, "cascade formula only, no simulation");

    CLI::App* multimode = app.add_subcommand("multimode", "multimode bias sweep vs sequential crossings");
    add_run_flags(multimode, multimode_o,
                  {{"modes", "omega,g,n_fock per mode, ';' separated"},
                   {"caps", "occupation caps per mode, ';' separated"},
                   {"window", "bias half-width in omega units"},
                   {"max_dimension", "simulate only up to this Hilbert-space dimension"},
                   {"preset", "start from a bundled preset"}});

    FormulaOptions formula_o;
    CLI::App* formula = app.add_subcommand("formula", "closed-form probabilities");
    formula->add_option("--g-over-omega", formula_o.g, "coupling g/omega")->required();
    formula->add_option("--n", formula_o.n, "fast-quench Poisson probability of n photons")->check(CLI::NonNegativeNumber);
    formula->add_option("--delta-over-omega", formula_o.delta, "qubit splitting delta/omega");
    formula->add_option("--v-over-delta2", formula_o.v_over_delta2, "cascade probabilities at this rate");
    formula->add_option("--n-max", formula_o.n_max, "cascade cut")->check(CLI::NonNegativeNumber);
    formula->add_option("--fock-prep", formula_o.fock_prep, "Fock-state preparation window for this n");

    SpectrumOptions spectrum_o;
    CLI::App* spectrum = app.add_subcommand("spectrum", "lowest eigenvalues of the static Hamiltonian");
    spectrum->add_option("--delta", spectrum_o.delta, "delta/omega");
    spectrum->add_option("--epsilon", spectrum_o.epsilon, "epsilon/omega");
    spectrum->add_option("--g-over-omega", spectrum_o.g, "coupling g/omega");
    spectrum->add_option("--n-fock", spectrum_o.n_fock, "Fock states")->check(CLI::PositiveNumber);
    spectrum->add_option("--levels", spectrum_o.levels, "levels to print");

    ConvergenceOptions conv_o;
    CLI::App* convergence = app.add_subcommand("convergence", "refinement study of single sweeps");
    add_run_flags(convergence, conv_o.run,
                  {{"preset", "bundled preset"},
                   {"kind", "experiment kind"},
                   {"direction", "quench direction ns or sn"},
                   {"delta_weak", "weak-coupling delta/omega"},
                   {"delta_strong", "strong-coupling delta/omega"},
                   {"window", "bias half-width"},
                   {"modes", "multimode modes"}});
    convergence->add_option("--knob", conv_o.knob, "n_steps, n_fock, endpoint_magnitude or all");
    convergence->add_option("--factor", conv_o.factor, "refinement factor");
    convergence->add_option("--point", conv_o.point, "single scan value (default: every grid point)");

    std::string preset_name;
    bool preset_list = false;
    CLI::App* presets_cmd = app.add_subcommand("presets", "list or run bundled presets");
    presets_cmd->add_option("preset", preset_name, "preset name, or 'all' for every non-opt-in preset");
    presets_cmd->add_flag("--list", preset_list, "list presets");
    add_run_flags(presets_cmd, presets_o,
                  {{"trace_samples", "samples in a time trace"}, {"max_dimension", "multimode simulation cap"}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return exit_ok;
        const auto parsed = app.get_subcommands();
        std::cerr << (parsed.empty() ? app.help() : parsed.front()->help());
        return exit_usage;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        if (active == quench) {
            if (large_delta) {
                require(!quench_o.flags.count("delta_weak"), ErrorKind::invalid_parameter,
                        "--large-delta conflicts with --delta-weak");
                quench_o.flags["delta_weak"] = "4000";
            }
            std::optional<ExperimentKind> kind = ExperimentKind::quench_ns;
            const io::ConfigMap keys = effective_keys(quench_o);
            if (keys.count("direction") && keys.at("direction") == "sn") kind = ExperimentKind::quench_sn;
            if (quench_trace) {
                kind = ExperimentKind::quench_trace;
                quench_o.flags["kind"] = to_string(*kind);
            }
            return run_single(quench_o, kind);
        }
        if (active == lz) {
            require(!(lz_trace && lz_formula), ErrorKind::invalid_parameter, "--trace and --formula-only conflict");
            ExperimentKind kind = lz_trace ? ExperimentKind::lz_trace
                                           : lz_formula ? ExperimentKind::lz_formula : ExperimentKind::lz_scan;
            if (lz_trace || lz_formula) lz_o.flags["kind"] = to_string(kind);
            return run_single(lz_o, kind);
        }
        if (active == multimode) return run_single(multimode_o, ExperimentKind::multimode_scan);
        if (active == formula) return run_formula(formula_o);
        if (active == spectrum) return run_spectrum(spectrum_o);
        if (active == convergence) return run_convergence(conv_o);
        if (active == presets_cmd) {
            if (preset_list || preset_name.empty()) return list_presets();
            return run_presets(preset_name, presets_o);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.is_validation()) {
            std::cerr << active->help();
            return exit_usage;
        }
        return exit_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
    return exit_usage;
}
