#pragma once

// Serialization: CSV result tables, run manifests, key=value configs and SVG plots.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "qrsweep/errors.hpp"
#include "qrsweep/experiments.hpp"

namespace qrsweep::io {

namespace fs = std::filesystem;

inline constexpr const char* csv_header =
    "scan_value,label_scheme,qubit_label,n,probability,oracle_probability,abs_dev,converged";

inline std::string fmt(double x) { return detail::fmt(x); }

// ---------------------------------------------------------------------------
// Files and checksums

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

inline void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create directory " + dir.string());
}

inline std::string sha256_hex(const std::string& data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    require(EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) == 1, ErrorKind::io,
            "sha256 failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used > 0 && used == s.size(), ErrorKind::invalid_parameter, what + ": '" + s + "' is not a number");
    return x;
}

inline long long parse_int(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used > 0 && used == s.size(), ErrorKind::invalid_parameter, what + ": '" + s + "' is not an integer");
    return x;
}

inline std::vector<int> parse_photons(const std::string& s) {
    std::vector<int> out;
    for (const std::string& part : split(s, ';')) out.push_back(static_cast<int>(parse_int(part, "photon number")));
    return out;
}

}  // namespace detail

/// One line per (scan value, label); a row without probabilities is a single line with empty label fields.
inline std::string format_csv(const ResultTable& table) {
    std::string out = std::string(csv_header) + "\n";
    for (const ResultRow& r : table.rows) {
        std::map<BasisLabel, std::pair<std::optional<double>, std::optional<double>>> lines;
        if (r.simulated)
            for (const auto& p : *r.simulated) lines[p.label].first = p.probability;
        if (r.oracle)
            for (const auto& p : *r.oracle) lines[p.label].second = p.probability;
        const std::string x = fmt(r.scan_value);
        const std::string verdict = to_string(r.verdict);
        if (lines.empty()) {
            out += x + ",,,,,,," + verdict + "\n";
            continue;
        }
        for (const auto& [label, pq] : lines) {
            const auto& [sim, orc] = pq;
            out += x + "," + to_string(label.scheme) + "," + to_string(label.qubit) + "," + label.photons_string() + ",";
            out += (sim ? fmt(*sim) : "") + "," + (orc ? fmt(*orc) : "") + ",";
            out += (sim && orc ? fmt(std::abs(*sim - *orc)) : "") + "," + verdict + "\n";
        }
    }
    return out;
}

/// Inverse of format_csv.  A `false` verdict on a row without data reads back as failed.
inline std::vector<ResultRow> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && detail::trim(line) == csv_header, ErrorKind::invalid_parameter,
            "CSV header mismatch");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    bool open = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        const std::string where = "CSV line " + std::to_string(line_no);
        require(f.size() == 8, ErrorKind::invalid_parameter, where + ": expected 8 fields");
        const double x = detail::parse_double(f[0], where);
        Verdict verdict;
        if (f[7] == "true") verdict = Verdict::converged;
        else if (f[7] == "false") verdict = Verdict::not_converged;
        else if (f[7] == "unchecked") verdict = Verdict::unchecked;
        else throw Error(ErrorKind::invalid_parameter, where + ": bad converged value '" + f[7] + "'");

        if (f[1].empty()) {
            ResultRow r;
            r.scan_value = x;
            r.verdict = verdict == Verdict::not_converged ? Verdict::failed : verdict;
            rows.push_back(r);
            open = false;
            continue;
        }
        if (!open || rows.back().scan_value != x) {
            ResultRow r;
            r.scan_value = x;
            r.verdict = verdict;
            rows.push_back(r);
            open = true;
        }
        const auto scheme = scheme_from_string(f[1]);
        const auto qubit = qubit_label_from_string(f[2]);
        require(scheme && qubit, ErrorKind::invalid_parameter, where + ": unknown label");
        const BasisLabel label{*scheme, *qubit, detail::parse_photons(f[3])};
        ResultRow& r = rows.back();
        if (!f[4].empty()) {
            if (!r.simulated) r.simulated.emplace();
            r.simulated->push_back({label, detail::parse_double(f[4], where), false});
        }
        if (!f[5].empty()) {
            if (!r.oracle) r.oracle.emplace();
            r.oracle->push_back({label, detail::parse_double(f[5], where), false});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// SVG

struct SvgResult {
    std::optional<fs::path> path;
    std::string warning;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline const std::array<const char*, 10>& palette() {
    static const std::array<const char*, 10> c = {"#d62728", "#2ca02c", "#1f77b4", "#e377c2", "#17becf",
                                                  "#ff7f0e", "#808000", "#9467bd", "#8c564b", "#7f7f7f"};
    return c;
}

/// Labels plotted when none are requested: the ones with the largest peak probability.
inline std::vector<BasisLabel> default_plot_labels(const ResultTable& t, std::size_t count = 6) {
    std::map<BasisLabel, double> peak;
    for (const ResultRow& r : t.rows)
        for (const auto* side : {&r.simulated, &r.oracle})
            if (*side)
                for (const auto& p : **side) peak[p.label] = std::max(peak[p.label], p.probability);
    std::vector<std::pair<double, BasisLabel>> order;
    for (const auto& [l, v] : peak) order.push_back({-v, l});
    std::sort(order.begin(), order.end());
    std::vector<BasisLabel> out;
    for (std::size_t i = 0; i < order.size() && i < count; ++i) out.push_back(order[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Decade-aligned axis bounds enclosing [lo, hi], lo > 0.
inline std::pair<double, double> decade_bounds(double lo, double hi) {
    double a = std::floor(std::log10(lo) + 1e-12);
    double b = std::ceil(std::log10(hi) - 1e-12);
    if (b <= a) b = a + 1.0;
    return {std::pow(10.0, a), std::pow(10.0, b)};
}

/// Simulated probability where present, oracle otherwise.
inline std::optional<double> plotted_value(const ResultRow& r, const BasisLabel& l) {
    if (r.simulated)
        for (const auto& p : *r.simulated)
            if (p.label == l) return p.probability;
    if (r.oracle)
        for (const auto& p : *r.oracle)
            if (p.label == l) return p.probability;
    return std::nullopt;
}

/// Probability curves against the scan variable.  The x axis is logarithmic with decade
/// bounds; trace tables, whose time axis crosses zero, fall back to a linear axis.
inline std::string render_svg(const ResultTable& table, const std::vector<BasisLabel>& requested) {
    const std::vector<BasisLabel> labels = requested.empty() ? detail::default_plot_labels(table) : requested;
    double lo = table.rows.front().scan_value, hi = lo;
    for (const ResultRow& r : table.rows) {
        lo = std::min(lo, r.scan_value);
        hi = std::max(hi, r.scan_value);
    }
    const bool log_x = lo > 0.0;
    double x0 = lo, x1 = hi;
    if (log_x) std::tie(x0, x1) = decade_bounds(lo, hi);

    const double W = 720, H = 440, L = 70, R = 220, T = 30, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    auto sx = [&](double x) {
        const double f = log_x ? (std::log10(x) - std::log10(x0)) / (std::log10(x1) - std::log10(x0)) : (x - x0) / (x1 - x0);
        return L + f * pw;
    };
    auto sy = [&](double y) { return T + (1.0 - std::clamp(y, 0.0, 1.0)) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<title>" << detail::xml_escape(table.name) << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    // x ticks
    if (log_x) {
        for (int e = static_cast<int>(std::lround(std::log10(x0))); e <= static_cast<int>(std::lround(std::log10(x1))); ++e) {
            const double px = sx(std::pow(10.0, e));
            o << "<line x1=\"" << detail::num(px) << "\" y1=\"" << T + ph << "\" x2=\"" << detail::num(px) << "\" y2=\""
              << T + ph + 5 << "\" stroke=\"black\"/>\n"
              << "<text x=\"" << detail::num(px) << "\" y=\"" << T + ph + 20 << "\" text-anchor=\"middle\">1e" << e
              << "</text>\n";
        }
    } else {
        for (int k = 0; k <= 4; ++k) {
            const double x = x0 + (x1 - x0) * k / 4.0;
            const double px = sx(x);
            o << "<line x1=\"" << detail::num(px) << "\" y1=\"" << T + ph << "\" x2=\"" << detail::num(px) << "\" y2=\""
              << T + ph + 5 << "\" stroke=\"black\"/>\n"
              << "<text x=\"" << detail::num(px) << "\" y=\"" << T + ph + 20 << "\" text-anchor=\"middle\">"
              << detail::xml_escape(fmt(x)) << "</text>\n";
        }
    }
    // y ticks
    for (int k = 0; k <= 4; ++k) {
        const double y = k / 4.0;
        o << "<line x1=\"" << L - 5 << "\" y1=\"" << detail::num(sy(y)) << "\" x2=\"" << L << "\" y2=\""
          << detail::num(sy(y)) << "\" stroke=\"black\"/>\n"
          << "<text x=\"" << L - 8 << "\" y=\"" << detail::num(sy(y) + 4) << "\" text-anchor=\"end\">" << fmt(y)
          << "</text>\n";
    }
    o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(table.scan_variable) << "</text>\n"
      << "<text x=\"20\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << T + ph / 2
      << ")\">probability</text>\n";

    for (std::size_t i = 0; i < labels.size(); ++i) {
        const char* colour = detail::palette()[i % detail::palette().size()];
        std::string pts;
        for (const ResultRow& r : table.rows) {
            const auto y = plotted_value(r, labels[i]);
            if (!y) continue;
            pts += (pts.empty() ? "" : " ") + detail::num(sx(r.scan_value)) + "," + detail::num(sy(*y));
        }
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
        const double ly = T + 10 + 18.0 * static_cast<double>(i);
        o << "<line x1=\"" << L + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 40 << "\" y2=\"" << ly
          << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << L + pw + 45 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(labels[i].to_string())
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline SvgResult emit_svg(const ResultTable& table, const std::vector<BasisLabel>& labels, const fs::path& dir) {
    std::set<double> xs;
    for (const ResultRow& r : table.rows) xs.insert(r.scan_value);
    if (xs.size() < 2) return {std::nullopt, "skipping SVG for " + table.name + ": fewer than two scan points"};
    ensure_directory(dir);
    const fs::path path = dir / (table.name + ".svg");
    write_file(path, render_svg(table, labels));
    return {path, ""};
}

// ---------------------------------------------------------------------------
// Config: flat key=value text

using ConfigMap = std::map<std::string, std::string>;

/// Lines of `key = value`; '#' starts a comment.
inline ConfigMap parse_config(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::invalid_parameter,
                "config line " + std::to_string(no) + ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        require(!key.empty(), ErrorKind::invalid_parameter, "config line " + std::to_string(no) + ": empty key");
        require(!out.count(key), ErrorKind::invalid_parameter, "config key '" + key + "' given twice");
        out[key] = detail::trim(line.substr(eq + 1));
    }
    return out;
}

inline ConfigMap load_config(const fs::path& path) { return parse_config(read_file(path)); }

/// Later maps override earlier ones.
inline ConfigMap merge(ConfigMap base, const ConfigMap& over) {
    for (const auto& [k, v] : over) base[k] = v;
    return base;
}

struct RunConfig {
    std::string name;
    ExperimentSpec experiment;
    fs::path output_dir = "out";
    bool emit_svg = true;
    ConfigMap echo;  // the effective key=value set
};

namespace detail {

inline bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw Error(ErrorKind::invalid_parameter, key + ": '" + s + "' is not a boolean");
}

/// `lo:hi[:points_per_decade]` for a log grid, or a comma-separated list.
inline std::vector<double> parse_grid(const std::string& s) {
    if (s.find(':') != std::string::npos) {
        const auto f = split(s, ':');
        require(f.size() == 2 || f.size() == 3, ErrorKind::invalid_parameter, "grid: expected lo:hi[:per_decade]");
        const double lo = parse_double(f[0], "grid"), hi = parse_double(f[1], "grid");
        const long long per = f.size() == 3 ? parse_int(f[2], "grid") : 25;
        require(std::isfinite(lo) && std::isfinite(hi) && lo > 0.0 && hi >= lo && per > 0,
                ErrorKind::invalid_parameter, "grid: need 0 < lo <= hi and per_decade > 0");
        if (hi == lo) return {lo};
        return log_grid(lo, hi, static_cast<int>(per));
    }
    std::vector<double> g;
    for (const std::string& part : split(s, ',')) g.push_back(parse_double(trim(part), "grid"));
    return g;
}

/// `scheme(qubit,n)` or `scheme(qubit,n1;n2)`, whitespace separated.
inline std::vector<BasisLabel> parse_labels(const std::string& s) {
    std::vector<BasisLabel> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
        const auto open = tok.find('('), comma = tok.find(','), close = tok.find(')');
        require(open != std::string::npos && comma != std::string::npos && close == tok.size() - 1 && open < comma,
                ErrorKind::invalid_parameter, "label '" + tok + "': expected scheme(qubit,n)");
        const auto scheme = scheme_from_string(tok.substr(0, open));
        const auto qubit = qubit_label_from_string(tok.substr(open + 1, comma - open - 1));
        require(scheme && qubit, ErrorKind::invalid_parameter, "label '" + tok + "': unknown scheme or qubit label");
        BasisLabel l{*scheme, *qubit, parse_photons(tok.substr(comma + 1, close - comma - 1))};
        require(l.valid(), ErrorKind::invalid_parameter, "label '" + tok + "' is not valid for its scheme");
        out.push_back(l);
    }
    return out;
}

/// `omega,g,n_fock;omega,g,n_fock;...`
inline std::vector<Mode> parse_modes(const std::string& s) {
    std::vector<Mode> out;
    for (const std::string& part : split(s, ';')) {
        const auto f = split(trim(part), ',');
        require(f.size() == 3, ErrorKind::invalid_parameter, "modes: expected omega,g,n_fock per mode");
        out.push_back(Mode{parse_double(f[0], "mode omega"), parse_double(f[1], "mode g"),
                           static_cast<Index>(parse_int(f[2], "mode n_fock"))});
    }
    return out;
}

inline double finite(const std::string& s, const std::string& key) {
    const double x = parse_double(s, key);
    require(std::isfinite(x), ErrorKind::invalid_parameter, key + " must be finite");
    return x;
}

inline long long non_negative(const std::string& s, const std::string& key) {
    const long long x = parse_int(s, key);
    require(x >= 0, ErrorKind::invalid_parameter, key + " must be non-negative");
    return x;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> k = {
        "preset",         "kind",          "name",         "output_dir",        "emit_svg",
        "g_over_omega",   "delta_over_omega", "epsilon_over_omega", "n_fock", "modes",
        "grid",           "direction",     "delta_weak",   "delta_strong",      "window",
        "n_max",          "caps",          "n_steps",      "trace_samples",     "trace_from",
        "check_convergence", "tolerance",  "max_dimension", "workers",          "max_point_seconds",
        "labels"};
    return k;
}

/// Builds and validates a run from flat keys.  A `preset` key supplies defaults that the other keys
/// override; without one, `kind` is required.  Frequencies are ratios to omega.
inline RunConfig run_config_from(const ConfigMap& keys) {
    for (const auto& [k, v] : keys)
        require(std::find(config_keys().begin(), config_keys().end(), k) != config_keys().end(),
                ErrorKind::invalid_parameter, "unknown config key '" + k + "'");
    auto get = [&](const std::string& k) -> std::optional<std::string> {
        const auto it = keys.find(k);
        if (it == keys.end()) return std::nullopt;
        return it->second;
    };

    RunConfig c;
    ExperimentSpec& s = c.experiment;
    if (const auto p = get("preset")) {
        const Preset& preset = find_preset(*p);
        s = preset.spec;
        c.name = preset.name;
    } else {
        const auto k = get("kind");
        require(k.has_value(), ErrorKind::invalid_parameter, "either preset or kind is required");
        const auto kind = experiment_kind_from_string(*k);
        require(kind.has_value(), ErrorKind::invalid_parameter, "unknown experiment kind '" + *k + "'");
        s.kind = *kind;
        c.name = *k;
        if (s.kind == ExperimentKind::multimode_scan) s.physics = multimode_preset_params();
    }
    if (const auto k = get("kind")) {
        const auto kind = experiment_kind_from_string(*k);
        require(kind.has_value(), ErrorKind::invalid_parameter, "unknown experiment kind '" + *k + "'");
        if (*kind != s.kind) {
            const bool was_multi = s.multimode();
            s.kind = *kind;
            if (s.kind == ExperimentKind::multimode_scan && !was_multi) s.physics = multimode_preset_params();
            if (s.kind != ExperimentKind::multimode_scan && was_multi) s.physics = QrmParams{};
        }
    }
    if (const auto v = get("name")) c.name = *v;
    require(!c.name.empty() && c.name.find_first_of("/\\") == std::string::npos, ErrorKind::invalid_parameter,
            "name must be a plain file stem");
    if (const auto v = get("output_dir")) c.output_dir = *v;
    if (const auto v = get("emit_svg")) c.emit_svg = detail::parse_bool(*v, "emit_svg");

    if (s.multimode()) {
        MultiModeParams m = std::get<MultiModeParams>(s.physics);
        if (const auto v = get("delta_over_omega")) m.delta = detail::finite(*v, "delta_over_omega");
        if (const auto v = get("modes")) m.modes = detail::parse_modes(*v);
        require(!get("g_over_omega") && !get("n_fock") && !get("epsilon_over_omega"), ErrorKind::invalid_parameter,
                "multimode runs take 'modes' instead of g_over_omega/n_fock/epsilon_over_omega");
        s.physics = m;
    } else {
        require(!get("modes"), ErrorKind::invalid_parameter, "'modes' applies to multimode_scan only");
        QrmParams p = s.qrm();
        p.omega = 1.0;
        if (const auto v = get("g_over_omega")) {
            p.g = detail::finite(*v, "g_over_omega");
            if (!get("preset") && !get("n_fock")) p.n_fock = default_n_fock(p.g);
        }
        if (const auto v = get("delta_over_omega")) p.delta = detail::finite(*v, "delta_over_omega");
        if (const auto v = get("epsilon_over_omega")) p.epsilon = detail::finite(*v, "epsilon_over_omega");
        if (const auto v = get("n_fock")) p.n_fock = static_cast<Index>(detail::non_negative(*v, "n_fock"));
        s.physics = p;
    }
    if (const auto v = get("grid")) s.grid = detail::parse_grid(*v);
    if (const auto v = get("direction")) {
        require(*v == "ns" || *v == "sn", ErrorKind::invalid_parameter, "direction must be ns or sn");
        s.direction = *v == "ns" ? QuenchDirection::ns : QuenchDirection::sn;
        if (s.kind == ExperimentKind::quench_ns || s.kind == ExperimentKind::quench_sn)
            s.kind = s.direction == QuenchDirection::ns ? ExperimentKind::quench_ns : ExperimentKind::quench_sn;
    }
    if (const auto v = get("delta_weak")) s.delta_weak = detail::finite(*v, "delta_weak");
    if (const auto v = get("delta_strong")) s.delta_strong = detail::finite(*v, "delta_strong");
    if (const auto v = get("window")) s.window = detail::finite(*v, "window");
    if (const auto v = get("n_max")) s.n_max = static_cast<int>(detail::non_negative(*v, "n_max"));
    if (const auto v = get("caps")) {
        s.caps.clear();
        for (const std::string& part : detail::split(*v, ';'))
            s.caps.push_back(static_cast<int>(detail::non_negative(detail::trim(part), "caps")));
    }
    if (const auto v = get("n_steps")) s.n_steps = static_cast<std::size_t>(detail::non_negative(*v, "n_steps"));
    if (const auto v = get("trace_samples"))
        s.trace_samples = static_cast<std::size_t>(detail::non_negative(*v, "trace_samples"));
    if (const auto v = get("trace_from")) s.trace_from = detail::finite(*v, "trace_from");
    if (const auto v = get("check_convergence")) s.check_convergence = detail::parse_bool(*v, "check_convergence");
    if (const auto v = get("tolerance")) s.tolerance = detail::finite(*v, "tolerance");
    if (const auto v = get("max_dimension"))
        s.max_dimension = static_cast<Index>(detail::non_negative(*v, "max_dimension"));
    if (const auto v = get("workers")) s.workers = static_cast<unsigned>(detail::non_negative(*v, "workers"));
    if (const auto v = get("max_point_seconds")) s.max_point_seconds = detail::finite(*v, "max_point_seconds");
    if (const auto v = get("labels")) s.labels = detail::parse_labels(*v);

    s.validate();
    c.echo = keys;
    return c;
}

// ---------------------------------------------------------------------------
// Run output

struct WrittenTable {
    ResultTable table;
    fs::path csv;
    std::string sha256;
    std::optional<fs::path> svg;
};

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::ordered_json manifest_json(const std::vector<WrittenTable>& tables, const ConfigMap& config) {
    nlohmann::ordered_json j;
    j["tool"] = "qrsweep";
    j["version"] = version;
    j["created_utc"] = utc_timestamp();
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) j["config"][k] = v;
    j["experiments"] = nlohmann::ordered_json::array();
    for (const WrittenTable& w : tables) {
        nlohmann::ordered_json e;
        e["name"] = w.table.name;
        e["kind"] = to_string(w.table.spec.kind);
        e["csv"] = w.csv.filename().string();
        e["sha256"] = w.sha256;
        if (w.svg) e["svg"] = w.svg->filename().string();
        e["scan_variable"] = w.table.scan_variable;
        e["all_converged"] = w.table.all_converged();
        e["failures"] = w.table.failures();
        e["max_norm_drift"] = w.table.max_norm_drift();
        e["metadata"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : w.table.metadata) e["metadata"][k] = v;
        e["points"] = nlohmann::ordered_json::array();
        for (const ResultRow& r : w.table.rows) {
            nlohmann::ordered_json p;
            p["scan_value"] = r.scan_value;
            p["converged"] = to_string(r.verdict);
            p["verdict"] = r.verdict == Verdict::failed ? "failed"
                           : r.verdict == Verdict::not_converged ? "not-converged"
                           : r.verdict == Verdict::converged ? "converged"
                                                             : "unchecked";
            p["wall_seconds"] = r.wall_seconds;
            p["norm_drift"] = r.norm_drift;
            if (r.leakage) p["leakage"] = *r.leakage;
            p["truncation_tail"] = r.truncation_tail;
            if (!r.note.empty()) p["note"] = r.note;
            e["points"].push_back(p);
        }
        j["experiments"].push_back(e);
    }
    return j;
}

/// Writes one CSV (and optionally one SVG) per table plus a single manifest.json in `dir`.
inline std::vector<WrittenTable> write_run(const std::vector<ResultTable>& tables, const fs::path& dir,
                                           const ConfigMap& config, bool svg,
                                           std::vector<std::string>* warnings = nullptr) {
    ensure_directory(dir);
    std::vector<WrittenTable> out;
    for (const ResultTable& t : tables) {
        WrittenTable w{t, dir / ((t.name.empty() ? to_string(t.spec.kind) : t.name) + ".csv"), "", std::nullopt};
        if (w.table.name.empty()) w.table.name = to_string(t.spec.kind);
        const std::string csv = format_csv(t);
        write_file(w.csv, csv);
        w.sha256 = sha256_hex(csv);
        if (svg) {
            const SvgResult r = emit_svg(w.table, t.spec.labels, dir);
            w.svg = r.path;
            if (!r.warning.empty() && warnings) warnings->push_back(r.warning);
        }
        out.push_back(std::move(w));
    }
    write_file(dir / "manifest.json", manifest_json(out, config).dump(2) + "\n");
    return out;
}

inline std::vector<fs::path> write_result_table(const ResultTable& table, const fs::path& dir,
                                                const ConfigMap& config = {}) {
    const auto w = write_run({table}, dir, config, false);
    return {w.front().csv, dir / "manifest.json"};
}

}  // namespace qrsweep::io
