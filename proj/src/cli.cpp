#include "mwb/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mwb/bessel.hpp"
#include "mwb/billiard.hpp"
#include "mwb/constants.hpp"
#include "mwb/errors.hpp"
#include "mwb/io.hpp"
#include "mwb/resonance.hpp"
#include "mwb/rmt.hpp"
#include "mwb/spectral_stats.hpp"

namespace mwb::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kEmptySectorBandLow = 0.3e9;
constexpr double kEmptySectorBandHigh = 4.6e9;
constexpr double kScattererBandHigh = 7.0e9;
constexpr std::size_t kMinStatsLevels = 50;

std::string joined_args(const std::vector<std::string>& args) {
    std::string s;
    for (const auto& a : args) s += a + "\n";
    return s;
}

json warnings_json(const std::vector<std::string>& w) { return json(w); }

void write_json(const fs::path& path, const json& j, std::vector<fs::path>& outputs) {
    io::write_text(path, j.dump(2) + "\n");
    outputs.push_back(path);
}

void finish(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
            std::vector<fs::path> inputs, std::vector<fs::path> outputs, const std::string& started) {
    io::RunManifest m;
    m.command = command;
    m.config_text = joined_args(args);
    for (const auto& p : inputs) {
        if (fs::is_regular_file(p)) {
            m.inputs.push_back(p);
        }
    }
    m.outputs = std::move(outputs);
    m.started = started;
    m.finished = io::utc_timestamp();
    io::write_manifest(dir / ("manifest_" + command + ".json"), m);
}

bool has_scatterers(const io::GeometryConfig& g) { return !g.disks.empty() || g.point.has_value(); }

// ---------------------------------------------------------------- eigen

struct EigenArgs {
    std::string geometry;
    std::optional<double> f_max;
    std::optional<double> k_max;
    std::optional<double> coupling;
    std::optional<std::string> out;
};

int cmd_eigen(const EigenArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const std::string started = io::utc_timestamp();
    io::GeometryConfig g = io::read_geometry(a.geometry);
    if (a.coupling) {
        if (!g.point) {
            if (g.disks.size() != 1) throw ConfigError("--coupling needs a geometry with exactly one scatterer");
            g.point = io::PointScatterer{g.disks[0].x, g.disks[0].y, *a.coupling};
        } else {
            g.point->coupling = *a.coupling;
        }
    }
    if (a.f_max && a.k_max) throw ConfigError("give --f-max or --k-max, not both");
    double k_max = a.k_max.value_or(frequency_to_wavevector(
        a.f_max.value_or(has_scatterers(g) ? kScattererBandHigh : kEmptySectorBandHigh)));
    if (!(k_max > 0.0)) throw ConfigError("the upper limit must be positive");

    const fs::path dir = io::resolve_output_dir(a.out);
    std::vector<fs::path> outputs;
    const WavevectorSpectrum sector = sector_eigenvalues(g.sector, k_max);
    const fs::path sector_path = dir / "sector_spectrum.txt";
    io::write_spectrum(sector_path, sector, "sector R=" + io::format_double(g.sector.radius()) +
                                                " m theta=" + io::format_double(g.sector.opening_angle()) + " rad");
    outputs.push_back(sector_path);
    out << "sector: " << sector.size() << " levels up to " << wavevector_to_frequency(k_max) / 1e9 << " GHz -> "
        << sector_path.string() << "\n";
    if (sector.empty()) err << "warning: no eigenfrequencies below the upper limit\n";

    if (g.point) {
        const WavevectorSpectrum perturbed =
            sector_with_point_scatterer(g.sector, g.point->x, g.point->y, g.point->coupling, k_max);
        const fs::path p = dir / "point_spectrum.txt";
        io::write_spectrum(p, perturbed, "point scatterer at (" + io::format_double(g.point->x) + ", " +
                                             io::format_double(g.point->y) + ") m coupling " +
                                             io::format_double(g.point->coupling));
        outputs.push_back(p);
        out << "point scatterer: " << perturbed.size() << " levels -> " << p.string() << "\n";
    }
    finish(dir, "eigen", args, {a.geometry}, outputs, started);
    return kExitOk;
}

// ---------------------------------------------------------------- shared Weyl handling

struct WeylArgs {
    std::optional<std::string> geometry;
    std::optional<double> area;
    std::optional<double> perimeter;
    std::optional<double> constant;
    bool corner = false;
    std::optional<double> f_min;
    std::optional<double> f_max;
};

struct WeylSetup {
    double area = 0.0;
    double perimeter = 0.0;
    double k_min = 0.0;
    double k_max = std::numeric_limits<double>::infinity();
    std::optional<SectorGeometry> sector;
};

WeylSetup weyl_setup(const WeylArgs& w) {
    WeylSetup s;
    double f_lo = 0.0;
    double f_hi = std::numeric_limits<double>::infinity();
    if (w.geometry) {
        const auto g = io::read_geometry(*w.geometry);
        s.area = g.sector.area();
        s.perimeter = g.sector.perimeter();
        s.sector = g.sector;
        f_lo = has_scatterers(g) ? 0.0 : kEmptySectorBandLow;
        f_hi = has_scatterers(g) ? kScattererBandHigh : kEmptySectorBandHigh;
    }
    if (w.area) s.area = *w.area;
    if (w.perimeter) s.perimeter = *w.perimeter;
    if (!(s.area > 0.0) || !(s.perimeter > 0.0)) {
        throw ConfigError("Weyl parameters need --geometry or both --area and --perimeter");
    }
    if (w.corner && !s.sector) throw ConfigError("--corner needs --geometry");
    if (w.corner && w.constant) throw ConfigError("give --weyl-constant or --corner, not both");
    if (w.f_min) f_lo = *w.f_min;
    if (w.f_max) f_hi = *w.f_max;
    if (!(f_hi > f_lo)) throw ConfigError("empty frequency band");
    s.k_min = frequency_to_wavevector(f_lo);
    s.k_max = std::isfinite(f_hi) ? frequency_to_wavevector(f_hi) : f_hi;
    return s;
}

WavevectorSpectrum band_filter(const WavevectorSpectrum& s, const WeylSetup& w) {
    WavevectorSpectrum out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.values[i] >= w.k_min && s.values[i] <= w.k_max) {
            out.values.push_back(s.values[i]);
            if (s.labelled()) out.labels.push_back(s.labels[i]);
        }
    }
    return out;
}

WeylParams weyl_params(const WeylArgs& a, const WeylSetup& w, std::span<const double> k, std::string& mode) {
    WeylParams p{w.area, w.perimeter, 0.0};
    if (a.constant) {
        p.constant = *a.constant;
        mode = "fixed";
    } else if (a.corner) {
        p.constant = sector_corner_constant(*w.sector);
        mode = "corner";
    } else {
        p.constant = fit_weyl_constant(k, w.area, w.perimeter);
        mode = "fit";
    }
    return p;
}

void add_weyl_options(CLI::App* app, WeylArgs& w) {
    app->add_option("--geometry", w.geometry, "Geometry file supplying area and perimeter")->check(CLI::ExistingFile);
    app->add_option("--area", w.area, "Billiard area (m^2)");
    app->add_option("--perimeter", w.perimeter, "Billiard perimeter (m)");
    app->add_option("--weyl-constant", w.constant, "Fixed Weyl constant C (default: fitted)");
    app->add_flag("--corner", w.corner, "Use the sector corner formula for C");
    app->add_option("--f-min", w.f_min, "Lower band edge (Hz)");
    app->add_option("--f-max", w.f_max, "Upper band edge (Hz)");
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
    std::vector<std::string> spectra;
    std::vector<std::string> unfolded;
    std::optional<std::string> generate;
    std::size_t levels = 10000;
    std::size_t sequences = 1;
    std::uint64_t seed = 1;
    double bin = 0.1;
    WeylArgs weyl;
    std::optional<std::string> out;
};

std::vector<double> read_levels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<double> v;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        double x = 0.0;
        if (!(ls >> x)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            throw DataError(path.string() + ":" + std::to_string(n) + ": expected a level value");
        }
        if (!v.empty() && !(x > v.back())) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": levels must be strictly ascending");
        }
        v.push_back(x);
    }
    return v;
}

void write_references(const fs::path& path, Statistic stat, std::span<const double> grid) {
    std::string text = "x,poisson,goe,semi_poisson\n";
    for (double x : grid) {
        text += io::format_double(x);
        for (Model m : {Model::poisson, Model::goe, Model::semi_poisson}) {
            text += "," + io::format_double(reference_value(m, stat, x));
        }
        text += "\n";
    }
    io::write_text(path, text);
}

int cmd_stats(const StatsArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    const std::string started = io::utc_timestamp();
    const int sources = (a.spectra.empty() ? 0 : 1) + (a.unfolded.empty() ? 0 : 1) + (a.generate ? 1 : 0);
    if (sources != 1) throw ConfigError("give exactly one of --spectrum, --unfolded, --generate");
    if (!(a.bin > 0.0)) throw ConfigError("--bin must be positive");

    UnfoldedSpectrum u;
    json weyl_json = nullptr;
    std::vector<fs::path> inputs;
    if (a.generate) {
        const Model model = parse_model(*a.generate);
        if (a.sequences < 1) throw ConfigError("--sequences must be >= 1");
        for (std::size_t s = 0; s < a.sequences; ++s) {
            auto g = generate_reference_sequence(model, a.levels, realization_seed(a.seed, s));
            u.sequences.push_back(std::move(g.sequences.front()));
        }
        u.provenance = "generated " + std::string(to_string(model));
    } else if (!a.unfolded.empty()) {
        for (const auto& f : a.unfolded) {
            u.sequences.push_back(read_levels(f));
            inputs.emplace_back(f);
        }
        u.provenance = "unfolded input";
    } else {
        const WeylSetup w = weyl_setup(a.weyl);
        std::vector<WavevectorSpectrum> spectra;
        std::vector<double> pooled;
        for (const auto& f : a.spectra) {
            spectra.push_back(band_filter(io::read_spectrum(f), w));
            inputs.emplace_back(f);
        }
        std::string mode;
        // One Weyl constant per file when fitted.
        for (std::size_t i = 0; i < spectra.size(); ++i) {
            if (spectra[i].size() < 2) throw DataError(a.spectra[i] + ": fewer than 2 levels in the band");
            const WeylParams p = weyl_params(a.weyl, w, spectra[i].values, mode);
            auto part = unfold(spectra[i], p);
            u.sequences.push_back(std::move(part.sequences.front()));
            weyl_json = json{{"area", p.area}, {"perimeter", p.perimeter}, {"constant", p.constant}, {"constant_mode", mode}};
        }
        u.provenance = "unfolded spectrum";
    }
    if (u.level_count() < kMinStatsLevels) {
        throw DataError("statistics need at least " + std::to_string(kMinStatsLevels) + " levels, got " +
                        std::to_string(u.level_count()));
    }

    const fs::path dir = io::resolve_output_dir(a.out);
    std::vector<fs::path> outputs;
    std::vector<std::string> warnings;
    auto emit = [&](const std::string& name, const StatCurve& c, const std::string& y) {
        const fs::path p = dir / (name + ".csv");
        io::write_curve(p, c, name == "spacing_density" || name == "spacing_cumulative" ? "s" : "L", y);
        outputs.push_back(p);
        warnings.insert(warnings.end(), c.warnings.begin(), c.warnings.end());
    };
    const StatCurve density = spacing_distribution(u, a.bin);
    const StatCurve cumulative = cumulative_spacing(u);
    emit("spacing_density", density, "P");
    emit("spacing_cumulative", cumulative, "I");

    // Long-range statistics on the default grid, trimmed to what the shortest sequence supports.
    double limit = std::numeric_limits<double>::infinity();
    for (const auto& s : u.sequences) {
        limit = std::min({limit, static_cast<double>(s.size()) / 2.0, s.back() - s.front()});
    }
    std::vector<double> lengths;
    for (double L : default_length_grid()) {
        if (L <= limit) lengths.push_back(L);
    }
    if (lengths.size() < default_length_grid().size()) {
        warnings.push_back("number variance and Delta3 limited to L <= " + io::format_double(lengths.empty() ? 0.0 : lengths.back()));
    }
    if (!lengths.empty()) {
        emit("number_variance", number_variance(u, lengths), "Sigma2");
        emit("delta3", dyson_mehta(u, lengths), "Delta3");
    }
    std::vector<double> s_grid;
    for (int i = 0; i <= 400; ++i) s_grid.push_back(0.01 * i);
    for (auto [stat, name] : {std::pair{Statistic::spacing_density, "spacing_density"},
                              std::pair{Statistic::spacing_cumulative, "spacing_cumulative"}}) {
        const fs::path p = dir / ("reference_" + std::string(name) + ".csv");
        write_references(p, stat, s_grid);
        outputs.push_back(p);
    }
    if (!lengths.empty()) {
        for (auto [stat, name] : {std::pair{Statistic::number_variance, "number_variance"},
                                  std::pair{Statistic::delta3, "delta3"}}) {
            const fs::path p = dir / ("reference_" + std::string(name) + ".csv");
            write_references(p, stat, lengths);
            outputs.push_back(p);
        }
    }

    const SpacingSummary sum = summarize_spacings(u);
    const json summary{{"provenance", u.provenance},
                       {"levels", u.level_count()},
                       {"sequences", u.sequences.size()},
                       {"weyl", weyl_json},
                       {"spacing", {{"count", sum.count}, {"mean", sum.mean}, {"variance", sum.variance}}},
                       {"ks", {{"poisson", sum.ks_poisson}, {"goe", sum.ks_goe}, {"semi_poisson", sum.ks_semi_poisson}}},
                       {"closest", std::string(to_string(sum.closest()))},
                       {"warnings", warnings_json(warnings)}};
    write_json(dir / "stats_summary.json", summary, outputs);
    out << "levels " << u.level_count() << ", KS poisson " << sum.ks_poisson << ", goe " << sum.ks_goe
        << ", semi-poisson " << sum.ks_semi_poisson << " -> closest " << to_string(sum.closest()) << "\n";
    finish(dir, "stats", args, inputs, outputs, started);
    return kExitOk;
}

// ---------------------------------------------------------------- missing

struct MissingArgs {
    std::string spectrum;
    std::size_t window = 20;
    WeylArgs weyl;
    std::optional<std::string> out;
};

int cmd_missing(const MissingArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    const std::string started = io::utc_timestamp();
    const WeylSetup w = weyl_setup(a.weyl);
    const WavevectorSpectrum s = band_filter(io::read_spectrum(a.spectrum), w);
    if (s.size() < 3 * a.window) {
        throw DataError("missing-level scan needs at least " + std::to_string(3 * a.window) + " levels");
    }
    std::string mode;
    const WeylParams p = weyl_params(a.weyl, w, s.values, mode);
    const auto reports = missing_level_scan(s.values, p, a.window);
    json list = json::array();
    int total = 0;
    for (const auto& r : reports) {
        list.push_back({{"index", r.index},
                        {"wavevector_per_m", r.wavevector},
                        {"frequency_hz", wavevector_to_frequency(r.wavevector)},
                        {"step", r.step},
                        {"estimated_missing", r.estimated_missing}});
        total += r.estimated_missing;
    }
    const fs::path dir = io::resolve_output_dir(a.out);
    std::vector<fs::path> outputs;
    write_json(dir / "missing_levels.json",
               json{{"levels", s.size()},
                    {"window", a.window},
                    {"weyl", {{"area", p.area}, {"perimeter", p.perimeter}, {"constant", p.constant}, {"constant_mode", mode}}},
                    {"reports", list},
                    {"estimated_missing_total", total}},
               outputs);
    out << reports.size() << " gap(s), estimated missing levels: " << total << "\n";
    finish(dir, "missing", args, {a.spectrum}, outputs, started);
    return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::vector<std::string> traces;
    double window_ghz = 0.5;
    double prominence = 0.05;
    double half_width = 3.0;
    std::size_t neighbours = 10;
    std::optional<std::string> out;
};

int cmd_fit(const FitArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    const std::string started = io::utc_timestamp();
    if (!(a.window_ghz > 0.0)) throw ConfigError("--window-ghz must be positive");
    if (!(a.prominence > 0.0)) throw ConfigError("--prominence must be positive");
    const fs::path dir = io::resolve_output_dir(a.out);
    std::vector<fs::path> outputs;
    std::vector<fs::path> inputs;

    std::map<std::pair<int, int>, ResonanceSet> by_pair;
    std::vector<double> z_all;
    std::string strength_text = "trace,f_hz,y,z\n";
    json summary_traces = json::array();
    for (const auto& file : a.traces) {
        inputs.emplace_back(file);
        const ComplexTrace trace = io::read_trace(file);
        if (trace.size() <= 10) throw DataError(file + ": trace needs more than 10 samples");
        WindowFitOptions opts;
        opts.window_hz = a.window_ghz * 1e9;
        opts.prominence = a.prominence;
        opts.fit.window_widths = a.half_width;
        const ResonanceSet set = fit_trace_windows(trace, opts);
        const std::string stem = fs::path(file).stem().string();
        const fs::path rpath = dir / ("resonances_" + stem + ".json");
        io::write_resonances(rpath, set);
        outputs.push_back(rpath);

        std::size_t unconverged = 0;
        for (const auto& r : set.resonances) unconverged += r.converged ? 0 : 1;
        json entry{{"trace", file},
                   {"channels", {trace.pair.a, trace.pair.b}},
                   {"resonances", set.resonances.size()},
                   {"unconverged", unconverged},
                   {"warnings", warnings_json(set.warnings)}};
        if (!set.resonances.empty()) {
            const StrengthResult st = strengths(set.resonances, a.neighbours);
            for (const auto& s : st.samples) {
                strength_text += stem + "," + io::format_double(s.center) + "," + io::format_double(s.y) + "," +
                                 io::format_double(s.z) + "\n";
                z_all.push_back(s.z);
            }
            entry["strength_warnings"] = warnings_json(st.warnings);
        }
        summary_traces.push_back(entry);
        out << file << ": " << set.resonances.size() << " resonances (" << unconverged << " unconverged)\n";
        by_pair[{trace.pair.a, trace.pair.b}] = set;
    }
    const fs::path spath = dir / "strengths.csv";
    io::write_text(spath, strength_text);
    outputs.push_back(spath);

    const StatCurve hist = strength_histogram(z_all, -6.0, 2.0, 0.2);
    std::string htext = "z,density,count,k0\n";
    for (std::size_t i = 0; i < hist.size(); ++i) {
        htext += io::format_double(hist.abscissa[i]) + "," + io::format_double(hist.ordinate[i]) + "," +
                 std::to_string(hist.counts[i]) + "," + io::format_double(k0_strength_value(hist.abscissa[i])) + "\n";
    }
    const fs::path hpath = dir / "strength_histogram.csv";
    io::write_text(hpath, htext);
    outputs.push_back(hpath);

    json reciprocity = json::array();
    for (const auto& [pair, set] : by_pair) {
        if (pair.first >= pair.second) continue;
        const auto other = by_pair.find({pair.second, pair.first});
        if (other == by_pair.end()) continue;
        json rows = json::array();
        for (const auto& e : reciprocity_report(set, other->second)) {
            rows.push_back({{"f_hz", e.center},
                            {"amplitude_ab_hz", e.amplitude_ab},
                            {"amplitude_ba_hz", e.amplitude_ba},
                            {"relative_difference", e.relative_difference}});
        }
        reciprocity.push_back({{"a", pair.first}, {"b", pair.second}, {"matches", rows}});
    }
    if (!reciprocity.empty()) write_json(dir / "reciprocity.json", reciprocity, outputs);
    write_json(dir / "fit_summary.json", json{{"traces", summary_traces}, {"strength_samples", z_all.size()}}, outputs);
    finish(dir, "fit", args, inputs, outputs, started);
    return kExitOk;
}

// ---------------------------------------------------------------- rmt

json curve_json_summary(const ElementDistributions& d) {
    return json{{"mean_modulus", d.mean_modulus}, {"warnings", warnings_json(d.warnings)}};
}

void write_distribution(const fs::path& dir, const std::string& tag, const ElementDistributions& d,
                        std::vector<fs::path>& outputs) {
    const fs::path m = dir / ("modulus_" + tag + ".csv");
    const fs::path p = dir / ("phase_" + tag + ".csv");
    io::write_curve(m, d.modulus, "modulus", "density");
    io::write_curve(p, d.phase, "phase", "density");
    outputs.push_back(m);
    outputs.push_back(p);
}

int cmd_rmt(const std::string& config, const std::optional<std::string>& out_dir,
            const std::vector<std::string>& args, std::ostream& out) {
    const std::string started = io::utc_timestamp();
    const io::RmtRunConfig run = io::read_rmt_config(config);
    const EnsembleStats st = ensemble_run(run.ensemble);
    const fs::path dir = io::resolve_output_dir(out_dir);
    std::vector<fs::path> outputs;

    std::string ac = "lag_d,re,im,modulus,count\n";
    const auto& c = st.autocorrelation;
    for (std::size_t i = 0; i < c.lags.size(); ++i) {
        ac += io::format_double(c.lags[i]) + "," + io::format_double(c.values[i].real()) + "," +
              io::format_double(c.values[i].imag()) + "," + io::format_double(std::abs(c.values[i])) + "," +
              std::to_string(c.counts[i]) + "\n";
    }
    const fs::path ap = dir / "autocorrelation_ab.csv";
    io::write_text(ap, ac);
    outputs.push_back(ap);
    write_distribution(dir, "aa", st.reflection_a, outputs);
    write_distribution(dir, "ab", st.transmission, outputs);
    write_distribution(dir, "bb", st.reflection_b, outputs);

    auto transmission = [](const TransmissionEstimate& t, double expected, const std::optional<double>& target) {
        json j{{"estimate", t.value}, {"standard_error", t.standard_error}, {"expected", expected},
               {"mean_s", {t.mean_s.real(), t.mean_s.imag()}}};
        j["target"] = target ? json(*target) : json(nullptr);
        return j;
    };
    const auto& e = run.ensemble;
    const std::string regime = st.unitary ? "unitary" : "absorptive";
    const json summary{
        {"regime", regime},
        {"dimension", e.dimension},
        {"realizations", e.realizations},
        {"seed", e.seed},
        {"fictitious_channels", e.fictitious_channels},
        {"fictitious_transmission", e.fictitious_transmission},
        {"tau_abs", st.tau_abs},
        {"spacing", st.spacing},
        {"v2", {{"a", e.v2_a}, {"b", e.v2_b}}},
        {"transmission", {{"a", transmission(st.transmission_a, st.expected_transmission_a, run.target_a)},
                          {"b", transmission(st.transmission_b, st.expected_transmission_b, run.target_b)}}},
        {"mean_s_ab", {st.mean_s_ab.real(), st.mean_s_ab.imag()}},
        {"correlation_width_d", st.correlation_width},
        {"distributions", {{"aa", curve_json_summary(st.reflection_a)},
                           {"ab", curve_json_summary(st.transmission)},
                           {"bb", curve_json_summary(st.reflection_b)}}},
        {"warnings", warnings_json(st.warnings)}};
    write_json(dir / "rmt_summary.json", summary, outputs);
    out << regime << " ensemble: T_a " << st.transmission_a.value << " (expected " << st.expected_transmission_a
        << "), T_b " << st.transmission_b.value << " (expected " << st.expected_transmission_b
        << "), correlation width " << st.correlation_width << " d\n";
    finish(dir, "rmt", args, {config}, outputs, started);
    return kExitOk;
}

// ---------------------------------------------------------------- field

struct FieldArgs {
    std::optional<std::string> shift;
    std::optional<std::string> geometry;
    std::vector<int> mode;
    double spacing_mm = 5.0;
    std::optional<double> f0;
    std::optional<double> c1;
    bool normalize = false;
    bool as_shift = false;
    std::optional<std::string> out;
};

int cmd_field(const FieldArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    const std::string started = io::utc_timestamp();
    const fs::path dir = io::resolve_output_dir(a.out);
    std::vector<fs::path> outputs;
    std::vector<fs::path> inputs;
    if (a.shift && a.geometry) throw ConfigError("give --shift or --geometry, not both");
    if (a.shift) {
        if (!a.f0 || !a.c1) throw ConfigError("--shift needs --f0 and --c1");
        inputs.emplace_back(*a.shift);
        const FieldMap shift = io::read_field_map(*a.shift);
        const FieldMap intensity = field_intensity_from_shift(shift, *a.f0, *a.c1, a.normalize);
        const fs::path p = dir / "intensity.csv";
        io::write_field_map(p, intensity);
        outputs.push_back(p);
        out << "intensity map " << intensity.nx << "x" << intensity.ny << " -> " << p.string() << "\n";
    } else if (a.geometry) {
        if (a.mode.size() != 2) throw ConfigError("--mode needs m,nu");
        if (!(a.spacing_mm > 0.0)) throw ConfigError("--spacing-mm must be positive");
        inputs.emplace_back(*a.geometry);
        const auto g = io::read_geometry(*a.geometry);
        const ModeLabel label{a.mode[0], a.mode[1]};
        if (label.m < 1 || label.nu < 1) throw ConfigError("mode indices must be >= 1");
        // Enough levels to contain the requested label.
        const double order = g.sector.order(label.m);
        const auto zeros = bessel::zeros(order, label.nu);
        const WavevectorSpectrum s = sector_eigenvalues(g.sector, zeros.back() / g.sector.radius() * (1.0 + 1e-9));
        FieldMap map = sector_wavefunction(g.sector, s, label, a.spacing_mm * 1e-3);
        std::string name = "mode_" + std::to_string(label.m) + "_" + std::to_string(label.nu);
        if (a.as_shift) {
            if (!a.f0 || !a.c1) throw ConfigError("--as-shift needs --f0 and --c1");
            for (auto& v : map.values) v *= *a.f0 * *a.c1;
            name += "_shift";
        }
        const fs::path p = dir / (name + ".csv");
        io::write_field_map(p, map);
        outputs.push_back(p);
        out << name << " " << map.nx << "x" << map.ny << " -> " << p.string() << "\n";
    } else {
        throw ConfigError("give --shift FILE or --geometry FILE --mode m,nu");
    }
    finish(dir, "field", args, inputs, outputs, started);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral statistics and scattering toolkit for microwave billiards", "mwb"};
    app.require_subcommand(1);
    app.set_version_flag("--version", io::kToolVersion);

    EigenArgs eigen;
    auto* e = app.add_subcommand("eigen", "Sector (and point-scatterer) eigenvalue spectra");
    e->add_option("--geometry", eigen.geometry, "Geometry file")->required()->check(CLI::ExistingFile);
    e->add_option("--f-max", eigen.f_max, "Upper frequency (Hz)");
    e->add_option("--k-max", eigen.k_max, "Upper wavevector (1/m)");
    e->add_option("--coupling", eigen.coupling, "Point-scatterer coupling (overrides the file)");
    e->add_option("--out", eigen.out, "Output directory");

    StatsArgs stats;
    auto* s = app.add_subcommand("stats", "Spacing and rigidity statistics with reference models");
    s->add_option("--spectrum", stats.spectra, "Spectrum file(s); each becomes one sequence")->check(CLI::ExistingFile);
    s->add_option("--unfolded", stats.unfolded, "Already unfolded level file(s)")->check(CLI::ExistingFile);
    s->add_option("--generate", stats.generate, "Generate a reference sequence: poisson | goe | semi-poisson");
    s->add_option("--levels", stats.levels, "Levels per generated sequence");
    s->add_option("--sequences", stats.sequences, "Generated sequences");
    s->add_option("--seed", stats.seed, "Seed for generated sequences");
    s->add_option("--bin", stats.bin, "P(s) bin width");
    add_weyl_options(s, stats.weyl);
    s->add_option("--out", stats.out, "Output directory");

    MissingArgs missing;
    auto* m = app.add_subcommand("missing", "Scan the fluctuating staircase for missing levels");
    m->add_option("--spectrum", missing.spectrum, "Spectrum file")->required()->check(CLI::ExistingFile);
    m->add_option("--window", missing.window, "Averaging window (levels)");
    add_weyl_options(m, missing.weyl);
    m->add_option("--out", missing.out, "Output directory");

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Breit-Wigner fits of complex S-matrix traces");
    f->add_option("--trace", fit.traces, "Trace CSV file(s)")->required()->check(CLI::ExistingFile);
    f->add_option("--window-ghz", fit.window_ghz, "Batch window width (GHz)");
    f->add_option("--prominence", fit.prominence, "Peak prominence threshold");
    f->add_option("--half-width", fit.half_width, "Fit window half-width in resonance widths");
    f->add_option("--neighbours", fit.neighbours, "Resonances in the local strength average");
    f->add_option("--out", fit.out, "Output directory");

    std::string rmt_config;
    std::optional<std::string> rmt_out;
    auto* r = app.add_subcommand("rmt", "Random-matrix scattering ensemble");
    r->add_option("--config", rmt_config, "Ensemble configuration file")->required()->check(CLI::ExistingFile);
    r->add_option("--out", rmt_out, "Output directory");

    FieldArgs field;
    auto* fl = app.add_subcommand("field", "Field intensity from perturbation frequency shifts");
    fl->add_option("--shift", field.shift, "Frequency-shift map (CSV)")->check(CLI::ExistingFile);
    fl->add_option("--geometry", field.geometry, "Geometry file for a synthetic sector mode")->check(CLI::ExistingFile);
    fl->add_option("--mode", field.mode, "Mode label m,nu")->delimiter(',');
    fl->add_option("--spacing-mm", field.spacing_mm, "Grid spacing (mm)");
    fl->add_option("--f0", field.f0, "Unperturbed resonance frequency (Hz)");
    fl->add_option("--c1", field.c1, "Perturbation-body constant");
    fl->add_flag("--normalize", field.normalize, "Scale the intensity to unit maximum");
    fl->add_flag("--as-shift", field.as_shift, "Write the synthetic mode as a shift map f0 c1 |psi|^2");
    fl->add_option("--out", field.out, "Output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*e) return cmd_eigen(eigen, args, out, err);
        if (*s) return cmd_stats(stats, args, out);
        if (*m) return cmd_missing(missing, args, out);
        if (*f) return cmd_fit(fit, args, out);
        if (*r) return cmd_rmt(rmt_config, rmt_out, args, out);
        if (*fl) return cmd_field(field, args, out);
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const DataError& ex) {
        err << "data error: " << ex.what() << "\n";
        return kExitData;
    } catch (const NotFoundError& ex) {
        err << "data error: " << ex.what() << "\n";
        return kExitData;
    } catch (const NumericalError& ex) {
        err << "numerical failure: " << ex.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& ex) {
        err << "invalid argument: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        err << "numerical failure: " << ex.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}

}  // namespace mwb::cli
