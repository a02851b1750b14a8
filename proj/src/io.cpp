#include "mwb/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "mwb/constants.hpp"
#include "mwb/errors.hpp"

namespace mwb::io {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string strip_comment(const std::string& line) {
    const auto pos = line.find('#');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

std::string where(const fs::path& path, int line) { return path.string() + ":" + std::to_string(line); }

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

bool try_parse(std::string_view text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::string pair_header(const ChannelPair& p) {
    return "# channels: a=" + std::to_string(p.a) + " b=" + std::to_string(p.b) + "\n";
}

json resonance_to_json(const Resonance& r) {
    return json{{"f_hz", r.center},
                {"gamma_hz", r.width},
                {"amplitude_hz", r.amplitude},
                {"sign", r.sign},
                {"converged", r.converged},
                {"covariance_diag", {r.center_sigma * r.center_sigma, r.width_sigma * r.width_sigma,
                                     r.amplitude_sigma * r.amplitude_sigma}},
                {"diagnostics", r.diagnostics}};
}

}  // namespace

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

double parse_number(const std::string& text, const std::string& loc) {
    double v = 0.0;
    if (!try_parse(text, v)) throw ConfigError(loc + ": expected a number, got '" + trim(text) + "'");
    return v;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& loc) {
    std::vector<double> out;
    for (const auto& part : split(text, ',')) out.push_back(parse_number(part, loc));
    return out;
}

std::vector<KeyValue> read_key_values(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<KeyValue> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError(where(path, n) + ": expected 'key = value'");
        KeyValue kv{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), n};
        if (kv.key.empty() || kv.value.empty()) throw ConfigError(where(path, n) + ": empty key or value");
        out.push_back(std::move(kv));
    }
    return out;
}

GeometryConfig read_geometry(const fs::path& path) {
    std::optional<double> radius;
    std::optional<double> theta;
    std::optional<double> coupling;
    int coupling_line = 0;
    GeometryConfig g;
    for (const auto& kv : read_key_values(path)) {
        const std::string loc = where(path, kv.line);
        if (kv.key == "radius_m") {
            radius = parse_number(kv.value, loc);
        } else if (kv.key == "theta_rad") {
            theta = parse_number(kv.value, loc);
        } else if (kv.key == "theta_deg") {
            theta = parse_number(kv.value, loc) * std::numbers::pi / 180.0;
        } else if (kv.key == "scatterer") {
            const auto v = parse_number_list(kv.value, loc);
            if (v.size() != 3) throw ConfigError(loc + ": scatterer needs x_mm, y_mm, r_mm");
            g.disks.push_back({v[0] * 1e-3, v[1] * 1e-3, v[2] * 1e-3});
        } else if (kv.key == "point_scatterer") {
            const auto v = parse_number_list(kv.value, loc);
            if (v.size() != 3) throw ConfigError(loc + ": point_scatterer needs x_mm, y_mm, coupling");
            g.point = PointScatterer{v[0] * 1e-3, v[1] * 1e-3, v[2]};
        } else if (kv.key == "coupling") {
            coupling = parse_number(kv.value, loc);
            coupling_line = kv.line;
        } else if (kv.key == "name") {
            g.name = kv.value;
        } else {
            throw ConfigError(loc + ": unknown key '" + kv.key + "'");
        }
    }
    if (!radius || !theta) throw ConfigError(path.string() + ": radius_m and theta_rad are required");
    try {
        g.sector = SectorGeometry(*radius, *theta);
        validate_scatterers(g.sector, g.disks);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (coupling) {
        if (g.point) throw ConfigError(where(path, coupling_line) + ": coupling conflicts with point_scatterer");
        if (g.disks.size() != 1) {
            throw ConfigError(where(path, coupling_line) + ": the point-scatterer model needs exactly one scatterer");
        }
        g.point = PointScatterer{g.disks[0].x, g.disks[0].y, *coupling};
    }
    if (g.point && !g.sector.contains(g.point->x, g.point->y)) {
        throw ConfigError(path.string() + ": point scatterer lies outside the sector");
    }
    return g;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

void write_spectrum(const fs::path& path, const WavevectorSpectrum& s, const std::string& title) {
    std::string text = "# " + title + "\n# levels: " + std::to_string(s.size()) + "\n";
    text += s.labelled() ? "# wavevector_per_m frequency_hz m nu\n" : "# wavevector_per_m frequency_hz\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        text += format_double(s.values[i]) + " " + format_double(wavevector_to_frequency(s.values[i]));
        if (s.labelled()) text += " " + std::to_string(s.labels[i].m) + " " + std::to_string(s.labels[i].nu);
        text += "\n";
    }
    write_text(path, text);
}

WavevectorSpectrum read_spectrum(const fs::path& path) {
    auto in = open_input(path);
    WavevectorSpectrum s;
    bool labelled = true;
    std::vector<ModeLabel> labels;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        const auto cols = split_ws(body);
        double k = 0.0;
        if (!try_parse(cols[0], k) || !(k > 0.0)) {
            throw DataError(where(path, n) + ": expected a positive wavevector");
        }
        if (!s.values.empty() && !(k > s.values.back())) {
            throw DataError(where(path, n) + ": wavevectors must be strictly ascending");
        }
        s.values.push_back(k);
        double m = 0.0;
        double nu = 0.0;
        if (cols.size() == 4 && try_parse(cols[2], m) && try_parse(cols[3], nu)) {
            labels.push_back({static_cast<int>(m), static_cast<int>(nu)});
        } else {
            labelled = false;
        }
    }
    if (labelled && !labels.empty()) s.labels = std::move(labels);
    return s;
}

void write_trace(const fs::path& path, const ComplexTrace& trace) {
    validate_trace(trace);
    std::string text = pair_header(trace.pair) + "frequency_hz,re,im\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        text += format_double(trace.frequencies[i]) + "," + format_double(trace.values[i].real()) + "," +
                format_double(trace.values[i].imag()) + "\n";
    }
    write_text(path, text);
}

ComplexTrace read_trace(const fs::path& path) {
    auto in = open_input(path);
    ComplexTrace t;
    std::string line;
    int n = 0;
    bool pair_seen = false;
    while (std::getline(in, line)) {
        ++n;
        const std::string body = trim(line);
        if (body.empty()) continue;
        if (body[0] == '#') {
            int a = 0;
            int b = 0;
            if (std::sscanf(body.c_str(), "# channels: a=%d b=%d", &a, &b) == 2) {
                t.pair = {a, b};
                pair_seen = true;
            }
            continue;
        }
        if (body.rfind("frequency_hz", 0) == 0) continue;
        const auto cols = split(body, ',');
        double f = 0.0;
        double re = 0.0;
        double im = 0.0;
        if (cols.size() != 3 || !try_parse(cols[0], f) || !try_parse(cols[1], re) || !try_parse(cols[2], im)) {
            throw DataError(where(path, n) + ": expected 'frequency_hz,re,im'");
        }
        if (!t.frequencies.empty() && !(f > t.frequencies.back())) {
            throw DataError(where(path, n) + ": frequencies must be strictly ascending");
        }
        t.frequencies.push_back(f);
        t.values.emplace_back(re, im);
    }
    if (!pair_seen) throw DataError(path.string() + ": missing '# channels: a=.. b=..' header");
    if (t.frequencies.empty()) throw DataError(path.string() + ": trace has no samples");
    return t;
}

void write_resonances(const fs::path& path, const ResonanceSet& set) {
    json arr = json::array();
    for (const auto& r : set.resonances) arr.push_back(resonance_to_json(r));
    write_text(path, arr.dump(2) + "\n");
}

ResonanceSet read_resonances(const fs::path& path) {
    auto in = open_input(path);
    ResonanceSet set;
    try {
        const json arr = json::parse(in);
        for (const auto& j : arr) {
            Resonance r;
            r.center = j.at("f_hz").get<double>();
            r.width = j.at("gamma_hz").get<double>();
            r.amplitude = j.at("amplitude_hz").get<double>();
            r.sign = j.value("sign", 1);
            r.converged = j.at("converged").get<bool>();
            const auto cov = j.at("covariance_diag").get<std::vector<double>>();
            if (cov.size() != 3) throw DataError(path.string() + ": covariance_diag needs 3 entries");
            r.center_sigma = std::sqrt(cov[0]);
            r.width_sigma = std::sqrt(cov[1]);
            r.amplitude_sigma = std::sqrt(cov[2]);
            r.diagnostics = j.value("diagnostics", std::string{});
            set.resonances.push_back(r);
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return set;
}

void write_curve(const fs::path& path, const StatCurve& c, const std::string& x_name, const std::string& y_name) {
    const bool with_counts = !c.counts.empty();
    if (with_counts && c.counts.size() != c.size()) throw std::invalid_argument("write_curve: count length mismatch");
    std::string text = x_name + "," + y_name + (with_counts ? ",count\n" : "\n");
    for (std::size_t i = 0; i < c.size(); ++i) {
        text += format_double(c.abscissa[i]) + "," + format_double(c.ordinate[i]);
        if (with_counts) text += "," + std::to_string(c.counts[i]);
        text += "\n";
    }
    write_text(path, text);
}

StatCurve read_curve(const fs::path& path) {
    auto in = open_input(path);
    StatCurve c;
    std::string line;
    int n = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto cols = split(body, ',');
        if (columns == 0) {
            columns = cols.size();
            if (columns != 2 && columns != 3) throw DataError(where(path, n) + ": expected 2 or 3 columns");
            continue;
        }
        double x = 0.0;
        double y = 0.0;
        double k = 0.0;
        if (cols.size() != columns || !try_parse(cols[0], x) || !try_parse(cols[1], y) ||
            (columns == 3 && !try_parse(cols[2], k))) {
            throw DataError(where(path, n) + ": malformed curve row");
        }
        c.abscissa.push_back(x);
        c.ordinate.push_back(y);
        if (columns == 3) c.counts.push_back(static_cast<long>(k));
    }
    if (columns == 0) throw DataError(path.string() + ": empty curve file");
    return c;
}

void write_field_map(const fs::path& path, const FieldMap& map) {
    std::string text = "# grid: nx=" + std::to_string(map.nx) + " ny=" + std::to_string(map.ny) +
                       " x0=" + format_double(map.x0) + " y0=" + format_double(map.y0) +
                       " spacing=" + format_double(map.spacing) + "\nx_m,y_m,inside,value\n";
    for (std::size_t iy = 0; iy < map.ny; ++iy) {
        for (std::size_t ix = 0; ix < map.nx; ++ix) {
            text += format_double(map.x(ix)) + "," + format_double(map.y(iy)) + "," +
                    (map.in_domain(ix, iy) ? "1," : "0,") + format_double(map.at(ix, iy)) + "\n";
        }
    }
    write_text(path, text);
}

FieldMap read_field_map(const fs::path& path) {
    auto in = open_input(path);
    std::string line;
    int n = 0;
    FieldMap map;
    bool header = false;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string body = trim(line);
        if (body.empty() || body.rfind("x_m", 0) == 0) continue;
        if (body[0] == '#') {
            std::size_t nx = 0;
            std::size_t ny = 0;
            char x0[64], y0[64], sp[64];
            if (std::sscanf(body.c_str(), "# grid: nx=%zu ny=%zu x0=%63s y0=%63s spacing=%63s", &nx, &ny, x0, y0, sp) == 5) {
                double a = 0.0, b = 0.0, h = 0.0;
                if (!try_parse(x0, a) || !try_parse(y0, b) || !try_parse(sp, h) || !(h > 0.0)) {
                    throw DataError(where(path, n) + ": malformed grid header");
                }
                map = FieldMap(a, b, h, nx, ny);
                header = true;
            }
            continue;
        }
        if (!header) throw DataError(where(path, n) + ": data before '# grid:' header");
        const auto cols = split(body, ',');
        double x = 0.0, y = 0.0, inside = 0.0, v = 0.0;
        if (cols.size() != 4 || !try_parse(cols[0], x) || !try_parse(cols[1], y) || !try_parse(cols[2], inside) ||
            !try_parse(cols[3], v)) {
            throw DataError(where(path, n) + ": expected 'x_m,y_m,inside,value'");
        }
        if (count >= map.values.size()) throw DataError(where(path, n) + ": more rows than the grid holds");
        map.values[count] = v;
        map.inside[count] = inside != 0.0 ? 1 : 0;
        ++count;
    }
    if (!header) throw DataError(path.string() + ": missing '# grid:' header");
    if (count != map.values.size()) throw DataError(path.string() + ": row count does not match the grid");
    return map;
}

RmtRunConfig read_rmt_config(const fs::path& path) {
    RmtRunConfig run;
    auto& c = run.ensemble;
    const auto kvs = read_key_values(path);
    std::map<std::string, KeyValue> seen;
    for (const auto& kv : kvs) {
        if (seen.count(kv.key)) throw ConfigError(where(path, kv.line) + ": duplicate key '" + kv.key + "'");
        seen[kv.key] = kv;
    }
    auto num = [&](const std::string& key) -> std::optional<double> {
        const auto it = seen.find(key);
        if (it == seen.end()) return std::nullopt;
        return parse_number(it->second.value, where(path, it->second.line));
    };
    auto integer = [&](const std::string& key, auto& target) {
        if (auto v = num(key)) {
            if (*v != std::floor(*v)) throw ConfigError(where(path, seen[key].line) + ": '" + key + "' must be an integer");
            target = static_cast<std::remove_reference_t<decltype(target)>>(*v);
        }
    };
    static const char* known[] = {"dimension", "v2_a", "v2_b", "coupling_a", "coupling_b", "T_a", "T_b",
                                  "fictitious_channels", "fictitious_transmission", "tau_abs", "realizations",
                                  "seed", "grid_start_d", "grid_stop_d", "grid_step_d", "correlation_lags_d",
                                  "correlation_window_d", "histogram_bins"};
    for (const auto& [key, kv] : seen) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
            throw ConfigError(where(path, kv.line) + ": unknown key '" + key + "'");
        }
    }

    integer("dimension", c.dimension);
    if (c.dimension < 50) throw ConfigError(path.string() + ": dimension must be >= 50");
    const RmtEnsembleConfig defaults = default_rmt_config(c.dimension);
    c.grid_start = num("grid_start_d").value_or(defaults.grid_start);
    c.grid_stop = num("grid_stop_d").value_or(defaults.grid_stop);
    c.grid_step = num("grid_step_d").value_or(defaults.grid_step);
    c.correlation_lags = defaults.correlation_lags;
    if (seen.count("correlation_lags_d")) {
        c.correlation_lags = parse_number_list(seen["correlation_lags_d"].value, where(path, seen["correlation_lags_d"].line));
    }
    c.correlation_window = num("correlation_window_d").value_or(0.0);
    integer("fictitious_channels", c.fictitious_channels);
    integer("realizations", c.realizations);
    integer("histogram_bins", c.histogram_bins);
    if (auto s = num("seed")) {
        if (*s < 0 || *s != std::floor(*s)) throw ConfigError(where(path, seen["seed"].line) + ": seed must be a non-negative integer");
        c.seed = static_cast<std::uint64_t>(*s);
    }

    const auto ft = num("fictitious_transmission");
    const auto tau = num("tau_abs");
    if (ft && tau) throw ConfigError(path.string() + ": give fictitious_transmission or tau_abs, not both");
    if (ft) c.fictitious_transmission = *ft;
    if (tau) {
        if (*tau < 0.0) throw ConfigError(path.string() + ": tau_abs must be >= 0");
        if (*tau > 0.0 && c.fictitious_channels == 0) throw ConfigError(path.string() + ": tau_abs > 0 needs fictitious channels");
        c.fictitious_transmission = c.fictitious_channels > 0 ? *tau / c.fictitious_channels : 0.0;
    }

    // The antenna strength needs d, which depends only on the grid.
    c.v2_a = c.v2_b = 1.0;
    if (!(c.grid_step > 0.0) || !(c.grid_stop > c.grid_start)) throw ConfigError(path.string() + ": invalid grid");
    double d = 0.0;
    try {
        d = analysis_spacing(c);
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    auto antenna = [&](const std::string& suffix, double& v2, std::optional<double>& target) {
        const auto v = num("v2_" + suffix);
        const auto x = num("coupling_" + suffix);
        const auto t = num("T_" + suffix);
        if ((v ? 1 : 0) + (x ? 1 : 0) + (t ? 1 : 0) != 1) {
            throw ConfigError(path.string() + ": give exactly one of v2_" + suffix + ", coupling_" + suffix + ", T_" + suffix);
        }
        if (v) v2 = *v;
        if (x) v2 = *x * d / (std::numbers::pi * std::numbers::pi);
        if (t) {
            if (!(*t > 0.0 && *t <= 1.0)) throw ConfigError(path.string() + ": T_" + suffix + " must lie in (0, 1]");
            v2 = v2_for_transmission(*t, d);
            target = *t;
        }
    };
    antenna("a", c.v2_a, run.target_a);
    antenna("b", c.v2_b, run.target_b);
    c.validate();
    return run;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("SHA-256 computation failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return out.str();
}

std::string sha256_file(const fs::path& path) {
    auto in = open_input(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& path, const RunManifest& m) {
    json inputs = json::object();
    for (const auto& p : m.inputs) inputs[p.string()] = sha256_file(p);
    json outputs = json::object();
    for (const auto& p : m.outputs) outputs[p.filename().string()] = sha256_file(p);
    const json j{{"tool", "mwb"},
                 {"version", kToolVersion},
                 {"command", m.command},
                 {"config_sha256", sha256_hex(m.config_text)},
                 {"inputs", inputs},
                 {"outputs", outputs},
                 {"started_utc", m.started},
                 {"finished_utc", m.finished}};
    write_text(path, j.dump(2) + "\n");
}

fs::path resolve_output_dir(const std::optional<std::string>& requested) {
    fs::path dir;
    if (requested && !requested->empty()) {
        dir = *requested;
    } else if (const char* env = std::getenv(kOutDirVariable); env && *env) {
        dir = env;
    } else {
        dir = fs::current_path();
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

}  // namespace mwb::io
