#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mwb/billiard.hpp"
#include "mwb/grid.hpp"
#include "mwb/resonance.hpp"
#include "mwb/rmt.hpp"
#include "mwb/spectral_stats.hpp"
#include "mwb/trace.hpp"

namespace mwb::io {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kOutDirVariable = "MWB_OUT_DIR";

/// One `key = value` entry; `line` is 1-based.
struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

/// '#' starts a comment; blank lines are skipped. Throws ConfigError naming file and line.
std::vector<KeyValue> read_key_values(const fs::path& path);

/// Comma-separated numbers; throws ConfigError with `where` in the message.
std::vector<double> parse_number_list(const std::string& text, const std::string& where);
double parse_number(const std::string& text, const std::string& where);

struct PointScatterer {
    double x = 0.0;
    double y = 0.0;
    double coupling = 0.0;
};

struct GeometryConfig {
    SectorGeometry sector{0.8, 1.0};
    std::vector<DiskScatterer> disks;
    /// Position of the point-scatterer model; present when a coupling is configured.
    std::optional<PointScatterer> point;
    std::string name;
};

/**
 * Keys: radius_m, theta_rad (or theta_deg), repeated `scatterer = x_mm, y_mm, r_mm`,
 * optional `coupling` (placed at the single disk's centre) or
 * `point_scatterer = x_mm, y_mm, coupling`, optional `name`.
 */
GeometryConfig read_geometry(const fs::path& path);

/// Spectrum file: '#' header, then `wavevector_per_m frequency_hz [m nu]` per line.
void write_spectrum(const fs::path& path, const WavevectorSpectrum& spectrum, const std::string& title);
/// Reads the first column of each line; optional label columns are kept when every line has them.
WavevectorSpectrum read_spectrum(const fs::path& path);

/// Header `# channels: a=1 b=2`, then `frequency_hz,re,im` rows.
void write_trace(const fs::path& path, const ComplexTrace& trace);
ComplexTrace read_trace(const fs::path& path);

void write_resonances(const fs::path& path, const ResonanceSet& set);
ResonanceSet read_resonances(const fs::path& path);

/// CSV with header `x_name,y_name,count` (count column only when counts are present).
void write_curve(const fs::path& path, const StatCurve& curve, const std::string& x_name, const std::string& y_name);
StatCurve read_curve(const fs::path& path);

/// CSV `x_m,y_m,inside,value` with a `# grid:` header carrying the geometry of the map.
void write_field_map(const fs::path& path, const FieldMap& map);
FieldMap read_field_map(const fs::path& path);

/// Ensemble configuration plus the transmission targets it was written with.
struct RmtRunConfig {
    RmtEnsembleConfig ensemble;
    std::optional<double> target_a;
    std::optional<double> target_b;
};

/**
 * Keys mirror RmtEnsembleConfig. Antenna couplings are given by exactly one of
 * `v2_a`, `coupling_a` (pi^2 v^2 / d) or `T_a` per antenna (same for b).
 * Absorption by `fictitious_transmission` or `tau_abs`. Grid and lags in units of d0.
 */
RmtRunConfig read_rmt_config(const fs::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Bytes are written exactly as given (binary mode).
void write_text(const fs::path& path, const std::string& text);

/**
 * Run record: tool version, command, config hash, SHA-256 digests of inputs
 * and outputs, start and finish timestamps (UTC).
 */
struct RunManifest {
    std::string command;
    std::string config_text;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::string started;
    std::string finished;
};

std::string utc_timestamp();
void write_manifest(const fs::path& path, const RunManifest& manifest);

/// `requested` when given, else $MWB_OUT_DIR, else the current directory. Created if missing.
fs::path resolve_output_dir(const std::optional<std::string>& requested);

/// %.17g formatting used by every writer.
std::string format_double(double value);

}  // namespace mwb::io
