#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include <json.hpp>

#include "mwb/billiard.hpp"
#include "mwb/cli.hpp"
#include "mwb/constants.hpp"
#include "mwb/errors.hpp"
#include "mwb/io.hpp"
#include "mwb/resonance.hpp"
#include "mwb/spectral_stats.hpp"

using namespace mwb;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kConfigs = fs::path(MWB_SOURCE_DIR) / "configs";

fs::path scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const fs::path p = fs::temp_directory_path() /
                       ("mwb_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run mwb_run(const std::vector<std::string>& args) {
    std::ostringstream o;
    std::ostringstream e;
    Run r;
    r.code = cli::run(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("writers round-trip byte for byte") {
    const fs::path d = scratch_dir("roundtrip");

    const auto levels = sector_eigenvalues(SectorGeometry(0.8, std::numbers::pi / 3), 40.0);
    io::write_spectrum(d / "a.txt", levels, "sector");
    const auto levels_back = io::read_spectrum(d / "a.txt");
    CHECK(levels_back.values == levels.values);
    CHECK(levels_back.labels == levels.labels);
    io::write_spectrum(d / "b.txt", levels_back, "sector");
    CHECK(slurp(d / "a.txt") == slurp(d / "b.txt"));

    ComplexTrace t;
    t.pair = {2, 1};
    for (int i = 0; i < 50; ++i) {
        t.frequencies.push_back(1e9 + 1e5 * i + 0.1);
        t.values.emplace_back(std::sin(i * 0.3) / 3.0, std::cos(i * 0.7) / 7.0);
    }
    io::write_trace(d / "t.csv", t);
    const auto t_back = io::read_trace(d / "t.csv");
    CHECK(t_back.frequencies == t.frequencies);
    CHECK(t_back.values == t.values);
    CHECK(t_back.pair == t.pair);
    io::write_trace(d / "t2.csv", t_back);
    CHECK(slurp(d / "t.csv") == slurp(d / "t2.csv"));

    ResonanceSet set;
    set.pair = {1, 2};
    Resonance r;
    r.center = 2.123456789e9;
    r.width = 1.0 / 3.0 * 1e6;
    r.amplitude = 2e5 / 7.0;
    r.sign = -1;
    r.center_sigma = 1.5;
    r.diagnostics = "ok";
    set.resonances = {r, r};
    set.resonances[1].converged = false;
    io::write_resonances(d / "r.json", set);
    const auto set_back = io::read_resonances(d / "r.json");
    REQUIRE(set_back.resonances.size() == 2);
    CHECK(set_back.resonances[0].center == r.center);
    CHECK(set_back.resonances[0].width == r.width);
    CHECK(set_back.resonances[0].sign == -1);
    CHECK_FALSE(set_back.resonances[1].converged);
    io::write_resonances(d / "r2.json", set_back);
    CHECK(slurp(d / "r.json") == slurp(d / "r2.json"));

    StatCurve c;
    c.abscissa = {0.05, 0.15, 0.25};
    c.ordinate = {0.1, 1.0 / 3.0, 2.0};
    c.counts = {1, 2, 3};
    io::write_curve(d / "c.csv", c, "s", "p");
    const auto c_back = io::read_curve(d / "c.csv");
    CHECK(c_back.ordinate == c.ordinate);
    CHECK(c_back.counts == c.counts);
    io::write_curve(d / "c2.csv", c_back, "s", "p");
    CHECK(slurp(d / "c.csv") == slurp(d / "c2.csv"));

    FieldMap m(-0.01, 0.02, 0.005, 4, 3);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = std::sqrt(static_cast<double>(i));
    m.inside[3] = 0;
    io::write_field_map(d / "m.csv", m);
    const auto m_back = io::read_field_map(d / "m.csv");
    CHECK(m_back.values == m.values);
    CHECK(m_back.inside == m.inside);
    CHECK(m_back.nx == 4);
    io::write_field_map(d / "m2.csv", m_back);
    CHECK(slurp(d / "m.csv") == slurp(d / "m2.csv"));
    fs::remove_all(d);
}

TEST_CASE("input errors") {
    const fs::path d = scratch_dir("errors");
    io::write_text(d / "bad.conf", "radius_m = 0.8\ntheta_deg = 60\nscatterer = 1, 2\n");
    try {
        io::read_geometry(d / "bad.conf");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    io::write_text(d / "unknown.conf", "radius_m = 0.8\ncolour = blue\n");
    CHECK_THROWS_AS(io::read_geometry(d / "unknown.conf"), ConfigError);

    io::write_text(d / "empty.csv", "");
    CHECK_THROWS_AS(io::read_trace(d / "empty.csv"), DataError);
    io::write_text(d / "bad.csv", "# channels: a=1 b=2\nfrequency_hz,re,im\n1e9,0.1\n");
    CHECK_THROWS_AS(io::read_trace(d / "bad.csv"), DataError);
    io::write_text(d / "desc.txt", "# x\n5.0 1e9\n4.0 0.9e9\n");
    CHECK_THROWS_AS(io::read_spectrum(d / "desc.txt"), DataError);

    io::write_text(d / "rmt.conf", "dimension = 100\nv2_a = 0.001\ncoupling_a = 0.1\nv2_b = 0.001\n");
    CHECK_THROWS_AS(io::read_rmt_config(d / "rmt.conf"), ConfigError);

    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    fs::remove_all(d);
}

TEST_CASE("exit codes") {
    const fs::path d = scratch_dir("exit");
    CHECK(mwb_run({}).code == cli::kExitConfig);
    CHECK(mwb_run({"frobnicate"}).code == cli::kExitConfig);
    CHECK(mwb_run({"eigen", "--geometry", (d / "nope.conf").string()}).code == cli::kExitConfig);

    io::write_text(d / "bad.conf", "radius_m = -1\ntheta_deg = 60\n");
    CHECK(mwb_run({"eigen", "--geometry", (d / "bad.conf").string(), "--out", d.string()}).code == cli::kExitConfig);

    io::write_text(d / "empty.csv", "");
    CHECK(mwb_run({"fit", "--trace", (d / "empty.csv").string(), "--out", d.string()}).code == cli::kExitData);

    const auto ok = mwb_run({"eigen", "--geometry", (kConfigs / "empty_sector.conf").string(), "--out", d.string()});
    CHECK(ok.code == cli::kExitOk);
    CHECK(io::read_spectrum(d / "sector_spectrum.txt").size() > 200);
    CHECK(fs::exists(d / "manifest_eigen.json"));
    const auto manifest = read_json(d / "manifest_eigen.json");
    CHECK(manifest["tool"] == "mwb");
    CHECK(manifest["outputs"].size() == 1);

    const auto low = mwb_run({"eigen", "--geometry", (kConfigs / "empty_sector.conf").string(), "--f-max", "0.3e9",
                              "--out", d.string()});
    CHECK(low.code == cli::kExitOk);
    CHECK(io::read_spectrum(d / "sector_spectrum.txt").empty());
    CHECK(low.err.find("warning") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("rmt command is reproducible") {
    const fs::path d1 = scratch_dir("rmt1");
    const fs::path d2 = scratch_dir("rmt2");
    const fs::path cfg = d1 / "small.conf";
    io::write_text(cfg, "dimension = 80\nrealizations = 12\nseed = 5\nT_a = 0.3\nT_b = 0.2\nfictitious_channels = 0\n"
                        "correlation_lags_d = 0, 0.5, 1, 1.5, 2\n");
    REQUIRE(mwb_run({"rmt", "--config", cfg.string(), "--out", d1.string()}).code == cli::kExitOk);
    REQUIRE(mwb_run({"rmt", "--config", cfg.string(), "--out", d2.string()}).code == cli::kExitOk);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(d1)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("manifest_", 0) == 0 || name == "small.conf") continue;
        CHECK_MESSAGE(slurp(entry.path()) == slurp(d2 / name), name);
        ++compared;
    }
    CHECK(compared >= 8);
    const auto summary = read_json(d1 / "rmt_summary.json");
    CHECK(summary["regime"] == "unitary");
    CHECK(summary["transmission"]["a"]["target"].get<double>() == 0.3);
    CHECK(summary["transmission"]["b"]["target"].get<double>() == 0.2);

    // The manifest hashes match the files on disk.
    const auto manifest = read_json(d1 / "manifest_rmt.json");
    CHECK(manifest["inputs"][cfg.string()] == io::sha256_file(cfg));
    for (const auto& [name, digest] : manifest["outputs"].items()) CHECK(digest == io::sha256_file(d1 / name));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("missing command finds deleted levels") {
    const fs::path d = scratch_dir("missing");
    // Levels sitting exactly on the sector's Weyl staircase, N(k_n) = n - 1/2.
    const SectorGeometry g(0.8, std::numbers::pi / 3);
    const double qa = g.area() / (4 * std::numbers::pi);
    const double qb = -g.perimeter() / (4 * std::numbers::pi);
    WavevectorSpectrum full;
    for (int n = 1; n <= 600; ++n) full.values.push_back((-qb + std::sqrt(qb * qb + 4 * qa * (n - 0.5))) / (2 * qa));
    const std::vector<std::string> weyl{"--area", io::format_double(g.area()), "--perimeter", io::format_double(g.perimeter()),
                                        "--weyl-constant", "0", "--f-min", "0", "--f-max", "1e12", "--window", "20",
                                        "--out", d.string()};
    auto scan = [&](const WavevectorSpectrum& s) {
        io::write_spectrum(d / "levels.txt", s, "synthetic");
        std::vector<std::string> args{"missing", "--spectrum", (d / "levels.txt").string()};
        args.insert(args.end(), weyl.begin(), weyl.end());
        REQUIRE(mwb_run(args).code == cli::kExitOk);
        return read_json(d / "missing_levels.json");
    };

    CHECK(scan(full)["reports"].empty());

    auto holes = full;
    std::vector<std::size_t> deleted;
    for (std::size_t i = 0; i < 8; ++i) deleted.push_back(60 + 60 * i);
    for (auto it = deleted.rbegin(); it != deleted.rend(); ++it) holes.values.erase(holes.values.begin() + static_cast<std::ptrdiff_t>(*it));
    const auto rep = scan(holes);
    CHECK(rep["estimated_missing_total"] == 8);
    REQUIRE(rep["reports"].size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        const long idx = rep["reports"][i]["index"].get<long>();
        CHECK(std::abs(idx - static_cast<long>(deleted[i] - i)) <= 3);
        CHECK(rep["reports"][i]["step"].get<double>() == doctest::Approx(-1.0).epsilon(0.3));
    }

    auto pair = full;
    pair.values.erase(pair.values.begin() + 305);
    pair.values.erase(pair.values.begin() + 300);
    const auto merged = scan(pair);
    REQUIRE(merged["reports"].size() == 1);
    CHECK(merged["reports"][0]["step"].get<double>() == doctest::Approx(-2.0).epsilon(0.25));
    fs::remove_all(d);
}

TEST_CASE("fit command") {
    const fs::path d = scratch_dir("fit");
    const double gamma = 3e6;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Resonance> truth;
    double f = 3.01e9;
    for (int i = 0; i < 50; ++i) {
        f += (6.0 + 6.0 * u(rng)) * gamma;
        Resonance r;
        r.center = f;
        r.width = gamma;
        r.amplitude = (0.2 + 0.2 * u(rng)) * gamma;
        r.sign = u(rng) < 0.5 ? 1 : -1;
        truth.push_back(r);
    }
    std::vector<double> grid;
    for (double x = 3e9; x < f + 10 * gamma; x += gamma / 8) grid.push_back(x);
    auto ab = breit_wigner_model(truth, false, grid);
    ab.pair = {1, 2};
    auto ba = ab;
    ba.pair = {2, 1};
    io::write_trace(d / "s12.csv", ab);
    io::write_trace(d / "s21.csv", ba);
    const auto r = mwb_run({"fit", "--trace", (d / "s12.csv").string(), "--trace", (d / "s21.csv").string(),
                            "--window-ghz", "0.1", "--out", d.string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto set = io::read_resonances(d / "resonances_s12.json");
    REQUIRE(set.resonances.size() == 50);
    for (std::size_t i = 1; i < set.resonances.size(); ++i) CHECK(set.resonances[i].center > set.resonances[i - 1].center);
    const auto rec = read_json(d / "reciprocity.json");
    REQUIRE(rec.size() == 1);
    CHECK(rec[0]["matches"].size() == 50);
    for (const auto& m : rec[0]["matches"]) CHECK(m["relative_difference"].get<double>() < 1e-9);
    CHECK(fs::exists(d / "strengths.csv"));
    CHECK(fs::exists(d / "strength_histogram.csv"));
    fs::remove_all(d);
}

TEST_CASE("stats command") {
    const fs::path d = scratch_dir("stats");
    const auto r = mwb_run({"stats", "--generate", "poisson", "--levels", "2000", "--sequences", "2", "--seed", "3",
                            "--out", d.string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto s = read_json(d / "stats_summary.json");
    CHECK(s.contains("ks"));
    for (const char* name : {"spacing_density.csv", "spacing_cumulative.csv", "number_variance.csv", "delta3.csv"}) {
        CHECK(fs::exists(d / name));
    }
    const auto few = mwb_run({"stats", "--generate", "poisson", "--levels", "20", "--out", d.string()});
    CHECK(few.code == cli::kExitData);
    fs::remove_all(d);
}

TEST_CASE("field command") {
    const fs::path d = scratch_dir("field");
    REQUIRE(mwb_run({"field", "--geometry", (kConfigs / "empty_sector.conf").string(), "--mode", "1,2", "--spacing-mm",
                     "20", "--as-shift", "--f0", "3e9", "--c1", "2e-4", "--out", d.string()})
                .code == cli::kExitOk);
    const auto shift = d / "mode_1_2_shift.csv";
    REQUIRE(fs::exists(shift));
    REQUIRE(mwb_run({"field", "--shift", shift.string(), "--f0", "3e9", "--c1", "2e-4", "--out", d.string()}).code ==
            cli::kExitOk);
    REQUIRE(mwb_run({"field", "--geometry", (kConfigs / "empty_sector.conf").string(), "--mode", "1,2", "--spacing-mm",
                     "20", "--out", d.string()})
                .code == cli::kExitOk);
    const auto back = io::read_field_map(d / "intensity.csv");
    const auto mode = io::read_field_map(d / "mode_1_2.csv");
    REQUIRE(back.values.size() == mode.values.size());
    for (std::size_t i = 0; i < back.values.size(); ++i) {
        CHECK(std::abs(back.values[i] - mode.values[i]) <= 1e-12 * std::max(1.0, mode.values[i]));
    }
    CHECK(mwb_run({"field", "--shift", shift.string(), "--f0", "3e9", "--c1", "0", "--out", d.string()}).code ==
          cli::kExitConfig);
    fs::remove_all(d);
}
