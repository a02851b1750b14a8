#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mwb/bessel.hpp"
#include "mwb/billiard.hpp"
#include "mwb/constants.hpp"
#include "mwb/errors.hpp"
#include "oracles.hpp"

using namespace mwb;

namespace {
const double kPi = std::numbers::pi;
SectorGeometry sixty() { return SectorGeometry(0.8, kPi / 3.0); }
}  // namespace

TEST_CASE("bessel zeros match the power-series oracle") {
    const auto z0 = bessel::zeros(0.0, 1);
    const auto z3 = bessel::zeros(3.0, 1);
    CHECK(z0[0] == doctest::Approx(2.404825557695773).epsilon(1e-12));
    CHECK(z3[0] == doctest::Approx(6.380161895923984).epsilon(1e-12));
    CHECK(z0[0] == doctest::Approx(oracle::series_zero(0.0, 2.0, 3.0)).epsilon(1e-12));

    // Non-integer order too.
    const auto z = bessel::zeros(1.5, 3);
    for (double r : z) {
        CHECK(std::abs(oracle::series_j(1.5, r)) < 1e-12);
    }
}

TEST_CASE("bessel zeros interlace across consecutive orders") {
    const auto a = bessel::zeros(2.0, 11);
    const auto b = bessel::zeros(3.0, 10);
    for (std::size_t s = 0; s < 10; ++s) {
        CHECK(a[s] < b[s]);
        CHECK(b[s] < a[s + 1]);
    }
    for (int n = 0; n < 30; n += 3) {
        const auto lo = bessel::zeros(n, 8);
        const auto hi = bessel::zeros(n + 1.0, 7);
        for (std::size_t s = 0; s < 7; ++s) {
            CHECK(lo[s] < hi[s]);
            CHECK(hi[s] < lo[s + 1]);
        }
    }
}

TEST_CASE("bessel zeros reject bad arguments") {
    CHECK_THROWS_AS(bessel::zeros(std::nan(""), 1), std::invalid_argument);
    CHECK_THROWS_AS(bessel::zeros(std::numeric_limits<double>::infinity(), 1), std::invalid_argument);
    CHECK_THROWS_AS(bessel::zeros(-1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(bessel::zeros(1.0, 0), std::invalid_argument);
}

TEST_CASE("sector eigenvalues: lowest levels") {
    const auto s = sector_eigenvalues(sixty(), 10.0);
    REQUIRE(s.size() >= 1);
    CHECK(s.values[0] == doctest::Approx(7.975202369904980).epsilon(1e-12));
    CHECK(s.labels[0] == ModeLabel{1, 1});

    const auto q = sector_eigenvalues(SectorGeometry(1.0, kPi / 2.0), 6.0);
    REQUIRE(q.size() >= 1);
    CHECK(q.values[0] == doctest::Approx(5.135622301840683).epsilon(1e-12));

    CHECK_THROWS_AS(sector_eigenvalues(sixty(), 0.0), std::invalid_argument);
    CHECK(sector_eigenvalues(sixty(), 5.0).empty());
}

TEST_CASE("sector count up to 4.6 GHz matches the exhaustive root-scan oracle") {
    const double k_max = frequency_to_wavevector(4.6e9);
    const auto s = sector_eigenvalues(sixty(), k_max);
    const std::size_t expected = oracle::sixty_degree_sector_count(0.8, k_max);
    CHECK(expected == 229);
    CHECK(s.size() == expected);
}

TEST_CASE("sector spectrum invariants") {
    const SectorGeometry g = sixty();
    const auto s = sector_eigenvalues(g, 125.0);   // kR = 100
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.values[i] > s.values[i - 1]);
    double worst = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        worst = std::max(worst, std::abs(bessel::cyl_j(g.order(s.labels[i].m), s.values[i] * g.radius())));
    }
    CHECK(worst < 1e-9);

    // Completeness: exact count from the independent root scan, and N_fluc has zero mean.
    CHECK(s.size() == oracle::sixty_degree_sector_count(g.radius(), 125.0));
    const double c = fit_weyl_constant(s.values, g.area(), g.perimeter());
    const WeylParams p{g.area(), g.perimeter(), c};
    double mean_fluct = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) mean_fluct += static_cast<double>(i) + 0.5 - weyl_count(s.values[i], p);
    CHECK(std::abs(mean_fluct / static_cast<double>(s.size())) < 1e-9);
}

TEST_CASE("weyl law") {
    const SectorGeometry g = sixty();
    const auto p = sector_weyl_params(g, 0.7);
    CHECK(weyl_count(0.0, p) == doctest::Approx(0.7));
    CHECK(p.area == doctest::Approx(0.33510321638291124).epsilon(1e-14));
    CHECK(p.perimeter == doctest::Approx(2.4377580409572781).epsilon(1e-14));
    // Dirichlet sign of the perimeter term.
    CHECK(weyl_count(10.0, p) == doctest::Approx(p.area * 100.0 / (4 * kPi) - p.perimeter * 10.0 / (4 * kPi) + 0.7));

    const auto s = sector_eigenvalues(g, frequency_to_wavevector(4.6e9));
    const WeylParams fitted{g.area(), g.perimeter(), fit_weyl_constant(s.values, g.area(), g.perimeter())};
    CHECK(std::abs(weyl_count(frequency_to_wavevector(4.6e9), fitted) - static_cast<double>(s.size())) < 3.0);
    // The fitted constant sits near the corner-and-curvature estimate.
    CHECK(std::abs(fitted.constant - sector_corner_constant(g)) < 0.5);
}

TEST_CASE("sector wavefunction") {
    const SectorGeometry g = sixty();
    const auto s = sector_eigenvalues(g, 40.0);
    const FieldMap m = sector_wavefunction(g, s, {1, 1}, 0.01);

    double peak = 0.0;
    std::size_t peaks = 0;
    for (std::size_t iy = 0; iy < m.ny; ++iy) {
        for (std::size_t ix = 0; ix < m.nx; ++ix) {
            if (!m.in_domain(ix, iy)) {
                CHECK(m.at(ix, iy) == 0.0);
                continue;
            }
            CHECK(m.at(ix, iy) >= 0.0);
            peak = std::max(peak, m.at(ix, iy));
        }
    }
    // Interior local maxima of the ground mode: exactly one.
    for (std::size_t iy = 1; iy + 1 < m.ny; ++iy) {
        for (std::size_t ix = 1; ix + 1 < m.nx; ++ix) {
            if (!m.in_domain(ix, iy)) continue;
            const double v = m.at(ix, iy);
            bool is_max = v > 0.0;
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if ((dx || dy) && m.at(ix + dx, iy + dy) > v) is_max = false;
                }
            }
            peaks += is_max ? 1 : 0;
        }
    }
    CHECK(peaks == 1);
    CHECK(peak > 0.0);

    // Exact zeros on both straight walls.
    const double k11 = s.values[0];
    for (double r : {0.1, 0.3, 0.5, 0.79}) {
        CHECK(sector_mode_value(g, {1, 1}, k11, r, 0.0) == 0.0);
        CHECK(sector_mode_value(g, {1, 1}, k11, r, g.opening_angle()) == 0.0);
    }
    // Arc: relative to the peak amplitude.
    const double amp = std::sqrt(peak);
    for (double phi : {0.1, 0.5, 0.9}) {
        CHECK(std::abs(sector_mode_value(g, {1, 1}, k11, g.radius(), phi)) < 1e-10 * amp);
    }
    // Mode (2,1): one nodal ray at theta/2.
    const auto it = std::find(s.labels.begin(), s.labels.end(), ModeLabel{2, 1});
    REQUIRE(it != s.labels.end());
    const double k21 = s.values[static_cast<std::size_t>(it - s.labels.begin())];
    for (double r : {0.2, 0.4, 0.6}) {
        CHECK(sector_mode_value(g, {2, 1}, k21, r, g.opening_angle() / 2.0) == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(sector_mode_value(g, {2, 1}, k21, r, g.opening_angle() / 4.0) *
                  sector_mode_value(g, {2, 1}, k21, r, 3.0 * g.opening_angle() / 4.0) < 0.0);
    }
    CHECK_THROWS_AS(sector_wavefunction(g, s, {40, 1}, 0.01), NotFoundError);
}

TEST_CASE("mode normalization integrates to one") {
    const SectorGeometry g = sixty();
    const auto s = sector_eigenvalues(g, 30.0);
    const FieldMap m = sector_wavefunction(g, s, {1, 2}, 0.002);
    double sum = 0.0;
    for (double v : m.values) sum += v;
    CHECK(sum * m.spacing * m.spacing == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("disk scatterer validation") {
    const SectorGeometry g = sixty();
    std::vector<DiskScatterer> ok{{0.64, 0.4, 0.024}, {0.52, 0.52, 0.032}, {0.64, 0.08, 0.04}};
    CHECK_NOTHROW(validate_scatterers(g, ok));
    std::vector<DiskScatterer> outside{{0.64, 0.01, 0.02}};
    CHECK_THROWS_AS(validate_scatterers(g, outside), std::invalid_argument);
    std::vector<DiskScatterer> overlap{{0.5, 0.2, 0.05}, {0.55, 0.2, 0.05}};
    CHECK_THROWS_AS(validate_scatterers(g, overlap), std::invalid_argument);
    std::vector<DiskScatterer> arc{{0.78, 0.1, 0.03}};
    CHECK_THROWS_AS(validate_scatterers(g, arc), std::invalid_argument);
}

TEST_CASE("point scatterer: interlacing and limits") {
    const SectorGeometry g = sixty();
    const double k_max = 60.0;
    const auto base = sector_eigenvalues(g, 2.0 * k_max);
    const auto w = mode_intensities_at(g, base, 0.64, 0.4);
    const auto out = point_scatterer_spectrum(base, w, 5.0, k_max);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out.values[i] > out.values[i - 1]);

    std::vector<double> coupled;
    const double wmax = *std::max_element(w.begin(), w.end());
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (w[i] > 1e-14 * wmax) coupled.push_back(base.values[i]);
    }
    // Each interval between consecutive coupled poles holds exactly one root.
    for (std::size_t i = 0; i + 1 < coupled.size() && coupled[i + 1] <= k_max; ++i) {
        const auto n = std::count_if(out.values.begin(), out.values.end(), [&](double k) {
            return k > coupled[i] && k < coupled[i + 1];
        });
        CHECK(n == 1);
    }

    // Weak coupling: roots approach the base eigenvalues.
    const auto weak = point_scatterer_spectrum(base, w, 1e-9, k_max);
    REQUIRE(weak.size() == sector_eigenvalues(g, k_max).size());
    for (std::size_t i = 0; i < weak.size(); ++i) {
        CHECK(weak.values[i] == doctest::Approx(sector_eigenvalues(g, k_max).values[i]).epsilon(1e-6));
    }
    // The F = 0 limit is reachable with an infinite coupling.
    CHECK_NOTHROW(point_scatterer_spectrum(base, w, std::numeric_limits<double>::infinity(), k_max));
    CHECK_THROWS_AS(point_scatterer_spectrum(base, w, 0.0, k_max), std::invalid_argument);

    WavevectorSpectrum unsorted = base;
    std::swap(unsorted.values[0], unsorted.values[1]);
    CHECK_THROWS_AS(point_scatterer_spectrum(unsorted, w, 5.0, k_max), std::invalid_argument);
}

TEST_CASE("point scatterer: converged under truncation doubling") {
    const SectorGeometry g = sixty();
    auto run = [&](double truncation) {
        PointScattererOptions o;
        o.truncation = truncation;
        return sector_with_point_scatterer(g, 0.64, 0.4, 10.0 / 3.0, 50.0, o);
    };
    const auto s4 = run(4.0);
    const auto s8 = run(8.0);
    const auto s16 = run(16.0);
    REQUIRE(s4.size() == s8.size());
    REQUIRE(s8.size() == s16.size());
    auto worst = [](const WavevectorSpectrum& a, const WavevectorSpectrum& b) {
        double w = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a.values[i] - b.values[i]));
        return w;
    };
    const double d1 = worst(s4, s8);
    const double d2 = worst(s8, s16);
    CHECK(d2 < 0.6 * d1);
    const double spacing = (s4.values.back() - s4.values.front()) / static_cast<double>(s4.size());
    CHECK(d1 < 0.1 * spacing);
}

TEST_CASE("frequency conversion uses the exact speed of light") {
    CHECK(kSpeedOfLight == 299792458.0);
    CHECK(wavevector_to_frequency(frequency_to_wavevector(4.6e9)) == doctest::Approx(4.6e9).epsilon(1e-15));
    CHECK(wavevector_to_frequency(7.975202369904980) == doctest::Approx(7.975202369904980 * 299792458.0 / (2 * kPi)));
}
