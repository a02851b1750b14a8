#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mwb/billiard.hpp"
#include "mwb/resonance.hpp"
#include "oracles.hpp"

using namespace mwb;
using cd = std::complex<double>;

namespace {

std::vector<double> uniform_grid(double lo, double hi, double step) {
    std::vector<double> f;
    for (double x = lo; x <= hi + 0.5 * step; x += step) f.push_back(x);
    return f;
}

Resonance make(double center, double width, double amplitude, int sign = 1) {
    Resonance r;
    r.center = center;
    r.width = width;
    r.amplitude = amplitude;
    r.sign = sign;
    return r;
}

ComplexTrace with_noise(ComplexTrace t, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& v : t.values) v += cd(n(rng), n(rng));
    return t;
}

}  // namespace

TEST_CASE("breit-wigner model") {
    const double gamma = 2e6;
    const std::vector<Resonance> one{make(3e9, gamma, 0.7e6)};
    const std::vector<double> f{3e9, 3e9 + 1e9};
    const auto off = breit_wigner_model(one, false, f);
    CHECK(std::abs(off.values[0]) == doctest::Approx(0.7e6 / (gamma / 2)));
    CHECK(off.values[0].real() == doctest::Approx(-0.7));
    CHECK(std::abs(off.values[1]) < 1e-2);

    // Lossless single-channel resonance: S = -1 at the center, |S| = 1 everywhere.
    const std::vector<Resonance> lossless{make(3e9, gamma, gamma)};
    const auto grid = uniform_grid(3e9 - 10 * gamma, 3e9 + 10 * gamma, gamma / 7);
    const auto diag = breit_wigner_model(lossless, true, grid);
    for (const auto& v : diag.values) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));
    const auto at = breit_wigner_model(lossless, true, std::vector<double>{3e9});
    CHECK(at.values[0].real() == doctest::Approx(-1.0));

    const std::vector<Resonance> zero{make(3e9, gamma, 0.0)};
    for (const auto& v : breit_wigner_model(zero, true, grid).values) CHECK(v == cd(1.0, 0.0));
    for (const auto& v : breit_wigner_model(zero, false, grid).values) CHECK(v == cd(0.0, 0.0));
}

TEST_CASE("peak detection") {
    const double gamma = 4e6;
    const auto grid = uniform_grid(1e9, 1.2e9, gamma / 10);
    const std::vector<Resonance> two{make(1.05e9, gamma, 0.3 * gamma), make(1.15e9, 1.5 * gamma, 0.2 * gamma, -1)};
    auto trace = breit_wigner_model(two, false, grid);
    const auto guesses = detect_peaks(trace, 0.05);
    REQUIRE(guesses.size() == 2);
    CHECK(guesses[0].center == doctest::Approx(1.05e9).epsilon(gamma / 10 / 1.05e9));
    CHECK(guesses[1].center == doctest::Approx(1.15e9).epsilon(gamma / 10 / 1.15e9));
    CHECK(guesses[0].width == doctest::Approx(gamma).epsilon(0.2));
    CHECK(guesses[0].amplitude > 0.0);
    CHECK(guesses[1].amplitude < 0.0);

    ComplexTrace flat;
    flat.frequencies = grid;
    flat.values.assign(grid.size(), cd(0.2, -0.1));
    CHECK(detect_peaks(flat, 0.05).empty());

    const std::vector<Resonance> close{make(1.1e9, gamma, 0.3 * gamma), make(1.1e9 + 5 * gamma, gamma, 0.3 * gamma)};
    CHECK(detect_peaks(breit_wigner_model(close, false, grid), 0.05).size() == 2);

    // Diagonal traces are judged against the background.
    const auto refl = breit_wigner_model(two, true, grid);
    CHECK(detect_peaks(refl, 0.05).size() == 2);
}

TEST_CASE("fit: noiseless round trip") {
    const double gamma = 3e6;
    std::vector<Resonance> truth;
    for (int i = 0; i < 12; ++i) {
        truth.push_back(make(2e9 + i * 8 * gamma + (i % 3) * gamma, gamma * (0.8 + 0.05 * i),
                             gamma * (0.1 + 0.03 * i), i % 2 ? -1 : 1));
    }
    const auto grid = uniform_grid(2e9 - 10 * gamma, 2e9 + 110 * gamma, gamma / 8);
    const auto trace = breit_wigner_model(truth, false, grid);
    std::vector<PeakGuess> guesses;
    for (const auto& r : truth) guesses.push_back({r.center + 0.1 * r.width, 1.2 * r.width, 0.8 * r.signed_amplitude()});
    const auto fit = fit_resonances(trace, guesses);
    REQUIRE(fit.resonances.size() == truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        CHECK(std::abs(fit.resonances[i].center - truth[i].center) < 1e-6 * truth[i].width);
        CHECK(fit.resonances[i].width == doctest::Approx(truth[i].width).epsilon(1e-4));
        CHECK(fit.resonances[i].amplitude == doctest::Approx(truth[i].amplitude).epsilon(1e-4));
        CHECK(fit.resonances[i].sign == truth[i].sign);
        CHECK(fit.resonances[i].converged);
    }
    for (const auto& rep : fit.reports) {
        REQUIRE_FALSE(rep.cost_history.empty());
        for (std::size_t i = 1; i < rep.cost_history.size(); ++i) CHECK(rep.cost_history[i] <= rep.cost_history[i - 1]);
    }
}

TEST_CASE("fit: noisy single resonance") {
    const double gamma = 5e6;
    const Resonance r = make(5e9, gamma, 0.5 * gamma);
    const auto grid = uniform_grid(5e9 - 10 * gamma, 5e9 + 10 * gamma, gamma / 10);
    const auto clean = breit_wigner_model(std::vector<Resonance>{r}, false, grid);
    std::mt19937_64 rng(2024);
    double sq = 0.0;
    int converged = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const auto noisy = with_noise(clean, 0.01, rng);
        const std::vector<PeakGuess> g{{r.center + 0.2 * gamma, 1.3 * gamma, 0.7 * r.amplitude}};
        const auto fit = fit_resonances(noisy, g);
        REQUIRE(fit.resonances.size() == 1);
        const double d = fit.resonances[0].center - r.center;
        sq += d * d;
        converged += fit.resonances[0].converged ? 1 : 0;
        CHECK(fit.resonances[0].center_sigma > 0.0);
    }
    CHECK(std::sqrt(sq / 100) < gamma / 50);
    CHECK(converged == 100);
}

TEST_CASE("fit: overlapping pair at spacing of one width") {
    const double gamma = 4e6;
    const std::vector<Resonance> truth{make(3e9, gamma, 0.3 * gamma), make(3e9 + gamma, gamma, 0.25 * gamma, -1)};
    const auto grid = uniform_grid(3e9 - 12 * gamma, 3e9 + 12 * gamma, gamma / 10);
    const auto trace = breit_wigner_model(truth, false, grid);
    const std::vector<PeakGuess> g{{3e9 - 0.3 * gamma, 1.2 * gamma, 0.2 * gamma}, {3e9 + 1.3 * gamma, 0.8 * gamma, -0.2 * gamma}};
    const auto fit = fit_resonances(trace, g);
    REQUIRE(fit.resonances.size() == 2);
    REQUIRE(fit.reports.size() == 1);
    CHECK(fit.reports[0].members.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(fit.resonances[i].center - truth[i].center) < gamma / 10);
}

TEST_CASE("fit: invalid input") {
    ComplexTrace t;
    t.frequencies = {1.0, 0.5};
    t.values = {cd(0.0), cd(0.0)};
    const std::vector<PeakGuess> g{{0.7, 0.1, 0.1}};
    CHECK_THROWS_AS(fit_resonances(t, g), std::invalid_argument);
    ComplexTrace empty;
    CHECK(fit_trace_windows(empty).resonances.empty());
}

TEST_CASE("fit_trace_windows sorts by center") {
    const double gamma = 3e6;
    std::vector<Resonance> truth;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double f = 2.01e9;
    for (int i = 0; i < 50; ++i) {
        f += (6.0 + 6.0 * u(rng)) * gamma;
        truth.push_back(make(f, gamma, (0.2 + 0.2 * u(rng)) * gamma, u(rng) < 0.5 ? 1 : -1));
    }
    const auto grid = uniform_grid(2e9, f + 10 * gamma, gamma / 8);
    WindowFitOptions opt;
    opt.window_hz = 0.1e9;
    const auto fit = fit_trace_windows(breit_wigner_model(truth, false, grid), opt);
    REQUIRE(fit.resonances.size() == truth.size());
    for (std::size_t i = 1; i < fit.resonances.size(); ++i) CHECK(fit.resonances[i].center > fit.resonances[i - 1].center);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK(std::abs(fit.resonances[i].center - truth[i].center) < 1e-3 * gamma);
}

TEST_CASE("strengths") {
    std::vector<Resonance> equal;
    for (int i = 0; i < 30; ++i) equal.push_back(make(1e9 + i * 1e7, 1e6, 3e5));
    for (const auto& s : strengths(equal).samples) {
        CHECK(s.y == doctest::Approx(1.0));
        CHECK(s.z == doctest::Approx(0.0));
    }

    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Resonance> random;
    for (int i = 0; i < 200; ++i) {
        const double a = g(rng) * g(rng);
        random.push_back(make(1e9 + i * 1e7, 1e6, std::abs(a) * 1e5 + 1.0, a < 0 ? -1 : 1));
    }
    auto scaled = random;
    for (auto& r : scaled) r.amplitude *= 100.0;
    const auto a = strengths(random, 10).samples;
    const auto b = strengths(scaled, 10).samples;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].z == doctest::Approx(b[i].z).epsilon(1e-12));
    // The first six samples share the clipped window [0, 10).
    double window_mean = 0.0;
    for (std::size_t i = 0; i < 10; ++i) window_mean += random[i].amplitude * random[i].amplitude / 10.0;
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a[i].y * window_mean == doctest::Approx(random[i].amplitude * random[i].amplitude).epsilon(1e-12));
    }

    CHECK(strengths(std::vector<Resonance>{}).samples.empty());
}

TEST_CASE("products of Gaussian amplitudes follow the K0 law") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Resonance> res;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double a = g(rng) * g(rng);
        res.push_back(make(1e9 + i * 1e6, 1e5, std::abs(a), a < 0 ? -1 : 1));
    }
    const auto s = strengths(res, n);
    std::vector<double> z;
    for (const auto& x : s.samples) z.push_back(x.z);
    const auto h = strength_histogram(z, -8.0, 3.0, 0.1);
    CHECK(strength_chi_square_pvalue(h) > 0.01);

    // Porter-Thomas intensities (one Gaussian squared) are rejected.
    std::vector<Resonance> pt;
    for (int i = 0; i < n; ++i) pt.push_back(make(1e9 + i * 1e6, 1e5, std::abs(g(rng))));
    std::vector<double> zpt;
    for (const auto& x : strengths(pt, n).samples) zpt.push_back(x.z);
    CHECK(strength_chi_square_pvalue(strength_histogram(zpt, -8.0, 3.0, 0.1)) < 1e-6);
}

TEST_CASE("K0 strength density") {
    // Normalization and unit mean of y; y = t^2, t = e^u keeps the integrand smooth.
    double norm = 0.0;
    double mean = 0.0;
    const double h = 1e-3;
    for (double u = -40.0; u < 5.0; u += h) {
        const double t = std::exp(u + 0.5 * h);
        const double w = k0_strength_density(t * t) * 2 * t * t * h;
        norm += w;
        mean += w * t * t;
    }
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-6));

    for (double x : {0.05, 0.3, 1.0, 2.5, 7.0}) {
        CHECK(k0_strength_density(x * x) == doctest::Approx(oracle::k0_integral(x) / (std::numbers::pi * x)).epsilon(1e-9));
    }
    // P(z) integrates to one.
    double pz = 0.0;
    for (double z = -20.0; z < 4.0; z += 1e-4) pz += k0_strength_value(z + 0.5e-4) * 1e-4;
    CHECK(pz == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(k0_strength_value(6.0) == 0.0);
    const std::vector<double> grid{-2.0, 0.0};
    const auto c = k0_strength_pdf(grid);
    CHECK(c.ordinate[1] == doctest::Approx(k0_strength_value(0.0)));
}

TEST_CASE("strength histogram") {
    const std::vector<double> z{-1.05, -1.05, 0.05, 5.0};
    const auto h = strength_histogram(z, -2.0, 1.0, 0.1);
    CHECK(h.size() == 30);
    long total = 0;
    for (long c : h.counts) total += c;
    CHECK(total == 3);
    CHECK_FALSE(h.warnings.empty());
    CHECK_THROWS_AS(strength_histogram(z, 1.0, -1.0, 0.1), std::invalid_argument);
}

TEST_CASE("field intensity from frequency shift") {
    FieldMap zero(0, 0, 0.01, 5, 4);
    const auto z = field_intensity_from_shift(zero, 3e9, -2.0);
    for (double v : z.values) CHECK(v == 0.0);

    FieldMap lin(0, 0, 0.01, 5, 4);
    for (std::size_t i = 0; i < lin.values.size(); ++i) lin.values[i] = 1e6 * static_cast<double>(i);
    const auto e = field_intensity_from_shift(lin, 2e9, 5e-3);
    for (std::size_t i = 0; i < e.values.size(); ++i) CHECK(e.values[i] == doctest::Approx(1e6 * i / (2e9 * 5e-3)));
    const auto en = field_intensity_from_shift(lin, 2e9, 5e-3, true);
    CHECK(*std::max_element(en.values.begin(), en.values.end()) == doctest::Approx(1.0));

    // Shift generated from a mode intensity inverts to the mode.
    const SectorGeometry g(0.8, std::numbers::pi / 3);
    const auto s = sector_eigenvalues(g, 40.0);
    const auto mode = sector_wavefunction(g, s, {2, 3}, 0.01);
    auto shift = mode;
    const double f0 = 4e9;
    const double c1 = 1.7e-4;
    for (auto& v : shift.values) v *= f0 * c1;
    const auto back = field_intensity_from_shift(shift, f0, c1);
    for (std::size_t i = 0; i < back.values.size(); ++i) {
        CHECK(std::abs(back.values[i] - mode.values[i]) <= 1e-12 * std::max(1.0, mode.values[i]));
    }
    CHECK_THROWS_AS(field_intensity_from_shift(lin, 2e9, 0.0), std::invalid_argument);
}

TEST_CASE("reciprocity report") {
    ResonanceSet ab;
    ResonanceSet ba;
    ab.resonances = {make(1e9, 1e6, 2e5), make(1.1e9, 1e6, 3e5)};
    ba.resonances = {make(1e9 + 1e5, 1e6, 2.02e5), make(1.3e9, 1e6, 1e5)};
    const auto rep = reciprocity_report(ab, ba);
    REQUIRE(rep.size() == 1);
    CHECK(rep[0].relative_difference == doctest::Approx(0.02 / 2.01).epsilon(1e-3));
}
