#include "mwb/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mwb/bessel.hpp"

namespace mwb {

StrengthResult strengths(std::span<const Resonance> resonances, std::size_t neighbours) {
    if (neighbours < 1) throw std::invalid_argument("strengths: neighbour count must be >= 1");
    StrengthResult out;
    std::vector<StrengthSample> kept;
    for (const auto& r : resonances) {
        if (!(r.amplitude > 0.0)) {
            out.warnings.push_back("resonance at " + std::to_string(r.center) + " Hz has zero amplitude; dropped");
            continue;
        }
        kept.push_back({r.center, r.amplitude * r.amplitude, 0.0});
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
    const std::size_t n = kept.size();
    const std::size_t w = std::min(neighbours, n);
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + kept[i].y;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i >= w / 2 ? i - w / 2 : 0;
        lo = std::min(lo, n - w);
        kept[i].y /= (prefix[lo + w] - prefix[lo]) / static_cast<double>(w);
        kept[i].z = std::log10(kept[i].y);
    }
    out.samples = std::move(kept);
    return out;
}

double k0_strength_density(double y) {
    if (!(y > 0.0)) return 0.0;
    const double s = std::sqrt(y);
    return bessel::k0(s) / (std::numbers::pi * s);
}

double k0_strength_value(double z) {
    const double u = std::pow(10.0, z);
    const double s = std::sqrt(u);
    if (s > 700.0) return 0.0;
    return std::numbers::ln10 * s * bessel::k0(s) / std::numbers::pi;
}

StatCurve k0_strength_pdf(std::span<const double> z_grid) {
    StatCurve out;
    out.abscissa.assign(z_grid.begin(), z_grid.end());
    for (double z : z_grid) out.ordinate.push_back(k0_strength_value(z));
    return out;
}

StatCurve strength_histogram(std::span<const double> z, double z_min, double z_max, double bin_width) {
    if (!(bin_width > 0.0) || !(z_max > z_min)) {
        throw std::invalid_argument("strength_histogram: invalid binning");
    }
    const auto bins = static_cast<std::size_t>(std::llround((z_max - z_min) / bin_width));
    StatCurve out;
    out.counts.assign(bins, 0);
    std::size_t outside = 0;
    for (double v : z) {
        if (v < z_min || v >= z_max) {
            ++outside;
            continue;
        }
        const auto b = std::min(bins - 1, static_cast<std::size_t>((v - z_min) / bin_width));
        out.counts[b] += 1;
    }
    const double n = static_cast<double>(z.size());
    for (std::size_t b = 0; b < bins; ++b) {
        out.abscissa.push_back(z_min + (static_cast<double>(b) + 0.5) * bin_width);
        out.ordinate.push_back(n > 0.0 ? static_cast<double>(out.counts[b]) / (n * bin_width) : 0.0);
    }
    if (outside > 0) {
        out.warnings.push_back(std::to_string(outside) + " samples outside the histogram range");
    }
    return out;
}

double strength_chi_square_pvalue(const StatCurve& histogram) {
    if (histogram.size() < 2) throw std::invalid_argument("strength_chi_square_pvalue: need >= 2 bins");
    const double h = histogram.abscissa[1] - histogram.abscissa[0];
    std::vector<double> mass;
    double total_mass = 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < histogram.size(); ++b) {
        const double lo = histogram.abscissa[b] - 0.5 * h;
        const double m = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [](double z) { return k0_strength_value(z); }, lo, lo + h);
        mass.push_back(m);
        total_mass += m;
        total += static_cast<double>(histogram.counts[b]);
    }
    double chi2 = 0.0;
    int groups = 0;
    double obs = 0.0;
    double expected = 0.0;
    for (std::size_t b = 0; b < histogram.size(); ++b) {
        obs += static_cast<double>(histogram.counts[b]);
        expected += total * mass[b] / total_mass;
        if (expected >= 5.0) {
            chi2 += (obs - expected) * (obs - expected) / expected;
            ++groups;
            obs = expected = 0.0;
        }
    }
    if (expected > 0.0) {
        chi2 += (obs - expected) * (obs - expected) / expected;
        ++groups;
    }
    if (groups < 2) throw std::invalid_argument("strength_chi_square_pvalue: too few populated bins");
    const boost::math::chi_squared dist(groups - 1);
    return boost::math::cdf(boost::math::complement(dist, chi2));
}

FieldMap field_intensity_from_shift(const FieldMap& shift, double f0, double c1, bool normalize) {
    if (c1 == 0.0) throw std::invalid_argument("field_intensity_from_shift: c1 must be nonzero");
    if (!(f0 > 0.0)) throw std::invalid_argument("field_intensity_from_shift: f0 must be positive");
    FieldMap out = shift;
    double peak = 0.0;
    for (auto& v : out.values) {
        v = std::max(0.0, v / (f0 * c1));
        peak = std::max(peak, v);
    }
    if (normalize && peak > 0.0) {
        for (auto& v : out.values) v /= peak;
    }
    return out;
}

}  // namespace mwb
