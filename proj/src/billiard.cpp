#include "mwb/billiard.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include <boost/math/special_functions/sin_pi.hpp>
#include <boost/math/tools/roots.hpp>

#include "mwb/bessel.hpp"
#include "mwb/errors.hpp"

namespace mwb {

namespace {

constexpr double kPi = std::numbers::pi;

double polar_angle(double x, double y) {
    double phi = std::atan2(y, x);
    if (phi < 0.0) phi += 2.0 * kPi;
    return phi;
}

double mode_norm_squared(const SectorGeometry& geom, ModeLabel label, double k) {
    // Integral of sin^2 over the opening gives theta/2; the radial integral at
    // a zero of J_mu(kR) is R^2 J_{mu+1}(kR)^2 / 2.
    const double mu = geom.order(label.m);
    const double jp = bessel::cyl_j(mu + 1.0, k * geom.radius());
    const double r2 = geom.radius() * geom.radius();
    return 4.0 / (geom.opening_angle() * r2 * jp * jp);
}

// Distance from (px, py) to the segment joining the origin and (ex, ey).
double segment_distance(double px, double py, double ex, double ey) {
    const double t = std::clamp((px * ex + py * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    return std::hypot(px - t * ex, py - t * ey);
}

void require_ascending(std::span<const double> values, const char* what) {
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (!(values[i] > values[i - 1])) {
            throw std::invalid_argument(std::string(what) + ": values must be strictly ascending");
        }
    }
}

}  // namespace

SectorGeometry::SectorGeometry(double radius, double opening_angle)
    : radius_(radius), opening_angle_(opening_angle) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw std::invalid_argument("sector radius must be positive");
    }
    if (!(opening_angle > 0.0 && opening_angle < 2.0 * kPi)) {
        throw std::invalid_argument("sector opening angle must lie in (0, 2 pi)");
    }
}

double SectorGeometry::area() const { return 0.5 * opening_angle_ * radius_ * radius_; }

double SectorGeometry::perimeter() const { return radius_ * (2.0 + opening_angle_); }

bool SectorGeometry::contains(double x, double y) const {
    const double r = std::hypot(x, y);
    if (r >= radius_ || r == 0.0) return false;
    const double phi = polar_angle(x, y);
    return phi > 0.0 && phi < opening_angle_;
}

double SectorGeometry::order(int m) const { return m * kPi / opening_angle_; }

void validate_scatterers(const SectorGeometry& geom, std::span<const DiskScatterer> disks) {
    for (std::size_t i = 0; i < disks.size(); ++i) {
        const auto& d = disks[i];
        if (!(d.radius > 0.0)) {
            throw std::invalid_argument("scatterer " + std::to_string(i + 1) + ": radius must be positive");
        }
        const double theta = geom.opening_angle();
        const double R = geom.radius();
        const bool inside = geom.contains(d.x, d.y) && R - std::hypot(d.x, d.y) > d.radius &&
                            segment_distance(d.x, d.y, R, 0.0) > d.radius &&
                            segment_distance(d.x, d.y, R * std::cos(theta), R * std::sin(theta)) > d.radius;
        if (!inside) {
            throw std::invalid_argument("scatterer " + std::to_string(i + 1) + " does not lie strictly inside the sector");
        }
        for (std::size_t j = 0; j < i; ++j) {
            const double gap = std::hypot(d.x - disks[j].x, d.y - disks[j].y);
            if (gap <= d.radius + disks[j].radius) {
                throw std::invalid_argument("scatterers " + std::to_string(j + 1) + " and " +
                                            std::to_string(i + 1) + " overlap");
            }
        }
    }
}

double weyl_count(double k, const WeylParams& p) {
    return p.area / (4.0 * kPi) * k * k - p.perimeter / (4.0 * kPi) * k + p.constant;
}

WeylParams sector_weyl_params(const SectorGeometry& geom, double constant) {
    return {geom.area(), geom.perimeter(), constant};
}

double sector_corner_constant(const SectorGeometry& geom) {
    auto corner = [](double a) { return (kPi * kPi - a * a) / (24.0 * kPi * a); };
    const double theta = geom.opening_angle();
    return corner(theta) + 2.0 * corner(kPi / 2.0) + theta / (12.0 * kPi);
}

double fit_weyl_constant(std::span<const double> wavevectors, double area, double perimeter) {
    if (wavevectors.empty()) {
        throw std::invalid_argument("fit_weyl_constant: empty spectrum");
    }
    const WeylParams smooth{area, perimeter, 0.0};
    double sum = 0.0;
    for (std::size_t n = 0; n < wavevectors.size(); ++n) {
        sum += (static_cast<double>(n) + 0.5) - weyl_count(wavevectors[n], smooth);
    }
    return sum / static_cast<double>(wavevectors.size());
}

WavevectorSpectrum sector_eigenvalues(const SectorGeometry& geom, double k_max) {
    if (!(k_max > 0.0) || !std::isfinite(k_max)) {
        throw std::invalid_argument("sector_eigenvalues: k_max must be positive");
    }
    const double x_max = k_max * geom.radius();
    std::vector<std::pair<double, ModeLabel>> found;
    for (int m = 1;; ++m) {
        const auto z = bessel::zeros_below(geom.order(m), x_max);
        // The first zero grows with the order, so an empty order ends the scan.
        if (z.empty()) break;
        for (std::size_t s = 0; s < z.size(); ++s) {
            found.emplace_back(z[s] / geom.radius(), ModeLabel{m, static_cast<int>(s) + 1});
        }
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    WavevectorSpectrum out;
    out.values.reserve(found.size());
    out.labels.reserve(found.size());
    for (const auto& [k, label] : found) {
        out.values.push_back(k);
        out.labels.push_back(label);
    }
    return out;
}

double sector_mode_value(const SectorGeometry& geom, ModeLabel label, double k, double r, double phi) {
    const double angular = boost::math::sin_pi(label.m * (phi / geom.opening_angle()));
    if (angular == 0.0) return 0.0;
    const double radial = bessel::cyl_j(geom.order(label.m), k * r);
    return std::sqrt(mode_norm_squared(geom, label, k)) * angular * radial;
}

FieldMap sector_wavefunction(const SectorGeometry& geom, const WavevectorSpectrum& spectrum,
                             ModeLabel label, double spacing) {
    if (!(spacing > 0.0)) {
        throw std::invalid_argument("sector_wavefunction: grid spacing must be positive");
    }
    const auto it = std::find(spectrum.labels.begin(), spectrum.labels.end(), label);
    if (it == spectrum.labels.end()) {
        throw NotFoundError("sector_wavefunction: no eigenvalue labelled (" + std::to_string(label.m) +
                            ", " + std::to_string(label.nu) + ")");
    }
    const double k = spectrum.values[static_cast<std::size_t>(it - spectrum.labels.begin())];

    // Bounding box: apex, both wall ends and any axis crossing of the arc.
    const double R = geom.radius();
    const double theta = geom.opening_angle();
    double xmin = std::min({0.0, R, R * std::cos(theta)});
    double xmax = std::max({0.0, R, R * std::cos(theta)});
    double ymin = std::min({0.0, R * std::sin(theta)});
    double ymax = std::max({0.0, R * std::sin(theta)});
    for (double a : {kPi / 2.0, kPi, 1.5 * kPi}) {
        if (a < theta) {
            xmin = std::min(xmin, R * std::cos(a));
            xmax = std::max(xmax, R * std::cos(a));
            ymin = std::min(ymin, R * std::sin(a));
            ymax = std::max(ymax, R * std::sin(a));
        }
    }
    const auto nx = static_cast<std::size_t>(std::floor((xmax - xmin) / spacing + 1e-9)) + 1;
    const auto ny = static_cast<std::size_t>(std::floor((ymax - ymin) / spacing + 1e-9)) + 1;
    FieldMap map(xmin, ymin, spacing, nx, ny);
    const double norm = std::sqrt(mode_norm_squared(geom, label, k));
    const double mu = geom.order(label.m);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double x = map.x(ix);
            const double y = map.y(iy);
            const double r = std::hypot(x, y);
            const double phi = polar_angle(x, y);
            const bool in = r <= R && phi <= theta;
            map.inside[map.index(ix, iy)] = in ? 1 : 0;
            if (!in) continue;
            const double angular = boost::math::sin_pi(label.m * (phi / theta));
            const double psi = angular == 0.0 ? 0.0 : norm * angular * bessel::cyl_j(mu, k * r);
            map.at(ix, iy) = psi * psi;
        }
    }
    return map;
}

std::vector<double> mode_intensities_at(const SectorGeometry& geom, const WavevectorSpectrum& spectrum,
                                        double x, double y) {
    if (!spectrum.labelled()) {
        throw std::invalid_argument("mode_intensities_at: spectrum carries no mode labels");
    }
    const double r = std::hypot(x, y);
    const double phi = polar_angle(x, y);
    std::vector<double> out(spectrum.size());
    for (std::size_t n = 0; n < spectrum.size(); ++n) {
        const double psi = sector_mode_value(geom, spectrum.labels[n], spectrum.values[n], r, phi);
        out[n] = psi * psi;
    }
    return out;
}

WavevectorSpectrum point_scatterer_spectrum(const WavevectorSpectrum& base,
                                            std::span<const double> mode_intensities,
                                            double coupling, double k_max,
                                            const PointScattererOptions& options) {
    if (std::isnan(coupling) || coupling == 0.0) {
        throw std::invalid_argument("point_scatterer_spectrum: coupling must be nonzero (use the base spectrum)");
    }
    if (!(k_max > 0.0)) {
        throw std::invalid_argument("point_scatterer_spectrum: k_max must be positive");
    }
    if (mode_intensities.size() != base.size()) {
        throw std::invalid_argument("point_scatterer_spectrum: one intensity per base level required");
    }
    require_ascending(base.values, "point_scatterer_spectrum");

    const double target = 1.0 / coupling;
    const double x_cut = options.truncation * k_max * k_max;
    double w_max = 0.0;
    for (std::size_t n = 0; n < base.size(); ++n) {
        if (base.values[n] * base.values[n] <= x_cut) w_max = std::max(w_max, mode_intensities[n]);
    }

    std::vector<double> poles;
    std::vector<double> weights;
    std::vector<double> out;
    for (std::size_t n = 0; n < base.size(); ++n) {
        const double x = base.values[n] * base.values[n];
        if (x > x_cut) break;
        if (mode_intensities[n] < 0.0) {
            throw std::invalid_argument("point_scatterer_spectrum: intensities must be nonnegative");
        }
        if (mode_intensities[n] > options.relative_cutoff * w_max) {
            poles.push_back(x);
            weights.push_back(mode_intensities[n]);
        } else if (base.values[n] <= k_max) {
            // A mode with a node at the scatterer is left untouched.
            out.push_back(base.values[n]);
        }
    }

    double subtraction = 0.0;
    for (std::size_t n = 0; n < poles.size(); ++n) {
        subtraction += weights[n] * poles[n] / (1.0 + poles[n] * poles[n]);
    }
    auto g = [&](double x) {
        double s = subtraction - target;
        for (std::size_t n = 0; n < poles.size(); ++n) s += weights[n] / (x - poles[n]);
        return s;
    };
    auto solve = [&](double lo, double hi) {
        std::uintmax_t max_iter = 300;
        boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 2);
        auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, tol, max_iter);
        return 0.5 * (a + b);
    };

    const double x_limit = k_max * k_max;
    if (!poles.empty() && g(0.0) > 0.0) {
        double hi = 0.75 * poles.front();
        while (g(hi) > 0.0) hi = poles.front() - 0.01 * (poles.front() - hi);
        const double x = solve(0.0, hi);
        if (x <= x_limit) out.push_back(std::sqrt(x));
    }
    for (std::size_t n = 0; n + 1 < poles.size(); ++n) {
        const double a = poles[n];
        const double b = poles[n + 1];
        if (a >= x_limit) break;
        double x;
        if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * b) {
            x = a;
        } else {
            // Shrink toward the poles until the bracket has the required signs.
            double lo = a + 0.25 * (b - a);
            double hi = b - 0.25 * (b - a);
            while (g(lo) < 0.0 && lo > a) lo = a + 0.01 * (lo - a);
            while (g(hi) > 0.0 && hi < b) hi = b - 0.01 * (b - hi);
            if (!(lo < hi)) {
                throw NumericalError("point_scatterer_spectrum: failed to bracket a root");
            }
            x = solve(lo, hi);
        }
        if (x <= x_limit) out.push_back(std::sqrt(x));
    }
    std::sort(out.begin(), out.end());
    WavevectorSpectrum result;
    result.values = std::move(out);
    return result;
}

WavevectorSpectrum sector_with_point_scatterer(const SectorGeometry& geom, double x, double y,
                                               double coupling, double k_max,
                                               const PointScattererOptions& options) {
    if (!geom.contains(x, y)) {
        throw std::invalid_argument("point scatterer must lie inside the sector");
    }
    const auto base = sector_eigenvalues(geom, std::sqrt(options.truncation) * k_max * (1.0 + 1e-12));
    const auto w = mode_intensities_at(geom, base, x, y);
    return point_scatterer_spectrum(base, w, coupling, k_max, options);
}

}  // namespace mwb
