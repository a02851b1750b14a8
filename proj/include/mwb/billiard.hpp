#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mwb/grid.hpp"

namespace mwb {

/// Circle sector 0 <= r < R, 0 < phi < theta with Dirichlet walls.
class SectorGeometry {
public:
    /// Throws std::invalid_argument unless radius > 0 and 0 < theta < 2 pi.
    SectorGeometry(double radius, double opening_angle);

    [[nodiscard]] double radius() const { return radius_; }
    [[nodiscard]] double opening_angle() const { return opening_angle_; }
    [[nodiscard]] double area() const;
    [[nodiscard]] double perimeter() const;
    [[nodiscard]] bool contains(double x, double y) const;

    /// Bessel order of angular index m: m pi / theta.
    [[nodiscard]] double order(int m) const;

private:
    double radius_;
    double opening_angle_;
};

/// Circular obstacle, coordinates in metres.
struct DiskScatterer {
    double x = 0.0;
    double y = 0.0;
    double radius = 0.0;
};

/// Throws std::invalid_argument when a disk leaves the sector or two disks overlap.
void validate_scatterers(const SectorGeometry& geom, std::span<const DiskScatterer> disks);

struct ModeLabel {
    int m = 0;
    int nu = 0;
    friend bool operator==(const ModeLabel&, const ModeLabel&) = default;
};

struct WavevectorSpectrum {
    std::vector<double> values;      // m^-1, strictly ascending
    std::vector<ModeLabel> labels;   // empty or same length as values

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] bool empty() const { return values.empty(); }
    [[nodiscard]] bool labelled() const { return !labels.empty(); }
};

/// Smooth counting-function parameters: area (m^2), perimeter (m), constant.
struct WeylParams {
    double area = 0.0;
    double perimeter = 0.0;
    double constant = 0.0;
};

/// Dirichlet Weyl law N(k) = A k^2 / 4pi - L k / 4pi + C.
double weyl_count(double k, const WeylParams& params);

/// Area and perimeter of the sector with the given constant.
WeylParams sector_weyl_params(const SectorGeometry& geom, double constant = 0.0);

/// Corner and curvature correction to C: sum over corners (pi^2 - a^2)/(24 pi a) + theta/(12 pi).
double sector_corner_constant(const SectorGeometry& geom);

/**
 * Least-squares C for a measured staircase: the staircase value at k_n is
 * taken at mid-step, n - 1/2, so C is the mean of (n - 1/2 - smooth(k_n)).
 */
double fit_weyl_constant(std::span<const double> wavevectors, double area, double perimeter);

/// All k_{m,nu} <= k_max from J_{m pi/theta}(k R) = 0, ascending and labelled.
WavevectorSpectrum sector_eigenvalues(const SectorGeometry& geom, double k_max);

/// Normalized eigenfunction value psi_{m,nu}(r, phi) for the eigenvalue k.
double sector_mode_value(const SectorGeometry& geom, ModeLabel label, double k, double r, double phi);

/// |psi_{m,nu}|^2 on a square grid covering the sector; points outside are masked and zero.
FieldMap sector_wavefunction(const SectorGeometry& geom, const WavevectorSpectrum& spectrum,
                             ModeLabel label, double spacing);

/// |psi_n(x, y)|^2 for every labelled mode of `spectrum`.
std::vector<double> mode_intensities_at(const SectorGeometry& geom, const WavevectorSpectrum& spectrum,
                                        double x, double y);

struct PointScattererOptions {
    /// Poles with k_n^2 above truncation * k_max^2 are dropped.
    double truncation = 4.0;
    /// Poles weaker than this fraction of the strongest are treated as decoupled.
    double relative_cutoff = 1e-14;
};

/**
 * Eigen-wavevectors of the base billiard perturbed by a point scatterer.
 *
 * Roots in x = k^2 of
 *     F(x) = sum_n w_n [ 1/(x - x_n) + x_n/(1 + x_n^2) ] = 1/coupling,
 * with w_n = |psi_n(r0)|^2. F decreases strictly between consecutive coupled
 * poles, so each such interval holds exactly one root. An infinite coupling
 * is allowed and gives the F = 0 limit.
 */
WavevectorSpectrum point_scatterer_spectrum(const WavevectorSpectrum& base,
                                            std::span<const double> mode_intensities,
                                            double coupling, double k_max,
                                            const PointScattererOptions& options = {});

/// Convenience: base spectrum to sqrt(truncation) k_max, intensities at (x, y), perturbed spectrum.
WavevectorSpectrum sector_with_point_scatterer(const SectorGeometry& geom, double x, double y,
                                               double coupling, double k_max,
                                               const PointScattererOptions& options = {});

}  // namespace mwb
