#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mwb/billiard.hpp"

namespace mwb {

/// Dimensionless levels with unit mean spacing, possibly split into complete pieces.
struct UnfoldedSpectrum {
    std::vector<std::vector<double>> sequences;
    std::string provenance;

    [[nodiscard]] std::size_t level_count() const;
    /// Nearest-neighbour spacings, computed within each sequence and pooled.
    [[nodiscard]] std::vector<double> spacings() const;
    [[nodiscard]] double mean_spacing() const;
};

/// A sampled curve. For histograms `counts` holds the bin occupancy.
struct StatCurve {
    std::vector<double> abscissa;
    std::vector<double> ordinate;
    std::vector<long> counts;
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t size() const { return abscissa.size(); }
};

enum class Model { poisson, goe, semi_poisson };
enum class Statistic { spacing_density, spacing_cumulative, number_variance, delta3 };

Model parse_model(std::string_view name);
Statistic parse_statistic(std::string_view name);
std::string_view to_string(Model model);

/// epsilon_n = N_Weyl(k_n). Throws std::invalid_argument on an empty spectrum.
UnfoldedSpectrum unfold(const WavevectorSpectrum& spectrum, const WeylParams& params);

/// Histogram P(s) normalized to unit area; abscissa holds bin centres.
StatCurve spacing_distribution(const UnfoldedSpectrum& u, double bin_width = 0.1);

/**
 * Empirical cumulative I(s) of the pooled spacings. Each jump is encoded as
 * two points with the same abscissa (value before and after), so linear
 * interpolation of the curve reproduces the step function exactly.
 */
StatCurve cumulative_spacing(const UnfoldedSpectrum& u);

/// Value of the reference statistic at a single point.
double reference_value(Model model, Statistic statistic, double x);

/// Reference statistic sampled on `grid`.
StatCurve reference_curve(Model model, Statistic statistic, std::span<const double> grid);

/// L = 0.5, 1.0, ..., 20.
std::vector<double> default_length_grid();

/// Sigma^2(L) over windows sliding in steps of L/4 inside each sequence.
StatCurve number_variance(const UnfoldedSpectrum& u, std::span<const double> lengths);

/// Delta_3(L) with the least-squares line solved in closed form per window.
StatCurve dyson_mehta(const UnfoldedSpectrum& u, std::span<const double> lengths);

/// Delta_3 for a single window [start, start + length) of one ascending sequence.
double delta3_window(std::span<const double> levels, double start, double length);

UnfoldedSpectrum generate_reference_sequence(Model model, std::size_t levels, std::uint64_t seed);

/// Unfolds eigenvalues of a GOE matrix (radius-1 semicircle) with the semicircle staircase.
double semicircle_staircase(std::size_t dimension, double energy);

struct MissingLevelReport {
    std::size_t index = 0;        // first level after the gap
    double wavevector = 0.0;
    double step = 0.0;            // change of the local mean of N_fluc
    int estimated_missing = 0;
};

/**
 * Scans N_fluc(k_n) = n - N_Weyl(k_n) for downward steps of its local mean,
 * comparing the mean over `window` levels on either side of each split point.
 * Reports one entry per contiguous region where the step falls below -0.5 and
 * its minimum reaches -0.7 or lower; the minimum is the reported step.
 * Deletions closer than the window merge into one report with a larger step.
 */
std::vector<MissingLevelReport> missing_level_scan(std::span<const double> wavevectors,
                                                   const WeylParams& params, std::size_t window);

/// Splits at global level indices (into the concatenated sequences); no spacing spans a cut.
UnfoldedSpectrum split_sequences(const UnfoldedSpectrum& u, std::span<const std::size_t> cuts);

/// Sup-norm distance between two cumulative curves on the union of their abscissae.
double ks_distance(const StatCurve& a, const StatCurve& b);

/// Exact Kolmogorov-Smirnov distance of pooled spacings to a model's I(s).
double ks_distance_to_model(std::span<const double> spacings, Model model);

struct SpacingSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;
    double ks_poisson = 0.0;
    double ks_goe = 0.0;
    double ks_semi_poisson = 0.0;

    [[nodiscard]] Model closest() const;
};

SpacingSummary summarize_spacings(const UnfoldedSpectrum& u);

}  // namespace mwb
