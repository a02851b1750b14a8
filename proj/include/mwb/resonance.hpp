#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mwb/grid.hpp"
#include "mwb/spectral_stats.hpp"
#include "mwb/trace.hpp"

namespace mwb {

/**
 * One Breit-Wigner pole: S_ba = delta_ba - i sign * amplitude / (f - center + i width / 2).
 *
 * `amplitude` is sqrt(Gamma_na Gamma_nb) in Hz. Off-diagonal elements carry
 * the sign of the product of the two partial-width amplitudes in `sign`.
 */
struct Resonance {
    double center = 0.0;
    double width = 0.0;
    double amplitude = 0.0;
    int sign = 1;
    bool converged = true;
    double center_sigma = 0.0;
    double width_sigma = 0.0;
    double amplitude_sigma = 0.0;
    std::string diagnostics;

    [[nodiscard]] double signed_amplitude() const { return sign * amplitude; }
};

/// Per-cluster optimizer record. `cost_history` holds the initial and every accepted cost.
struct FitReport {
    std::vector<std::size_t> members;
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_history;
    std::string message;
};

struct ResonanceSet {
    ChannelPair pair;
    std::vector<Resonance> resonances;
    std::vector<FitReport> reports;
    std::vector<std::string> warnings;
};

/// Initial values for one resonance. `amplitude` is signed.
struct PeakGuess {
    double center = 0.0;
    double width = 0.0;
    double amplitude = 0.0;
};

/// Sum of resonance terms plus delta_ba on `frequencies`.
ComplexTrace breit_wigner_model(std::span<const Resonance> resonances, bool diagonal,
                                std::span<const double> frequencies);

/**
 * Local maxima of |S| (off-diagonal) or of |S - median S| (diagonal) whose
 * topographic prominence reaches `prominence`. Widths come from the
 * half-power points, amplitudes from the peak height and phase.
 */
std::vector<PeakGuess> detect_peaks(const ComplexTrace& trace, double prominence);

struct FitOptions {
    /// Half-width of each resonance's fit window, in units of its width guess.
    double window_widths = 3.0;
    int max_iterations = 200;
    double tolerance = 1e-8;
    /// Refits of every cluster with the other clusters' tails subtracted.
    int max_sweeps = 20;
    /// Clusters are processed in batches of this frequency width (0: one batch).
    double batch_hz = 0.0;
};

/**
 * Damped least-squares fit of the complex Breit-Wigner form with one complex
 * constant background per cluster. Guesses whose windows overlap are fitted
 * jointly; tails of the other clusters are subtracted and the clusters are
 * refitted in sweeps until the parameters settle. Widths are optimized as
 * log(width).
 */
ResonanceSet fit_resonances(const ComplexTrace& trace, std::span<const PeakGuess> guesses,
                            const FitOptions& options = {});

struct WindowFitOptions {
    double window_hz = 0.5e9;
    double prominence = 0.05;
    FitOptions fit;
};

/// Peak detection over the whole trace, fits batched per frequency window, sorted by center.
ResonanceSet fit_trace_windows(const ComplexTrace& trace, const WindowFitOptions& options = {});

struct StrengthSample {
    double center = 0.0;
    double y = 0.0;
    double z = 0.0;
};

struct StrengthResult {
    std::vector<StrengthSample> samples;
    std::vector<std::string> warnings;
};

/// y = amplitude^2 normalized by a running mean over `neighbours` resonances ordered by center.
StrengthResult strengths(std::span<const Resonance> resonances, std::size_t neighbours = 10);

/// Density of y for unit mean: K0(sqrt(y)) / (pi sqrt(y)).
double k0_strength_density(double y);

/// P(z) = ln(10) sqrt(u) K0(sqrt(u)) / pi, u = 10^z.
double k0_strength_value(double z);
StatCurve k0_strength_pdf(std::span<const double> z_grid);

/// Normalized z histogram over [z_min, z_max).
StatCurve strength_histogram(std::span<const double> z, double z_min = -6.0, double z_max = 2.0,
                             double bin_width = 0.1);

/// Pearson chi-square p-value of a z histogram against P(z); bins expecting < 5 counts are pooled.
double strength_chi_square_pvalue(const StatCurve& histogram);

/// E^2 = shift / (f0 c1), clipped at 0; optionally scaled to unit maximum.
FieldMap field_intensity_from_shift(const FieldMap& shift, double f0, double c1, bool normalize = false);

struct ReciprocityEntry {
    double center = 0.0;
    double amplitude_ab = 0.0;
    double amplitude_ba = 0.0;
    double relative_difference = 0.0;
};

/// Pairs resonances of two fits whose centers agree within `tolerance_widths` widths.
std::vector<ReciprocityEntry> reciprocity_report(const ResonanceSet& ab, const ResonanceSet& ba,
                                                 double tolerance_widths = 0.5);

}  // namespace mwb
