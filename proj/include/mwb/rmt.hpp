#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mwb/spectral_stats.hpp"
#include "mwb/trace.hpp"

namespace mwb {

/**
 * Parameters of the Mahaux-Weidenmueller scattering ensemble.
 *
 * Energies are in units of the semicircle radius (lambda = 1). The grid
 * bounds and step are given in units of the band-centre spacing
 * d0 = pi / (2N), relative to the band centre.
 */
struct RmtEnsembleConfig {
    int dimension = 200;
    double v2_a = 0.0;
    double v2_b = 0.0;
    int fictitious_channels = 10;
    double fictitious_transmission = 0.0;
    int realizations = 100;
    std::uint64_t seed = 1;
    double grid_start = 0.0;
    double grid_stop = 0.0;
    double grid_step = 0.05;
    /// Lags (units of d0) at which the autocorrelation is evaluated.
    std::vector<double> correlation_lags;
    /// Autocorrelation averaging window in units of d0; 0 uses the whole grid.
    double correlation_window = 0.0;
    int histogram_bins = 50;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
    [[nodiscard]] double tau_abs() const { return fictitious_channels * fictitious_transmission; }
    [[nodiscard]] bool unitary() const { return fictitious_channels == 0 || fictitious_transmission == 0.0; }
};

/// Config with the grid spanning the central quarter of the band and lags 0..3 d0.
RmtEnsembleConfig default_rmt_config(int dimension = 200);

/// Band-centre mean level spacing pi / (2N) of the radius-1 semicircle.
double goe_center_spacing(int dimension);

/// Mean level spacing over [e1, e2] from the semicircle staircase.
double goe_band_spacing(int dimension, double e1, double e2);

/// Mean spacing over the configured grid; this is the d entering the T(v^2) relation.
double analysis_spacing(const RmtEnsembleConfig& config);

/// Energies of the configured grid.
std::vector<double> energy_grid(const RmtEnsembleConfig& config);

/// T = 4x / (1 + x)^2 with x = pi^2 v^2 / d.
double transmission_from_coupling(double x);

/// Weak-coupling (x <= 1) inverse of transmission_from_coupling.
double coupling_from_transmission(double transmission);

/// v^2 giving transmission T at mean spacing d.
double v2_for_transmission(double transmission, double spacing);

/**
 * Real symmetric GOE matrix: off-diagonal variance 1/(4N), diagonal 1/(2N),
 * so the spectrum fills the semicircle of radius 1.
 */
Eigen::MatrixXd sample_goe(int dimension, std::uint64_t seed);

/// N x channels coupling matrix with orthogonal columns of squared norm N v_c^2 (sine basis).
Eigen::MatrixXd build_couplings(int dimension, std::span<const double> v2);

/// Seed of realization r derived from the master seed.
std::uint64_t realization_seed(std::uint64_t master, std::uint64_t realization);

/**
 * S(E) = 1 - 2 pi i W^T (E - H + i pi W W^T)^{-1} W for a fixed H and W.
 *
 * Evaluated in the eigenbasis of H through the exact reduction
 * S = (1 - i pi K)(1 + i pi K)^{-1}, K = W^T (E - H)^{-1} W, which costs one
 * channels x channels solve per energy. `smatrix_direct` solves the full
 * N x N system instead and serves as an independent check.
 */
class ScatteringSystem {
public:
    ScatteringSystem(const Eigen::MatrixXd& hamiltonian, const Eigen::MatrixXd& couplings);

    /// Leading `channels` x `channels` block of S(E).
    [[nodiscard]] Eigen::MatrixXcd smatrix(double energy, int channels) const;
    [[nodiscard]] Eigen::MatrixXcd smatrix(double energy) const { return smatrix(energy, channel_count()); }
    [[nodiscard]] Eigen::MatrixXcd smatrix_direct(double energy) const;

    /// Eigenvalues of H_eff = H - i pi W W^T (resonance poles E - i Gamma/2).
    [[nodiscard]] Eigen::VectorXcd poles() const;

    [[nodiscard]] int dimension() const { return static_cast<int>(levels_.size()); }
    [[nodiscard]] int channel_count() const { return static_cast<int>(couplings_.cols()); }
    [[nodiscard]] const Eigen::VectorXd& levels() const { return levels_; }

private:
    Eigen::MatrixXd hamiltonian_;
    Eigen::MatrixXd couplings_;
    Eigen::VectorXd levels_;
    Eigen::MatrixXd rotated_;   // eigenvectors^T * couplings
};

/// Traces of one realization for the antenna pairs (a,a), (a,b), (b,b).
struct RealizationTraces {
    ComplexTrace aa;
    ComplexTrace ab;
    ComplexTrace bb;
    std::vector<std::string> warnings;
};

RealizationTraces smatrix_trace(const RmtEnsembleConfig& config, int realization);

/// Builds the system (H, W) of one realization.
ScatteringSystem realization_system(const RmtEnsembleConfig& config, int realization);

struct TransmissionEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::complex<double> mean_s;
};

/// T_c = 1 - |<S_cc>|^2 pooled over traces and grid. Requires >= 10 traces.
TransmissionEstimate transmission_from_average(std::span<const ComplexTrace> traces);

struct Autocorrelation {
    std::vector<double> lags;                  // units of the spacing passed in
    std::vector<std::complex<double>> values;
    std::vector<long> counts;
    std::complex<double> mean;
    std::vector<std::string> warnings;

    /// |C(eps)| as a curve.
    [[nodiscard]] StatCurve modulus() const;
    /// Smallest lag with |C| <= C(0)/2 (linear interpolation); the last lag if never reached.
    [[nodiscard]] double half_width() const;
};

/**
 * C(eps) = <S(f) S*(f + eps)> - |<S>|^2 by direct lagged products on the
 * uniform grid, within windows of `window_points` samples (0: whole trace)
 * and over all traces.
 */
Autocorrelation autocorrelation(std::span<const ComplexTrace> traces, std::span<const double> lags,
                                double spacing, std::size_t window_points = 0);

struct ElementDistributions {
    StatCurve modulus;
    StatCurve phase;
    double mean_modulus = 0.0;
    std::vector<std::string> warnings;
};

/// Normalized |S| histogram on [0, 1] and phase histogram on [0, 2 pi).
ElementDistributions element_distributions(std::span<const ComplexTrace> traces, int bins = 50);

struct EnsembleStats {
    TransmissionEstimate transmission_a;
    TransmissionEstimate transmission_b;
    double expected_transmission_a = 0.0;
    double expected_transmission_b = 0.0;
    double spacing = 0.0;
    double tau_abs = 0.0;
    bool unitary = true;
    std::complex<double> mean_s_ab;
    Autocorrelation autocorrelation;
    double correlation_width = 0.0;
    ElementDistributions reflection_a;
    ElementDistributions transmission;
    ElementDistributions reflection_b;
    std::vector<std::string> warnings;
};

/// Runs all realizations (in parallel when threads are available) and aggregates deterministically.
EnsembleStats ensemble_run(const RmtEnsembleConfig& config);

}  // namespace mwb
