#include "mwb/rmt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Eigenvalues>

#include "mwb/errors.hpp"

namespace mwb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::complex<double> kI{0.0, 1.0};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double uniform_step(const ComplexTrace& t) {
    if (t.size() < 2) {
        throw std::invalid_argument("autocorrelation: traces need at least two samples");
    }
    const double h = t.frequencies[1] - t.frequencies[0];
    const double tol = 1e-6 * h;
    for (std::size_t i = 2; i < t.size(); ++i) {
        if (std::abs(t.frequencies[i] - t.frequencies[i - 1] - h) > tol) {
            throw std::invalid_argument("autocorrelation: frequency grid must be uniform");
        }
    }
    return h;
}

std::vector<double> fictitious_and_antenna_strengths(const RmtEnsembleConfig& config) {
    std::vector<double> v2{config.v2_a, config.v2_b};
    if (!config.unitary()) {
        const double vf = v2_for_transmission(config.fictitious_transmission, analysis_spacing(config));
        v2.insert(v2.end(), static_cast<std::size_t>(config.fictitious_channels), vf);
    }
    return v2;
}

}  // namespace

void RmtEnsembleConfig::validate() const {
    if (dimension < 50) throw ConfigError("rmt: dimension must be >= 50");
    if (!(v2_a > 0.0) || !(v2_b > 0.0)) throw ConfigError("rmt: antenna strengths v^2 must be positive");
    if (fictitious_channels < 0) throw ConfigError("rmt: fictitious channel count must be >= 0");
    if (!(fictitious_transmission >= 0.0 && fictitious_transmission <= 1.0)) {
        throw ConfigError("rmt: fictitious transmission must lie in [0, 1]");
    }
    if (fictitious_channels + 2 > dimension) throw ConfigError("rmt: more channels than levels");
    if (realizations < 1) throw ConfigError("rmt: realizations must be >= 1");
    if (!(grid_step > 0.0) || !(grid_stop > grid_start)) throw ConfigError("rmt: invalid frequency grid");
    const double d0 = goe_center_spacing(dimension);
    if (std::abs(grid_start * d0) >= 1.0 || std::abs(grid_stop * d0) >= 1.0) {
        throw ConfigError("rmt: frequency grid leaves the semicircle band");
    }
    if (histogram_bins < 1) throw ConfigError("rmt: histogram bins must be >= 1");
    if (correlation_window < 0.0) throw ConfigError("rmt: correlation window must be >= 0");
}

RmtEnsembleConfig default_rmt_config(int dimension) {
    RmtEnsembleConfig c;
    c.dimension = dimension;
    // Central quarter of the band: |E| <= 1/4, in units of d0 = pi/(2N).
    const double half = 0.25 / goe_center_spacing(dimension);
    c.grid_start = -half;
    c.grid_stop = half;
    for (int i = 0; i <= 60; ++i) c.correlation_lags.push_back(0.05 * i);
    return c;
}

double goe_center_spacing(int dimension) { return kPi / (2.0 * dimension); }

double goe_band_spacing(int dimension, double e1, double e2) {
    const auto n = static_cast<std::size_t>(dimension);
    return (e2 - e1) / (semicircle_staircase(n, e2) - semicircle_staircase(n, e1));
}

double analysis_spacing(const RmtEnsembleConfig& config) {
    const auto grid = energy_grid(config);
    return goe_band_spacing(config.dimension, grid.front(), grid.back());
}

std::vector<double> energy_grid(const RmtEnsembleConfig& config) {
    const double d0 = goe_center_spacing(config.dimension);
    const auto n = static_cast<std::size_t>(std::floor((config.grid_stop - config.grid_start) / config.grid_step + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = d0 * (config.grid_start + config.grid_step * static_cast<double>(i));
    }
    return out;
}

double transmission_from_coupling(double x) { return 4.0 * x / ((1.0 + x) * (1.0 + x)); }

double coupling_from_transmission(double t) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::invalid_argument("coupling_from_transmission: T must lie in (0, 1]");
    }
    return (2.0 - t - 2.0 * std::sqrt(1.0 - t)) / t;
}

double v2_for_transmission(double transmission, double spacing) {
    return coupling_from_transmission(transmission) * spacing / (kPi * kPi);
}

Eigen::MatrixXd sample_goe(int dimension, std::uint64_t seed) {
    if (dimension < 2) {
        throw std::invalid_argument("sample_goe: dimension must be >= 2");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double n = static_cast<double>(dimension);
    const double off = std::sqrt(1.0 / (4.0 * n));
    const double diag = std::sqrt(1.0 / (2.0 * n));
    Eigen::MatrixXd h(dimension, dimension);
    for (int j = 0; j < dimension; ++j) {
        h(j, j) = diag * normal(rng);
        for (int i = j + 1; i < dimension; ++i) {
            h(i, j) = off * normal(rng);
            h(j, i) = h(i, j);
        }
    }
    return h;
}

Eigen::MatrixXd build_couplings(int dimension, std::span<const double> v2) {
    const auto channels = static_cast<int>(v2.size());
    if (dimension < 1 || channels > dimension) {
        throw std::invalid_argument("build_couplings: need 1 <= channels <= N");
    }
    for (double v : v2) {
        if (!(v > 0.0)) throw std::invalid_argument("build_couplings: coupling strengths must be positive");
    }
    const double n = static_cast<double>(dimension);
    Eigen::MatrixXd w(dimension, channels);
    for (int c = 0; c < channels; ++c) {
        // Orthonormal DST-I column scaled to squared norm N v_c^2.
        const double scale = std::sqrt(n * v2[static_cast<std::size_t>(c)]) * std::sqrt(2.0 / (n + 1.0));
        for (int mu = 0; mu < dimension; ++mu) {
            w(mu, c) = scale * std::sin(kPi * (mu + 1.0) * (c + 1.0) / (n + 1.0));
        }
    }
    return w;
}

std::uint64_t realization_seed(std::uint64_t master, std::uint64_t realization) {
    return splitmix64(splitmix64(master) ^ (realization + 1));
}

ScatteringSystem::ScatteringSystem(const Eigen::MatrixXd& hamiltonian, const Eigen::MatrixXd& couplings)
    : hamiltonian_(hamiltonian), couplings_(couplings) {
    if (hamiltonian.rows() != hamiltonian.cols() || couplings.rows() != hamiltonian.rows()) {
        throw std::invalid_argument("ScatteringSystem: dimension mismatch");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(hamiltonian);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("ScatteringSystem: eigendecomposition failed");
    }
    levels_ = solver.eigenvalues();
    rotated_ = solver.eigenvectors().transpose() * couplings;
}

Eigen::MatrixXcd ScatteringSystem::smatrix(double energy, int channels) const {
    const auto m = couplings_.cols();
    const double nudge = 1e-12 * (levels_.maxCoeff() - levels_.minCoeff() + 1.0) / static_cast<double>(levels_.size());
    Eigen::ArrayXd inv = (energy - levels_.array());
    if ((inv == 0.0).any()) {
        inv = energy + nudge - levels_.array();
    }
    inv = inv.inverse();
    const Eigen::MatrixXd k = rotated_.transpose() * (inv.matrix().asDiagonal() * rotated_);
    const Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(m, m) + kI * kPi * k.cast<std::complex<double>>();
    const Eigen::MatrixXcd x = a.partialPivLu().solve(k.leftCols(channels).cast<std::complex<double>>());
    return Eigen::MatrixXcd::Identity(channels, channels) - 2.0 * kPi * kI * x.topRows(channels);
}

Eigen::MatrixXcd ScatteringSystem::smatrix_direct(double energy) const {
    const auto n = hamiltonian_.rows();
    const auto m = couplings_.cols();
    const Eigen::MatrixXcd w = couplings_.cast<std::complex<double>>();
    Eigen::MatrixXcd a = -hamiltonian_.cast<std::complex<double>>();
    a.diagonal().array() += energy;
    a += kI * kPi * (w * w.transpose());
    const Eigen::MatrixXcd x = a.partialPivLu().solve(w);
    (void)n;
    return Eigen::MatrixXcd::Identity(m, m) - 2.0 * kPi * kI * (w.transpose() * x);
}

Eigen::VectorXcd ScatteringSystem::poles() const {
    const Eigen::MatrixXcd w = couplings_.cast<std::complex<double>>();
    const Eigen::MatrixXcd heff = hamiltonian_.cast<std::complex<double>>() - kI * kPi * (w * w.transpose());
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(heff, false);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("ScatteringSystem: effective Hamiltonian eigenvalues failed");
    }
    return solver.eigenvalues();
}

ScatteringSystem realization_system(const RmtEnsembleConfig& config, int realization) {
    config.validate();
    const auto v2 = fictitious_and_antenna_strengths(config);
    const Eigen::MatrixXd h = sample_goe(config.dimension, realization_seed(config.seed, static_cast<std::uint64_t>(realization)));
    return ScatteringSystem(h, build_couplings(config.dimension, v2));
}

RealizationTraces smatrix_trace(const RmtEnsembleConfig& config, int realization) {
    const ScatteringSystem system = realization_system(config, realization);
    const auto grid = energy_grid(config);
    RealizationTraces out;
    out.aa.pair = {1, 1};
    out.ab.pair = {1, 2};
    out.bb.pair = {2, 2};
    for (auto* t : {&out.aa, &out.ab, &out.bb}) {
        t->frequencies = grid;
        t->values.reserve(grid.size());
    }
    const Eigen::VectorXd& levels = system.levels();
    for (double e : grid) {
        if (((levels.array() - e) == 0.0).any()) {
            out.warnings.push_back("realization " + std::to_string(realization) + ": grid point " +
                                   std::to_string(e) + " hits an eigenvalue; shifted by 1e-12 d");
        }
        const Eigen::MatrixXcd s = system.smatrix(e, 2);
        out.aa.values.push_back(s(0, 0));
        out.ab.values.push_back(s(1, 0));
        out.bb.values.push_back(s(1, 1));
    }
    return out;
}

TransmissionEstimate transmission_from_average(std::span<const ComplexTrace> traces) {
    if (traces.size() < 10) {
        throw std::invalid_argument("transmission_from_average: at least 10 realizations required");
    }
    std::complex<double> total{0.0, 0.0};
    std::size_t count = 0;
    std::vector<std::complex<double>> means;
    means.reserve(traces.size());
    for (const auto& t : traces) {
        if (!t.pair.diagonal()) {
            throw std::invalid_argument("transmission_from_average: traces must be reflection elements S_cc");
        }
        if (t.values.empty()) throw std::invalid_argument("transmission_from_average: empty trace");
        std::complex<double> s{0.0, 0.0};
        for (const auto& v : t.values) s += v;
        total += s;
        count += t.values.size();
        means.push_back(s / static_cast<double>(t.values.size()));
    }
    TransmissionEstimate out;
    out.mean_s = total / static_cast<double>(count);
    out.value = 1.0 - std::norm(out.mean_s);

    const double r = static_cast<double>(means.size());
    double vrr = 0.0, vii = 0.0, vri = 0.0;
    for (const auto& m : means) {
        const auto d = m - out.mean_s;
        vrr += d.real() * d.real();
        vii += d.imag() * d.imag();
        vri += d.real() * d.imag();
    }
    vrr /= (r - 1.0) * r;
    vii /= (r - 1.0) * r;
    vri /= (r - 1.0) * r;
    const double re = out.mean_s.real();
    const double im = out.mean_s.imag();
    out.standard_error = 2.0 * std::sqrt(std::max(0.0, re * re * vrr + im * im * vii + 2.0 * re * im * vri));
    return out;
}

StatCurve Autocorrelation::modulus() const {
    StatCurve c;
    c.abscissa = lags;
    for (const auto& v : values) c.ordinate.push_back(std::abs(v));
    c.counts = counts;
    return c;
}

double Autocorrelation::half_width() const {
    if (values.empty()) return 0.0;
    const double half = 0.5 * std::abs(values.front());
    for (std::size_t j = 1; j < values.size(); ++j) {
        const double cj = std::abs(values[j]);
        if (cj <= half) {
            const double cp = std::abs(values[j - 1]);
            const double t = cp == cj ? 0.0 : (cp - half) / (cp - cj);
            return lags[j - 1] + t * (lags[j] - lags[j - 1]);
        }
    }
    return lags.back();
}

Autocorrelation autocorrelation(std::span<const ComplexTrace> traces, std::span<const double> lags,
                                double spacing, std::size_t window_points) {
    if (traces.empty()) throw std::invalid_argument("autocorrelation: no traces");
    if (!(spacing > 0.0)) throw std::invalid_argument("autocorrelation: spacing must be positive");
    const double h = uniform_step(traces.front());
    const std::size_t n = traces.front().size();
    for (const auto& t : traces) {
        if (t.size() != n) throw std::invalid_argument("autocorrelation: traces must share one grid");
    }
    const double span = traces.front().frequencies.back() - traces.front().frequencies.front();
    double max_lag = 0.0;
    for (double l : lags) max_lag = std::max(max_lag, l);
    if (span < 10.0 * max_lag * spacing) {
        throw std::invalid_argument("autocorrelation: grid span must be at least 10 times the largest lag");
    }
    const std::size_t window = window_points == 0 ? n : std::min(window_points, n);

    Autocorrelation out;
    std::complex<double> sum{0.0, 0.0};
    for (const auto& t : traces) {
        for (const auto& v : t.values) sum += v;
    }
    out.mean = sum / static_cast<double>(n * traces.size());
    const double mean_sq = std::norm(out.mean);

    for (double lag : lags) {
        const auto shift = static_cast<std::size_t>(std::llround(lag * spacing / h));
        if (shift >= window) {
            out.warnings.push_back("autocorrelation: lag " + std::to_string(lag) + " exceeds the window and was dropped");
            continue;
        }
        std::complex<double> acc{0.0, 0.0};
        long pairs = 0;
        for (const auto& t : traces) {
            for (std::size_t start = 0; start < n; start += window) {
                const std::size_t stop = std::min(start + window, n);
                for (std::size_t i = start; i + shift < stop; ++i) {
                    acc += t.values[i] * std::conj(t.values[i + shift]);
                    ++pairs;
                }
            }
        }
        out.lags.push_back(lag);
        out.values.push_back(pairs > 0 ? acc / static_cast<double>(pairs) - mean_sq : std::complex<double>{});
        out.counts.push_back(pairs);
    }
    return out;
}

ElementDistributions element_distributions(std::span<const ComplexTrace> traces, int bins) {
    if (bins < 1) throw std::invalid_argument("element_distributions: bins must be >= 1");
    ElementDistributions out;
    const auto nb = static_cast<std::size_t>(bins);
    out.modulus.counts.assign(nb, 0);
    out.phase.counts.assign(nb, 0);
    const double two_pi = 2.0 * kPi;
    std::size_t total = 0;
    double modulus_sum = 0.0;
    for (const auto& t : traces) {
        for (const auto& v : t.values) {
            const double r = std::abs(v);
            double phi = std::arg(v);
            if (phi < 0.0) phi += two_pi;
            if (phi >= two_pi) phi = 0.0;
            const auto rb = std::min(nb - 1, static_cast<std::size_t>(r * bins));
            const auto pb = std::min(nb - 1, static_cast<std::size_t>(phi / two_pi * bins));
            out.modulus.counts[rb] += 1;
            out.phase.counts[pb] += 1;
            modulus_sum += r;
            ++total;
        }
    }
    if (total < 10000) {
        out.warnings.push_back("element_distributions: only " + std::to_string(total) + " samples (< 10^4)");
    }
    if (total == 0) return out;
    const double n = static_cast<double>(total);
    const double rw = 1.0 / bins;
    const double pw = two_pi / bins;
    for (std::size_t b = 0; b < nb; ++b) {
        out.modulus.abscissa.push_back((static_cast<double>(b) + 0.5) * rw);
        out.modulus.ordinate.push_back(static_cast<double>(out.modulus.counts[b]) / (n * rw));
        out.phase.abscissa.push_back((static_cast<double>(b) + 0.5) * pw);
        out.phase.ordinate.push_back(static_cast<double>(out.phase.counts[b]) / (n * pw));
    }
    out.mean_modulus = modulus_sum / n;
    return out;
}

EnsembleStats ensemble_run(const RmtEnsembleConfig& config) {
    config.validate();
    const auto r_count = static_cast<std::size_t>(config.realizations);
    std::vector<RealizationTraces> runs(r_count);
    {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t r = next++; r < r_count; r = next++) {
                runs[r] = smatrix_trace(config, static_cast<int>(r));
            }
        };
        const std::size_t threads = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), r_count);
        std::vector<std::jthread> pool;
        for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
        worker();
    }

    std::vector<ComplexTrace> aa, ab, bb;
    EnsembleStats out;
    for (auto& run : runs) {
        aa.push_back(std::move(run.aa));
        ab.push_back(std::move(run.ab));
        bb.push_back(std::move(run.bb));
        out.warnings.insert(out.warnings.end(), run.warnings.begin(), run.warnings.end());
    }

    out.spacing = analysis_spacing(config);
    out.tau_abs = config.tau_abs();
    out.unitary = config.unitary();
    out.expected_transmission_a = transmission_from_coupling(kPi * kPi * config.v2_a / out.spacing);
    out.expected_transmission_b = transmission_from_coupling(kPi * kPi * config.v2_b / out.spacing);
    if (r_count >= 10) {
        out.transmission_a = transmission_from_average(aa);
        out.transmission_b = transmission_from_average(bb);
    } else {
        out.warnings.emplace_back("ensemble_run: fewer than 10 realizations, transmission estimates skipped");
    }

    std::complex<double> sum{0.0, 0.0};
    std::size_t count = 0;
    for (const auto& t : ab) {
        for (const auto& v : t.values) sum += v;
        count += t.values.size();
    }
    out.mean_s_ab = sum / static_cast<double>(count);

    const double d0 = goe_center_spacing(config.dimension);
    auto lags = config.correlation_lags;
    if (lags.empty()) lags = default_rmt_config(config.dimension).correlation_lags;
    const auto window = static_cast<std::size_t>(std::llround(config.correlation_window / config.grid_step));
    out.autocorrelation = autocorrelation(ab, lags, d0, window);
    out.correlation_width = out.autocorrelation.half_width();
    out.warnings.insert(out.warnings.end(), out.autocorrelation.warnings.begin(), out.autocorrelation.warnings.end());

    out.reflection_a = element_distributions(aa, config.histogram_bins);
    out.transmission = element_distributions(ab, config.histogram_bins);
    out.reflection_b = element_distributions(bb, config.histogram_bins);
    return out;
}

}  // namespace mwb
