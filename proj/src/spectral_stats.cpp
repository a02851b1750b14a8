#include "mwb/spectral_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mwb/rmt.hpp"

namespace mwb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEulerGamma = std::numbers::egamma;

void require_cumulative(const StatCurve& c) {
    if (c.abscissa.size() != c.ordinate.size() || c.abscissa.empty()) {
        throw std::invalid_argument("ks_distance: curve must be nonempty with matching lengths");
    }
    for (std::size_t i = 1; i < c.size(); ++i) {
        if (c.abscissa[i] < c.abscissa[i - 1] || c.ordinate[i] < c.ordinate[i - 1]) {
            throw std::invalid_argument("ks_distance: curve is not a cumulative (non-monotone)");
        }
    }
}

// One-sided limits of the piecewise-linear curve at x; clamped outside the range.
double left_limit(const StatCurve& c, double x) {
    const auto& xs = c.abscissa;
    const auto it = std::lower_bound(xs.begin(), xs.end(), x);
    if (it == xs.begin()) return c.ordinate.front();
    if (it == xs.end()) return c.ordinate.back();
    const auto j = static_cast<std::size_t>(it - xs.begin());
    if (xs[j] == x) return c.ordinate[j];
    const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return c.ordinate[j - 1] + t * (c.ordinate[j] - c.ordinate[j - 1]);
}

double right_limit(const StatCurve& c, double x) {
    const auto& xs = c.abscissa;
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    if (it == xs.begin()) return c.ordinate.front();
    if (it == xs.end()) return c.ordinate.back();
    const auto j = static_cast<std::size_t>(it - xs.begin());
    if (xs[j - 1] == x) return c.ordinate[j - 1];
    const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return c.ordinate[j - 1] + t * (c.ordinate[j] - c.ordinate[j - 1]);
}

double goe_number_variance(double L) {
    return 2.0 / (kPi * kPi) * (std::log(2.0 * kPi * L) + kEulerGamma + 1.0 - kPi * kPi / 8.0);
}

double goe_delta3(double L) {
    return 1.0 / (kPi * kPi) * (std::log(2.0 * kPi * L) + kEulerGamma - 1.25 - kPi * kPi / 8.0);
}

double semi_poisson_number_variance(double L) {
    return L / 2.0 + (1.0 - std::exp(-4.0 * L)) / 8.0;
}

// Delta_3(L) = 2/L^4 int_0^L (L^3 - 2 L^2 r + r^3) Sigma^2(r) dr.
template <typename F>
double delta3_from_number_variance(F sigma2, double L) {
    auto integrand = [&](double r) { return (L * L * L - 2.0 * L * L * r + r * r * r) * sigma2(r); };
    const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, L, 15, 1e-13);
    return 2.0 / (L * L * L * L) * integral;
}

struct WindowPlan {
    double length;
    double stride;
};

void check_window_preconditions(const UnfoldedSpectrum& u, std::span<const double> lengths,
                                const char* what, StatCurve& out) {
    if (lengths.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty length grid");
    }
    if (u.sequences.empty()) {
        throw std::invalid_argument(std::string(what) + ": no levels");
    }
    double max_len = 0.0;
    for (double L : lengths) {
        if (!(L > 0.0)) throw std::invalid_argument(std::string(what) + ": lengths must be positive");
        max_len = std::max(max_len, L);
    }
    for (const auto& seq : u.sequences) {
        const double span = seq.empty() ? 0.0 : seq.back() - seq.front();
        if (static_cast<double>(seq.size()) < 2.0 * max_len || span < max_len) {
            throw std::invalid_argument(std::string(what) + ": sequence of " + std::to_string(seq.size()) +
                                        " levels is too short for L = " + std::to_string(max_len));
        }
        if (static_cast<double>(seq.size()) < 10.0 * max_len) {
            out.warnings.push_back(std::string(what) + ": sequence of " + std::to_string(seq.size()) +
                                   " levels is shorter than 10 L");
        }
    }
}

// Calls visit(sequence, window_start) for every window of length L.
template <typename Visit>
void for_each_window(const UnfoldedSpectrum& u, double L, Visit&& visit) {
    const double stride = L / 4.0;
    for (const auto& seq : u.sequences) {
        const double first = seq.front();
        const double last = seq.back();
        for (std::size_t j = 0;; ++j) {
            const double x = first + stride * static_cast<double>(j);
            if (x + L > last) break;
            visit(seq, x);
        }
    }
}

}  // namespace

std::size_t UnfoldedSpectrum::level_count() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

std::vector<double> UnfoldedSpectrum::spacings() const {
    std::vector<double> out;
    for (const auto& s : sequences) {
        for (std::size_t i = 1; i < s.size(); ++i) out.push_back(s[i] - s[i - 1]);
    }
    return out;
}

double UnfoldedSpectrum::mean_spacing() const {
    const auto s = spacings();
    if (s.empty()) return 0.0;
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

Model parse_model(std::string_view name) {
    if (name == "poisson") return Model::poisson;
    if (name == "goe" || name == "wigner") return Model::goe;
    if (name == "semi-poisson" || name == "semi_poisson" || name == "semipoisson") return Model::semi_poisson;
    throw std::invalid_argument("unknown reference model '" + std::string(name) + "'");
}

Statistic parse_statistic(std::string_view name) {
    if (name == "P" || name == "p") return Statistic::spacing_density;
    if (name == "I" || name == "i") return Statistic::spacing_cumulative;
    if (name == "sigma2" || name == "Sigma2" || name == "number_variance") return Statistic::number_variance;
    if (name == "delta3" || name == "Delta3") return Statistic::delta3;
    throw std::invalid_argument("unknown statistic '" + std::string(name) + "'");
}

std::string_view to_string(Model model) {
    switch (model) {
        case Model::poisson: return "poisson";
        case Model::goe: return "goe";
        case Model::semi_poisson: return "semi-poisson";
    }
    return "unknown";
}

UnfoldedSpectrum unfold(const WavevectorSpectrum& spectrum, const WeylParams& params) {
    if (spectrum.empty()) {
        throw std::invalid_argument("unfold: empty spectrum");
    }
    UnfoldedSpectrum u;
    u.provenance = "weyl";
    auto& seq = u.sequences.emplace_back();
    seq.reserve(spectrum.size());
    for (double k : spectrum.values) seq.push_back(weyl_count(k, params));
    return u;
}

StatCurve spacing_distribution(const UnfoldedSpectrum& u, double bin_width) {
    if (!(bin_width > 0.0)) {
        throw std::invalid_argument("spacing_distribution: bin width must be positive");
    }
    const auto s = u.spacings();
    if (s.empty()) {
        throw std::invalid_argument("spacing_distribution: every sequence needs at least two levels");
    }
    const double s_max = *std::max_element(s.begin(), s.end());
    const auto bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(s_max / bin_width)) + 1);
    StatCurve out;
    out.counts.assign(bins, 0);
    for (double v : s) {
        auto b = static_cast<std::size_t>(std::max(0.0, std::floor(v / bin_width)));
        out.counts[std::min(b, bins - 1)] += 1;
    }
    const double norm = 1.0 / (static_cast<double>(s.size()) * bin_width);
    for (std::size_t b = 0; b < bins; ++b) {
        out.abscissa.push_back((static_cast<double>(b) + 0.5) * bin_width);
        out.ordinate.push_back(static_cast<double>(out.counts[b]) * norm);
    }
    return out;
}

StatCurve cumulative_spacing(const UnfoldedSpectrum& u) {
    auto s = u.spacings();
    if (s.empty()) {
        throw std::invalid_argument("cumulative_spacing: every sequence needs at least two levels");
    }
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    StatCurve out;
    out.abscissa.reserve(2 * s.size());
    out.ordinate.reserve(2 * s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out.abscissa.push_back(s[i]);
        out.ordinate.push_back(static_cast<double>(i) / n);
        out.abscissa.push_back(s[i]);
        out.ordinate.push_back(static_cast<double>(i + 1) / n);
    }
    return out;
}

double reference_value(Model model, Statistic statistic, double x) {
    const bool spacing = statistic == Statistic::spacing_density || statistic == Statistic::spacing_cumulative;
    if (spacing ? !(x >= 0.0) : !(x > 0.0)) {
        throw std::invalid_argument("reference_value: argument outside the statistic's domain");
    }
    switch (statistic) {
        case Statistic::spacing_density:
            switch (model) {
                case Model::poisson: return std::exp(-x);
                case Model::goe: return kPi / 2.0 * x * std::exp(-kPi / 4.0 * x * x);
                case Model::semi_poisson: return 4.0 * x * std::exp(-2.0 * x);
            }
            break;
        case Statistic::spacing_cumulative:
            switch (model) {
                case Model::poisson: return -std::expm1(-x);
                case Model::goe: return -std::expm1(-kPi / 4.0 * x * x);
                case Model::semi_poisson: return 1.0 - (1.0 + 2.0 * x) * std::exp(-2.0 * x);
            }
            break;
        case Statistic::number_variance:
            switch (model) {
                case Model::poisson: return x;
                case Model::goe: return goe_number_variance(x);
                case Model::semi_poisson: return semi_poisson_number_variance(x);
            }
            break;
        case Statistic::delta3:
            switch (model) {
                case Model::poisson: return x / 15.0;
                case Model::goe: return goe_delta3(x);
                case Model::semi_poisson:
                    return delta3_from_number_variance(semi_poisson_number_variance, x);
            }
            break;
    }
    throw std::invalid_argument("reference_value: unknown model or statistic");
}

StatCurve reference_curve(Model model, Statistic statistic, std::span<const double> grid) {
    StatCurve out;
    out.abscissa.assign(grid.begin(), grid.end());
    out.ordinate.reserve(grid.size());
    for (double x : grid) out.ordinate.push_back(reference_value(model, statistic, x));
    if (model == Model::goe && (statistic == Statistic::number_variance || statistic == Statistic::delta3)) {
        if (!grid.empty() && grid.front() < 1.0) {
            out.warnings.emplace_back("GOE long-range references use the large-L asymptote; values for L < 1 are approximate");
        }
    }
    return out;
}

std::vector<double> default_length_grid() {
    std::vector<double> out;
    for (int i = 1; i <= 40; ++i) out.push_back(0.5 * i);
    return out;
}

StatCurve number_variance(const UnfoldedSpectrum& u, std::span<const double> lengths) {
    StatCurve out;
    check_window_preconditions(u, lengths, "number_variance", out);
    for (double L : lengths) {
        double sum_sq = 0.0;
        double sum_n = 0.0;
        long windows = 0;
        for_each_window(u, L, [&](const std::vector<double>& seq, double x) {
            const auto lo = std::lower_bound(seq.begin(), seq.end(), x);
            const auto hi = std::lower_bound(lo, seq.end(), x + L);
            const double n = static_cast<double>(hi - lo);
            sum_sq += (n - L) * (n - L);
            sum_n += n;
            ++windows;
        });
        const double w = static_cast<double>(windows);
        out.abscissa.push_back(L);
        out.ordinate.push_back(sum_sq / w);
        out.counts.push_back(windows);
        const double mean_n = sum_n / w;
        if (std::abs(mean_n - L) > 0.05 * L) {
            out.warnings.push_back("number_variance: <N(L)> = " + std::to_string(mean_n) + " deviates from L = " +
                                   std::to_string(L) + " by more than 5%");
        }
    }
    return out;
}

double delta3_window(std::span<const double> levels, double start, double length) {
    const double end = start + length;
    const double mid = start + 0.5 * length;
    auto lo = std::lower_bound(levels.begin(), levels.end(), start);
    // Integrals over u = E - mid of N, N u, N^2 with N counting levels in [start, E].
    double i0 = 0.0;
    double i1 = 0.0;
    double i2 = 0.0;
    double count = 0.0;
    double left = start;
    auto accumulate = [&](double right) {
        const double a = left - mid;
        const double b = right - mid;
        i0 += count * (b - a);
        i1 += count * 0.5 * (b * b - a * a);
        i2 += count * count * (b - a);
    };
    for (auto it = lo; it != levels.end() && *it <= end; ++it) {
        accumulate(*it);
        left = *it;
        count += 1.0;
    }
    accumulate(end);
    const double L = length;
    const double residual = i2 - i0 * i0 / L - 12.0 * i1 * i1 / (L * L * L);
    return std::max(0.0, residual) / L;
}

StatCurve dyson_mehta(const UnfoldedSpectrum& u, std::span<const double> lengths) {
    StatCurve out;
    check_window_preconditions(u, lengths, "dyson_mehta", out);
    for (double L : lengths) {
        double sum = 0.0;
        long windows = 0;
        for_each_window(u, L, [&](const std::vector<double>& seq, double x) {
            sum += delta3_window(seq, x, L);
            ++windows;
        });
        out.abscissa.push_back(L);
        out.ordinate.push_back(sum / static_cast<double>(windows));
        out.counts.push_back(windows);
    }
    return out;
}

double semicircle_staircase(std::size_t dimension, double energy) {
    const double e = std::clamp(energy, -1.0, 1.0);
    const double n = static_cast<double>(dimension);
    return n * (0.5 + (e * std::sqrt(1.0 - e * e) + std::asin(e)) / kPi);
}

UnfoldedSpectrum generate_reference_sequence(Model model, std::size_t levels, std::uint64_t seed) {
    if (levels < 2) {
        throw std::invalid_argument("generate_reference_sequence: at least two levels required");
    }
    UnfoldedSpectrum u;
    u.provenance = std::string(to_string(model)) + " seed=" + std::to_string(seed);
    auto& seq = u.sequences.emplace_back();
    seq.reserve(levels);
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(1.0);
    switch (model) {
        case Model::poisson: {
            double x = 0.0;
            for (std::size_t i = 0; i < levels; ++i) {
                x += gap(rng);
                seq.push_back(x);
            }
            break;
        }
        case Model::semi_poisson: {
            // Every second level of a unit-density Poisson sequence, rescaled to unit spacing.
            double x = 0.0;
            for (std::size_t i = 0; i < 2 * levels; ++i) {
                x += gap(rng);
                if (i % 2 == 1) seq.push_back(0.5 * x);
            }
            break;
        }
        case Model::goe: {
            const std::size_t dim = 2 * levels;
            const Eigen::MatrixXd h = sample_goe(static_cast<int>(dim), seed);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h, Eigen::EigenvaluesOnly);
            const Eigen::VectorXd& ev = solver.eigenvalues();
            const std::size_t first = levels / 2;
            for (std::size_t i = first; i < first + levels; ++i) {
                seq.push_back(semicircle_staircase(dim, ev(static_cast<Eigen::Index>(i))));
            }
            break;
        }
    }
    return u;
}

std::vector<MissingLevelReport> missing_level_scan(std::span<const double> wavevectors,
                                                   const WeylParams& params, std::size_t window) {
    std::vector<MissingLevelReport> out;
    const std::size_t n = wavevectors.size();
    if (window == 0 || n < 3 * window) return out;

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double fluc = static_cast<double>(i + 1) - weyl_count(wavevectors[i], params);
        prefix[i + 1] = prefix[i] + fluc;
    }
    const double w = static_cast<double>(window);
    std::vector<double> step(n + 1, 0.0);
    for (std::size_t i = window; i + window <= n; ++i) {
        step[i] = (prefix[i + window] - prefix[i]) / w - (prefix[i] - prefix[i - window]) / w;
    }
    std::size_t i = window;
    while (i + window <= n) {
        if (step[i] >= -0.5) {
            ++i;
            continue;
        }
        std::size_t best = i;
        std::size_t run_end = i;
        while (run_end + window <= n && step[run_end] < -0.5) {
            if (step[run_end] < step[best]) best = run_end;
            ++run_end;
        }
        if (step[best] <= -0.7) {
            out.push_back({best, wavevectors[best], step[best], static_cast<int>(std::lround(-step[best]))});
        }
        i = run_end;
    }
    return out;
}

UnfoldedSpectrum split_sequences(const UnfoldedSpectrum& u, std::span<const std::size_t> cuts) {
    std::vector<std::size_t> sorted(cuts.begin(), cuts.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    UnfoldedSpectrum out;
    out.provenance = u.provenance;
    std::size_t offset = 0;
    auto cut = sorted.begin();
    for (const auto& seq : u.sequences) {
        std::size_t begin = 0;
        while (cut != sorted.end() && *cut < offset + seq.size()) {
            if (*cut <= offset) {
                throw std::invalid_argument("split_sequences: cut " + std::to_string(*cut) +
                                            " is not strictly inside a sequence");
            }
            const std::size_t local = *cut - offset;
            out.sequences.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(begin),
                                       seq.begin() + static_cast<std::ptrdiff_t>(local));
            begin = local;
            ++cut;
        }
        out.sequences.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(begin), seq.end());
        offset += seq.size();
    }
    if (cut != sorted.end()) {
        throw std::invalid_argument("split_sequences: cut " + std::to_string(*cut) + " is out of range");
    }
    return out;
}

double ks_distance(const StatCurve& a, const StatCurve& b) {
    require_cumulative(a);
    require_cumulative(b);
    std::vector<double> grid;
    grid.reserve(a.size() + b.size());
    std::merge(a.abscissa.begin(), a.abscissa.end(), b.abscissa.begin(), b.abscissa.end(), std::back_inserter(grid));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    double d = 0.0;
    for (double x : grid) {
        d = std::max(d, std::abs(left_limit(a, x) - left_limit(b, x)));
        d = std::max(d, std::abs(right_limit(a, x) - right_limit(b, x)));
    }
    return d;
}

double ks_distance_to_model(std::span<const double> spacings, Model model) {
    if (spacings.empty()) {
        throw std::invalid_argument("ks_distance_to_model: no spacings");
    }
    std::vector<double> s(spacings.begin(), spacings.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = reference_value(model, Statistic::spacing_cumulative, std::max(0.0, s[i]));
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

Model SpacingSummary::closest() const {
    if (ks_poisson <= ks_goe && ks_poisson <= ks_semi_poisson) return Model::poisson;
    if (ks_semi_poisson <= ks_goe) return Model::semi_poisson;
    return Model::goe;
}

SpacingSummary summarize_spacings(const UnfoldedSpectrum& u) {
    const auto s = u.spacings();
    if (s.size() < 2) {
        throw std::invalid_argument("summarize_spacings: at least two spacings required");
    }
    SpacingSummary out;
    out.count = s.size();
    const double n = static_cast<double>(s.size());
    out.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - out.mean) * (v - out.mean);
    out.variance = ss / (n - 1.0);
    out.ks_poisson = ks_distance_to_model(s, Model::poisson);
    out.ks_goe = ks_distance_to_model(s, Model::goe);
    out.ks_semi_poisson = ks_distance_to_model(s, Model::semi_poisson);
    return out;
}

}  // namespace mwb
