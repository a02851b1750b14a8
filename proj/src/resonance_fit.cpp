#include "mwb/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>

namespace mwb {

namespace {

using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

constexpr std::size_t kMinSamplesPerResonance = 8;

// Parameters per resonance: center, log width, signed amplitude; then Re b, Im b.
struct Cluster {
    std::vector<std::size_t> members;
    std::size_t lo = 0;
    std::size_t hi = 0;   // exclusive
};

struct ScaledProblem {
    std::vector<double> f;      // (f - origin) / scale
    std::vector<cd> data;
    double delta = 0.0;
    std::size_t resonances = 0;

    [[nodiscard]] std::size_t params() const { return 3 * resonances + 2; }

    [[nodiscard]] cd model(const Eigen::VectorXd& p, double x) const {
        cd s{delta + p[static_cast<Eigen::Index>(3 * resonances)], p[static_cast<Eigen::Index>(3 * resonances + 1)]};
        for (std::size_t k = 0; k < resonances; ++k) {
            const auto j = static_cast<Eigen::Index>(3 * k);
            const double w = std::exp(p[j + 1]);
            s -= kI * p[j + 2] / cd(x - p[j], 0.5 * w);
        }
        return s;
    }

    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& p) const {
        Eigen::VectorXd r(static_cast<Eigen::Index>(2 * f.size()));
        for (std::size_t i = 0; i < f.size(); ++i) {
            const cd d = model(p, f[i]) - data[i];
            r[static_cast<Eigen::Index>(2 * i)] = d.real();
            r[static_cast<Eigen::Index>(2 * i + 1)] = d.imag();
        }
        return r;
    }

    [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
        const auto np = static_cast<Eigen::Index>(params());
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * f.size()), np);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(2 * i);
            for (std::size_t k = 0; k < resonances; ++k) {
                const auto j = static_cast<Eigen::Index>(3 * k);
                const double w = std::exp(p[j + 1]);
                const cd z(f[i] - p[j], 0.5 * w);
                const cd z2 = z * z;
                const cd dc = -kI * p[j + 2] / z2;
                const cd dlw = -p[j + 2] * w / (2.0 * z2);
                const cd da = -kI / z;
                jac(row, j) = dc.real();
                jac(row + 1, j) = dc.imag();
                jac(row, j + 1) = dlw.real();
                jac(row + 1, j + 1) = dlw.imag();
                jac(row, j + 2) = da.real();
                jac(row + 1, j + 2) = da.imag();
            }
            jac(row, np - 2) = 1.0;
            jac(row + 1, np - 1) = 1.0;
        }
        return jac;
    }
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::VectorXd variances;
    FitReport report;
};

LmResult levenberg_marquardt(const ScaledProblem& problem, Eigen::VectorXd p, const FitOptions& options) {
    LmResult out;
    Eigen::VectorXd r = problem.residual(p);
    double cost = 0.5 * r.squaredNorm();
    out.report.cost_history.push_back(cost);
    double lambda = 1e-3;
    bool converged = false;
    int it = 0;
    std::string message;
    for (; it < options.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd jac = problem.jacobian(p);
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        if (cost == 0.0 || g.norm() <= 1e-14 * jac.norm() * r.norm()) {
            converged = true;
            message = "stationary point";
            break;
        }
        Eigen::VectorXd d = a.diagonal().cwiseMax(1e-12 * a.diagonal().maxCoeff());
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = a;
            damped.diagonal() += lambda * d;
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            const Eigen::VectorXd trial = p + step;
            const Eigen::VectorXd rt = problem.residual(trial);
            const double ct = 0.5 * rt.squaredNorm();
            if (std::isfinite(ct) && ct < cost) {
                accepted = true;
                p = trial;
                r = rt;
                cost = ct;
                out.report.cost_history.push_back(cost);
                lambda = std::max(lambda / 10.0, 1e-12);
                if (step.norm() <= options.tolerance * (p.norm() + options.tolerance)) {
                    converged = true;
                    message = "relative parameter change below tolerance";
                }
            } else {
                lambda *= 10.0;
                if (lambda > 1e12) {
                    // No descent direction left: accept as converged only at a stationary point.
                    converged = g.norm() <= 1e-6 * jac.norm() * r.norm();
                    message = converged ? "no further decrease at stationary point"
                                        : "damping exhausted without decrease";
                    break;
                }
            }
        }
        if (!accepted) break;
    }
    if (!converged && message.empty()) message = "iteration limit reached";

    const Eigen::MatrixXd jac = problem.jacobian(p);
    const auto dof = static_cast<double>(r.size()) - static_cast<double>(p.size());
    const double sigma2 = dof > 0.0 ? r.squaredNorm() / dof : 0.0;
    const Eigen::MatrixXd cov = sigma2 * (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
    out.params = p;
    out.variances = cov.diagonal();
    out.report.iterations = it;
    out.report.converged = converged;
    out.report.message = message;
    return out;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

cd median_value(const ComplexTrace& trace) {
    std::vector<double> re, im;
    for (const auto& v : trace.values) {
        re.push_back(v.real());
        im.push_back(v.imag());
    }
    return {median_of(re), median_of(im)};
}

std::vector<Cluster> build_clusters(const ComplexTrace& trace, std::vector<PeakGuess>& guesses, double half) {
    std::sort(guesses.begin(), guesses.end(), [](const PeakGuess& a, const PeakGuess& b) { return a.center < b.center; });
    const auto& f = trace.frequencies;
    std::vector<Cluster> clusters;
    double current_hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < guesses.size(); ++i) {
        const double lo = guesses[i].center - half * guesses[i].width;
        const double hi = guesses[i].center + half * guesses[i].width;
        if (clusters.empty() || lo > current_hi) {
            clusters.push_back({});
            current_hi = hi;
        }
        current_hi = std::max(current_hi, hi);
        clusters.back().members.push_back(i);
        const auto a = static_cast<std::size_t>(std::lower_bound(f.begin(), f.end(), lo) - f.begin());
        const auto b = static_cast<std::size_t>(std::upper_bound(f.begin(), f.end(), hi) - f.begin());
        auto& c = clusters.back();
        if (c.members.size() == 1) {
            c.lo = a;
            c.hi = b;
        } else {
            c.lo = std::min(c.lo, a);
            c.hi = std::max(c.hi, b);
        }
    }
    for (auto& c : clusters) {
        const std::size_t need = kMinSamplesPerResonance * c.members.size();
        while (c.hi - c.lo < need && (c.lo > 0 || c.hi < f.size())) {
            if (c.lo > 0) --c.lo;
            if (c.hi < f.size() && c.hi - c.lo < need) ++c.hi;
        }
        if (c.hi - c.lo < need) {
            throw std::invalid_argument("fit_resonances: trace has fewer than 8 samples per resonance");
        }
    }
    return clusters;
}

template <class Fn>
void run_batches(const std::vector<std::vector<std::size_t>>& batches, Fn&& fn) {
    const std::size_t threads = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), batches.size());
    std::vector<std::exception_ptr> errors(batches.size());
    auto work = [&](std::size_t t) {
        for (std::size_t b = t; b < batches.size(); b += threads) {
            try {
                for (auto ci : batches[b]) fn(ci);
            } catch (...) {
                errors[b] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work, t);
        work(0);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

ComplexTrace breit_wigner_model(std::span<const Resonance> resonances, bool diagonal,
                                std::span<const double> frequencies) {
    ComplexTrace out;
    out.pair = diagonal ? ChannelPair{1, 1} : ChannelPair{1, 2};
    out.frequencies.assign(frequencies.begin(), frequencies.end());
    out.values.reserve(frequencies.size());
    for (double f : frequencies) {
        cd s{diagonal ? 1.0 : 0.0, 0.0};
        for (const auto& r : resonances) {
            s -= kI * r.signed_amplitude() / cd(f - r.center, 0.5 * r.width);
        }
        out.values.push_back(s);
    }
    return out;
}

std::vector<PeakGuess> detect_peaks(const ComplexTrace& trace, double prominence) {
    validate_trace(trace);
    if (trace.size() <= 10) {
        throw std::invalid_argument("detect_peaks: trace needs more than 10 samples");
    }
    const auto n = trace.size();
    const cd reference = trace.pair.diagonal() ? median_value(trace) : cd{0.0, 0.0};
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = std::abs(trace.values[i] - reference);

    std::vector<PeakGuess> out;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(s[i] > s[i - 1] && s[i] >= s[i + 1])) continue;
        std::size_t l = i;
        double left_min = s[i];
        while (l > 0 && s[l - 1] <= s[i]) {
            --l;
            left_min = std::min(left_min, s[l]);
        }
        std::size_t r = i;
        double right_min = s[i];
        while (r + 1 < n && s[r + 1] <= s[i]) {
            ++r;
            right_min = std::min(right_min, s[r]);
        }
        const double base = std::max(left_min, right_min);
        if (s[i] - base < prominence) continue;

        const double level = s[i] / std::sqrt(2.0);
        const auto& f = trace.frequencies;
        double fl = f[l];
        for (std::size_t j = i; j > l; --j) {
            if (s[j - 1] <= level) {
                fl = f[j - 1] + (level - s[j - 1]) / (s[j] - s[j - 1]) * (f[j] - f[j - 1]);
                break;
            }
        }
        double fr = f[r];
        for (std::size_t j = i; j < r; ++j) {
            if (s[j + 1] <= level) {
                fr = f[j] + (s[j] - level) / (s[j] - s[j + 1]) * (f[j + 1] - f[j]);
                break;
            }
        }
        PeakGuess g;
        g.center = f[i];
        g.width = std::max(fr - fl, f[i + 1] - f[i - 1]);
        // At resonance the term equals -2 a / width, real.
        const double re = (trace.values[i] - reference).real();
        g.amplitude = -(re == 0.0 ? s[i] : re) * g.width / 2.0;
        if (std::abs(g.amplitude) < 0.25 * s[i] * g.width / 2.0) {
            g.amplitude = std::copysign(s[i] * g.width / 2.0, g.amplitude);
        }
        out.push_back(g);
    }
    return out;
}

ResonanceSet fit_resonances(const ComplexTrace& trace, std::span<const PeakGuess> guesses_in,
                            const FitOptions& options) {
    validate_trace(trace);
    if (guesses_in.empty()) throw std::invalid_argument("fit_resonances: at least one guess required");
    if (!(options.window_widths > 0.0)) throw std::invalid_argument("fit_resonances: window must be positive");
    for (const auto& g : guesses_in) {
        if (!(g.width > 0.0)) throw std::invalid_argument("fit_resonances: width guesses must be positive");
    }
    std::vector<PeakGuess> guesses(guesses_in.begin(), guesses_in.end());
    const auto clusters = build_clusters(trace, guesses, options.window_widths);
    const double delta = trace.pair.diagonal() ? 1.0 : 0.0;

    ResonanceSet out;
    out.pair = trace.pair;
    out.resonances.resize(guesses.size());
    for (std::size_t i = 0; i < guesses.size(); ++i) {
        auto& r = out.resonances[i];
        r.center = guesses[i].center;
        r.width = guesses[i].width;
        r.amplitude = std::abs(guesses[i].amplitude);
        r.sign = guesses[i].amplitude < 0.0 ? -1 : 1;
    }
    // Clusters are batched by frequency window; batches run in parallel and
    // only read the previous sweep, so results do not depend on scheduling.
    std::vector<std::vector<std::size_t>> batches;
    {
        std::map<long long, std::vector<std::size_t>> by_window;
        const double f0 = trace.frequencies.front();
        for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
            const double fc = guesses[clusters[ci].members.front()].center;
            const long long key = options.batch_hz > 0.0 ? static_cast<long long>(std::floor((fc - f0) / options.batch_hz)) : 0;
            by_window[key].push_back(ci);
        }
        for (auto& [_, v] : by_window) batches.push_back(std::move(v));
    }
    std::vector<cd> backgrounds(clusters.size(), cd{0.0, 0.0});
    std::vector<bool> warm(clusters.size(), false);
    std::vector<FitReport> reports(clusters.size());

    // Jacobi sweeps: each cluster is refitted with the tails of all other
    // clusters (from the previous sweep) subtracted from the data.
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        const std::vector<Resonance> previous = out.resonances;
        std::vector<Resonance> next = previous;
        auto fit_cluster = [&](std::size_t ci) {
            const auto& c = clusters[ci];
            std::vector<bool> inside(previous.size(), false);
            for (auto m : c.members) inside[m] = true;

            double scale = 0.0;
            for (auto m : c.members) scale += previous[m].width;
            scale /= static_cast<double>(c.members.size());
            const double origin = guesses[c.members.front()].center;

            ScaledProblem problem;
            problem.delta = delta;
            problem.resonances = c.members.size();
            for (std::size_t i = c.lo; i < c.hi; ++i) {
                const double f = trace.frequencies[i];
                cd tails{0.0, 0.0};
                for (std::size_t k = 0; k < previous.size(); ++k) {
                    if (inside[k]) continue;
                    tails -= kI * previous[k].signed_amplitude() / cd(f - previous[k].center, 0.5 * previous[k].width);
                }
                problem.f.push_back((f - origin) / scale);
                problem.data.push_back(trace.values[i] - tails);
            }
            Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.params()));
            for (std::size_t k = 0; k < c.members.size(); ++k) {
                const auto& r = previous[c.members[k]];
                const auto j = static_cast<Eigen::Index>(3 * k);
                p[j] = (r.center - origin) / scale;
                p[j + 1] = std::log(r.width / scale);
                p[j + 2] = r.signed_amplitude() / scale;
            }
            cd background = backgrounds[ci];
            if (!warm[ci]) {
                background = {0.0, 0.0};
                for (std::size_t i = 0; i < problem.f.size(); ++i) {
                    background += problem.data[i] - problem.model(p, problem.f[i]);
                }
                background /= static_cast<double>(problem.f.size());
            }
            p[static_cast<Eigen::Index>(problem.params() - 2)] = background.real();
            p[static_cast<Eigen::Index>(problem.params() - 1)] = background.imag();

            LmResult fit = levenberg_marquardt(problem, p, options);
            fit.report.members = c.members;
            backgrounds[ci] = {fit.params[static_cast<Eigen::Index>(problem.params() - 2)],
                               fit.params[static_cast<Eigen::Index>(problem.params() - 1)]};
            warm[ci] = true;
            for (std::size_t k = 0; k < c.members.size(); ++k) {
                const auto j = static_cast<Eigen::Index>(3 * k);
                Resonance r;
                r.center = origin + scale * fit.params[j];
                r.width = scale * std::exp(fit.params[j + 1]);
                const double a = scale * fit.params[j + 2];
                r.amplitude = std::abs(a);
                r.sign = a < 0.0 ? -1 : 1;
                r.center_sigma = scale * std::sqrt(std::max(0.0, fit.variances[j]));
                r.width_sigma = r.width * std::sqrt(std::max(0.0, fit.variances[j + 1]));
                r.amplitude_sigma = scale * std::sqrt(std::max(0.0, fit.variances[j + 2]));
                r.converged = fit.report.converged;
                if (!r.converged) {
                    r.diagnostics = fit.report.message + " after " + std::to_string(fit.report.iterations) + " iterations";
                }
                next[c.members[k]] = r;
            }
            reports[ci] = std::move(fit.report);
        };
        run_batches(batches, fit_cluster);
        out.resonances = std::move(next);
        if (clusters.size() == 1) break;
        double change = 0.0;
        for (std::size_t k = 0; k < previous.size(); ++k) {
            const auto& a = previous[k];
            const auto& b = out.resonances[k];
            change = std::max({change, std::abs(a.center - b.center) / b.width, std::abs(a.width / b.width - 1.0),
                               std::abs(a.signed_amplitude() - b.signed_amplitude()) / (b.amplitude + b.width * 1e-12)});
        }
        if (change < options.tolerance) break;
    }
    for (const auto& r : out.resonances) {
        if (!r.converged) out.warnings.push_back("fit near " + std::to_string(r.center) + " Hz: " + r.diagnostics);
    }
    out.reports = std::move(reports);
    return out;
}

ResonanceSet fit_trace_windows(const ComplexTrace& trace, const WindowFitOptions& options) {
    validate_trace(trace);
    if (!(options.window_hz > 0.0)) throw std::invalid_argument("fit_trace_windows: window width must be positive");
    ResonanceSet out;
    out.pair = trace.pair;
    if (trace.size() <= 10) {
        out.warnings.emplace_back("trace too short for peak detection");
        return out;
    }
    auto guesses = detect_peaks(trace, options.prominence);
    if (guesses.empty()) {
        out.warnings.emplace_back("no peaks above the prominence threshold");
        return out;
    }
    FitOptions fit = options.fit;
    fit.batch_hz = options.window_hz;
    std::vector<std::string> merged;
    for (;;) {
        out = fit_resonances(trace, guesses, fit);
        // Two guesses that converge onto one pole form a cancelling pair; keep the one that moved least.
        std::size_t drop = guesses.size();
        for (std::size_t i = 0; i < guesses.size() && drop == guesses.size(); ++i) {
            for (std::size_t j = i + 1; j < guesses.size(); ++j) {
                const auto& a = out.resonances[i];
                const auto& b = out.resonances[j];
                if (std::abs(a.center - b.center) >= 0.5 * std::max(a.width, b.width)) continue;
                const double move_a = std::abs(a.center - guesses[i].center) / guesses[i].width;
                const double move_b = std::abs(b.center - guesses[j].center) / guesses[j].width;
                drop = move_a > move_b ? i : j;
                merged.push_back("merged duplicate fits near " + std::to_string(a.center));
                break;
            }
        }
        if (drop == guesses.size()) break;
        guesses.erase(guesses.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    out.warnings.insert(out.warnings.end(), merged.begin(), merged.end());
    // Keep report member indices valid after sorting.
    std::vector<std::size_t> order(out.resonances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.resonances[a].center < out.resonances[b].center;
    });
    std::vector<std::size_t> rank(order.size());
    std::vector<Resonance> sorted;
    for (std::size_t i = 0; i < order.size(); ++i) {
        rank[order[i]] = i;
        sorted.push_back(out.resonances[order[i]]);
    }
    out.resonances = std::move(sorted);
    for (auto& rep : out.reports) {
        for (auto& m : rep.members) m = rank[m];
    }
    return out;
}

std::vector<ReciprocityEntry> reciprocity_report(const ResonanceSet& ab, const ResonanceSet& ba,
                                                 double tolerance_widths) {
    std::vector<ReciprocityEntry> out;
    for (const auto& r : ab.resonances) {
        const Resonance* best = nullptr;
        for (const auto& q : ba.resonances) {
            if (std::abs(q.center - r.center) > tolerance_widths * r.width) continue;
            if (!best || std::abs(q.center - r.center) < std::abs(best->center - r.center)) best = &q;
        }
        if (!best) continue;
        ReciprocityEntry e;
        e.center = r.center;
        e.amplitude_ab = r.amplitude;
        e.amplitude_ba = best->amplitude;
        const double scale = std::max(r.amplitude, best->amplitude);
        e.relative_difference = scale > 0.0 ? std::abs(r.amplitude - best->amplitude) / scale : 0.0;
        out.push_back(e);
    }
    return out;
}

}  // namespace mwb
