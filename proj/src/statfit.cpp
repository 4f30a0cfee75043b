#include "chainlens/statfit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_erf.h>

#include "chainlens/kernels.hpp"

namespace chainlens {

namespace {

struct GslInit {
    GslInit() { gsl_set_error_handler_off(); }
};
const GslInit gsl_init;

constexpr std::size_t kMinTail = 10;
constexpr double kLambdaFloor = 1e-12;

double log_upper_gamma_integral(double a, double x);

std::vector<double> tail_samples(std::span<const double> samples, double x_min) {
    std::vector<double> tail;
    tail.reserve(samples.size());
    for (double v : samples) {
        if (!std::isfinite(v)) fail_data("fit input contains a non-finite sample");
        if (v >= x_min) tail.push_back(v);
    }
    std::sort(tail.begin(), tail.end());
    if (!tail.empty() && tail.front() <= 0.0)
        fail_data("fit requires strictly positive tail samples");
    return tail;
}

void require_tail(const std::vector<double>& tail) {
    if (tail.size() < kMinTail)
        fail_data("too few tail samples (" + std::to_string(tail.size()) + ", need >= " +
                  std::to_string(kMinTail) + ")");
}

// 8-point Gauss-Legendre on [a, b]
template <typename F>
double gl8(const F& f, double a, double b) {
    static const double nodes[4] = {0.1834346424956498, 0.5255324099163290,
                                    0.7966664774136267, 0.9602898564975363};
    static const double weights[4] = {0.3626837833783620, 0.3137066458778873,
                                      0.2223810344533745, 0.1012285362903763};
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i)
        acc += weights[i] * (f(mid - half * nodes[i]) + f(mid + half * nodes[i]));
    return acc * half;
}

// KS for the truncated power law in one cumulative pass over the sorted tail
double truncated_ks_sweep(const std::vector<double>& tail, double alpha, double lambda,
                          double x_min) {
    auto density = [&](double s) { return std::pow(s, -alpha) * std::exp(-lambda * s); };
    const std::size_t n = tail.size();
    std::vector<double> cum(n);
    double acc = 0.0, prev = x_min;
    for (std::size_t i = 0; i < n; ++i) {
        acc += gl8(density, prev, tail[i]);
        cum[i] = acc;
        prev = tail[i];
    }
    const double log_tail_mass = (alpha - 1.0) * std::log(lambda) +
                                 log_upper_gamma_integral(1.0 - alpha, lambda * tail.back());
    const double total = acc + (std::isfinite(log_tail_mass) ? std::exp(log_tail_mass) : 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) return 1.0;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cum[i] / total;
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        d = std::max(d, std::max(std::abs(f - lo), std::abs(f - hi)));
    }
    return d;
}

double ks_statistic(const std::vector<double>& sorted_tail,
                    const std::function<double(double)>& cdf) {
    const std::size_t n = sorted_tail.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cdf(sorted_tail[i]);
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        d = std::max(d, std::max(std::abs(f - lo), std::abs(f - hi)));
    }
    return d;
}

double sum_of(const std::vector<double>& v) {
    return kernels::par::sum(std::span<const double>(v.data(), v.size()));
}

double power_law_alpha(const std::vector<double>& tail, double x_min, double* log_sum_out) {
    std::vector<double> logs(tail.size());
    for (std::size_t i = 0; i < tail.size(); ++i) logs[i] = std::log(tail[i] / x_min);
    const double log_sum = sum_of(logs);
    if (log_sum_out) *log_sum_out = log_sum;
    if (log_sum <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 + static_cast<double>(tail.size()) / log_sum;
}

double power_law_loglik(const std::vector<double>& tail, double alpha, double x_min,
                        double log_sum) {
    const double n = static_cast<double>(tail.size());
    // density (alpha-1)/x_min * (x/x_min)^-alpha on [x_min, inf)
    return n * std::log((alpha - 1.0) / x_min) - alpha * log_sum;
}

// Deterministic Nelder-Mead for 2-d objectives (maximization).
struct NelderMead {
    double step0, step1;
    std::size_t max_iter = 600;
    double tol = 1e-11;

    struct Result {
        double x0, x1, value;
        bool converged;
        std::size_t iterations;
    };

    Result maximize(const std::function<double(double, double)>& f, double x0, double x1) const {
        struct Vertex {
            double p[2];
            double v;
        };
        auto eval = [&](double a, double b) {
            const double v = f(a, b);
            return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        };
        std::array<Vertex, 3> s = {Vertex{{x0, x1}, eval(x0, x1)},
                                   Vertex{{x0 + step0, x1}, eval(x0 + step0, x1)},
                                   Vertex{{x0, x1 + step1}, eval(x0, x1 + step1)}};
        std::size_t it = 0;
        for (; it < max_iter; ++it) {
            std::sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) {
                return a.v > b.v;  // best first
            });
            if (std::abs(s[0].v - s[2].v) <
                tol * (std::abs(s[0].v) + std::abs(s[2].v) + 1e-30))
                break;
            const double c0 = (s[0].p[0] + s[1].p[0]) / 2.0;
            const double c1 = (s[0].p[1] + s[1].p[1]) / 2.0;
            const double r0 = c0 + (c0 - s[2].p[0]);
            const double r1 = c1 + (c1 - s[2].p[1]);
            const double rv = eval(r0, r1);
            if (rv > s[0].v) {
                const double e0 = c0 + 2.0 * (c0 - s[2].p[0]);
                const double e1 = c1 + 2.0 * (c1 - s[2].p[1]);
                const double ev = eval(e0, e1);
                s[2] = ev > rv ? Vertex{{e0, e1}, ev} : Vertex{{r0, r1}, rv};
            } else if (rv > s[1].v) {
                s[2] = Vertex{{r0, r1}, rv};
            } else {
                const double k0 = c0 + 0.5 * (s[2].p[0] - c0);
                const double k1 = c1 + 0.5 * (s[2].p[1] - c1);
                const double kv = eval(k0, k1);
                if (kv > s[2].v) {
                    s[2] = Vertex{{k0, k1}, kv};
                } else {
                    for (int i = 1; i < 3; ++i) {
                        s[i].p[0] = s[0].p[0] + 0.5 * (s[i].p[0] - s[0].p[0]);
                        s[i].p[1] = s[0].p[1] + 0.5 * (s[i].p[1] - s[0].p[1]);
                        s[i].v = eval(s[i].p[0], s[i].p[1]);
                    }
                }
            }
        }
        std::sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.v > b.v; });
        return {s[0].p[0], s[0].p[1], s[0].v, it < max_iter, it};
    }
};

}  // namespace

const char* fit_model_name(FitModel m) {
    switch (m) {
        case FitModel::PowerLaw: return "power_law";
        case FitModel::TruncatedPowerLaw: return "truncated_power_law";
        case FitModel::LognormalPositive: return "lognormal_positive";
    }
    return "?";
}

namespace {

// log Gamma(a, x) for any real a and x > 0, via the substitution t = x e^u:
// Gamma(a,x) = x^a * int_0^inf exp(a u - x e^u) du. The integrand is smooth
// and the integral is evaluated by Simpson's rule with the peak factored
// out, so it stays accurate where library implementations lose digits
// (a near negative integers with tiny x).
double log_upper_gamma_integral(double a, double x) {
    if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double upper = std::log(800.0 / x + 1.0) + 2.0;
    const std::size_t n = 4096;  // even
    const double h = upper / static_cast<double>(n);
    auto phi = [&](double u) { return a * u - x * std::exp(u); };
    double peak = phi(0.0);
    if (a > 0.0 && a > x) {  // interior maximum at u = ln(a/x)
        const double u_star = std::log(a / x);
        if (u_star > 0.0 && u_star < upper) peak = std::max(peak, phi(u_star));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double u = h * static_cast<double>(i);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * std::exp(phi(u) - peak);
    }
    acc *= h / 3.0;
    return a * std::log(x) + peak + std::log(acc);
}

}  // namespace

double upper_incomplete_gamma(double a, double x) {
    return std::exp(log_upper_gamma_integral(a, x));
}

double power_law_cdf(double x, double alpha, double x_min) {
    if (x <= x_min) return 0.0;
    return 1.0 - std::pow(x / x_min, 1.0 - alpha);
}

double truncated_power_law_cdf(double x, double alpha, double lambda, double x_min) {
    if (x <= x_min) return 0.0;
    const double log_denom = log_upper_gamma_integral(1.0 - alpha, lambda * x_min);
    const double log_num = log_upper_gamma_integral(1.0 - alpha, lambda * x);
    if (!std::isfinite(log_denom) || !std::isfinite(log_num))
        return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - std::exp(log_num - log_denom);
}

double lognormal_tail_cdf(double x, double mu, double sigma, double x_min) {
    if (x <= x_min) return 0.0;
    auto phi = [&](double v) { return 0.5 * gsl_sf_erfc(-(std::log(v) - mu) / (sigma * M_SQRT2)); };
    const double f0 = phi(x_min);
    return (phi(x) - f0) / (1.0 - f0);
}

FitResult fit_power_law(std::span<const double> samples, double x_min) {
    if (x_min == kAutoXmin) {
        // Clauset-style scan: pick the candidate minimizing the KS distance.
        std::vector<double> sorted(samples.begin(), samples.end());
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> uniq(sorted);
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        std::vector<double> candidates;
        const std::size_t max_candidates = 200;
        if (uniq.size() <= max_candidates)
            candidates = uniq;
        else
            for (std::size_t i = 0; i < max_candidates; ++i)
                candidates.push_back(uniq[i * uniq.size() / max_candidates]);
        std::vector<double> ks(candidates.size(), std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(candidates.size()); ++ci) {
            const double xm = candidates[static_cast<std::size_t>(ci)];
            const auto lo = std::lower_bound(sorted.begin(), sorted.end(), xm);
            const std::vector<double> tail(lo, sorted.end());
            if (tail.size() < kMinTail || tail.front() <= 0) continue;
            double log_sum = 0;
            for (double v : tail) log_sum += std::log(v / xm);
            if (log_sum <= 0) continue;
            const double alpha = 1.0 + static_cast<double>(tail.size()) / log_sum;
            ks[static_cast<std::size_t>(ci)] =
                ks_statistic(tail, [&](double x) { return power_law_cdf(x, alpha, xm); });
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < ks.size(); ++i)
            if (ks[i] < ks[best]) best = i;
        if (!std::isfinite(ks[best])) fail_data("x_min scan found no viable tail");
        return fit_power_law(samples, candidates[best]);
    }

    const std::vector<double> tail = tail_samples(samples, x_min);
    require_tail(tail);
    if (tail.front() == tail.back())
        fail_data("degenerate power-law input: zero log-spread (all tail samples equal)");
    double log_sum = 0;
    FitResult r;
    r.model = FitModel::PowerLaw;
    r.x_min = x_min;
    r.n_tail = tail.size();
    r.alpha = power_law_alpha(tail, x_min, &log_sum);
    if (!std::isfinite(r.alpha))
        fail_data("degenerate power-law input: zero log-spread (all tail samples equal)");
    r.loglik = power_law_loglik(tail, r.alpha, x_min, log_sum);
    r.ks = ks_statistic(tail, [&](double x) { return power_law_cdf(x, r.alpha, x_min); });
    return r;
}

FitResult fit_truncated_power_law(std::span<const double> samples, double x_min) {
    const std::vector<double> tail = tail_samples(samples, x_min);
    require_tail(tail);
    const std::size_t n = tail.size();

    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) logs[i] = std::log(tail[i]);
    const double sum_log = sum_of(logs);
    const double sum_x = sum_of(tail);
    const double mean = sum_x / static_cast<double>(n);

    auto loglik = [&](double alpha, double log_lambda) -> double {
        if (alpha < -10.0 || alpha > 30.0 || log_lambda < std::log(kLambdaFloor) ||
            log_lambda > 25.0)
            return -std::numeric_limits<double>::infinity();
        const double lambda = std::exp(log_lambda);
        const double log_gamma = log_upper_gamma_integral(1.0 - alpha, lambda * x_min);
        if (!std::isfinite(log_gamma)) return -std::numeric_limits<double>::infinity();
        const double log_z = (alpha - 1.0) * log_lambda + log_gamma;
        return -alpha * sum_log - lambda * sum_x - static_cast<double>(n) * log_z;
    };

    // start from the pure power-law exponent and the exponential rate
    double pl_log_sum = 0;
    const double alpha_pl = power_law_alpha(tail, x_min, &pl_log_sum);
    const double alpha0 = std::isfinite(alpha_pl) ? std::min(alpha_pl, 10.0) : 1.5;
    const double log_lambda0 = std::log(1.0 / std::max(mean, x_min * 1.0001));

    NelderMead nm{0.25, 0.5};
    auto best = nm.maximize(loglik, alpha0, log_lambda0);
    // boundary candidates keep the fit nested above the pure power law and
    // the pure exponential
    const std::array<std::pair<double, double>, 3> extras = {
        std::pair<double, double>{alpha0, std::log(kLambdaFloor)},
        {0.0, log_lambda0},
        {1.0, log_lambda0}};
    for (const auto& [a, ll] : extras) {
        auto alt = nm.maximize(loglik, a, ll);
        if (alt.value > best.value) best = alt;
    }
    if (!std::isfinite(best.value))
        fail_data("truncated power-law fit did not converge (no finite likelihood found)");

    FitResult r;
    r.model = FitModel::TruncatedPowerLaw;
    r.x_min = x_min;
    r.n_tail = n;
    r.alpha = best.x0;
    r.lambda = std::exp(best.x1);
    r.loglik = best.value;
    r.ks = truncated_ks_sweep(tail, r.alpha, r.lambda, x_min);
    if (!std::isfinite(r.ks)) r.ks = 1.0;
    return r;
}

FitResult fit_lognormal_positive(std::span<const double> samples, double x_min) {
    if (x_min <= 0.0) fail_data("lognormal fit requires x_min > 0");
    const std::vector<double> tail = tail_samples(samples, x_min);
    require_tail(tail);
    const std::size_t n = tail.size();

    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) logs[i] = std::log(tail[i]);
    const double log_mean = sum_of(logs) / static_cast<double>(n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (logs[i] - log_mean) * (logs[i] - log_mean);
    const double log_var = sum_of(sq) / static_cast<double>(n);

    FitResult r;
    r.model = FitModel::LognormalPositive;
    r.x_min = x_min;
    r.n_tail = n;
    if (log_var <= 1e-18 * (1.0 + log_mean * log_mean)) {
        r.mu = log_mean;
        r.sigma = 0.0;
        r.degenerate = true;
        r.warning = "constant tail sample; sigma is zero";
        r.loglik = std::numeric_limits<double>::infinity();
        return r;
    }

    const double log_xmin = std::log(x_min);
    const double sum_log = log_mean * static_cast<double>(n);
    // the "positive" family: mu >= 0, so the fit cannot chase mu -> -inf and
    // impersonate a power law
    auto loglik = [&](double mu, double log_sigma) -> double {
        if (mu < 0.0 || mu > 1e6 || log_sigma < -12.0 || log_sigma > 12.0)
            return -std::numeric_limits<double>::infinity();
        const double sigma = std::exp(log_sigma);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (logs[i] - mu) / sigma;
            ss += d * d;
        }
        // log of the tail mass above x_min
        gsl_sf_result lr;
        const double z = (log_xmin - mu) / (sigma * M_SQRT2);
        if (gsl_sf_log_erfc_e(z, &lr) != GSL_SUCCESS)
            return -std::numeric_limits<double>::infinity();
        const double log_tail = std::log(0.5) + lr.val;
        return -sum_log - static_cast<double>(n) * (log_sigma + 0.5 * std::log(2.0 * M_PI)) -
               0.5 * ss - static_cast<double>(n) * log_tail;
    };

    NelderMead nm{0.2, 0.2};
    const double start_log_sigma = std::clamp(0.5 * std::log(log_var), -11.0, 11.0);
    const auto best = nm.maximize(loglik, std::max(log_mean, 0.01), start_log_sigma);
    if (!std::isfinite(best.value)) fail_data("lognormal fit did not converge");
    r.mu = best.x0;
    r.sigma = std::exp(best.x1);
    r.loglik = best.value;
    r.ks = ks_statistic(tail, [&](double x) { return lognormal_tail_cdf(x, r.mu, r.sigma, x_min); });
    if (n <= 30) r.warning = "small tail sample; parameter variance is high";
    return r;
}

ModelSelection select_best_fit(std::span<const double> samples, double x_min,
                               const std::vector<FitModel>& candidates) {
    if (candidates.empty()) fail_usage("select_best_fit requires at least one candidate model");
    ModelSelection sel;
    for (FitModel m : candidates) {
        switch (m) {
            case FitModel::PowerLaw: sel.fits.push_back(fit_power_law(samples, x_min)); break;
            case FitModel::TruncatedPowerLaw:
                sel.fits.push_back(fit_truncated_power_law(samples, x_min));
                break;
            case FitModel::LognormalPositive:
                sel.fits.push_back(fit_lognormal_positive(samples, x_min));
                break;
        }
    }
    for (std::size_t i = 0; i < sel.fits.size(); ++i)
        for (std::size_t j = i + 1; j < sel.fits.size(); ++j)
            sel.comparisons.push_back(
                {sel.fits[i].model, sel.fits[j].model,
                 (sel.fits[i].loglik - sel.fits[j].loglik) /
                     static_cast<double>(sel.fits[i].n_tail)});
    sel.best = sel.fits[0];
    for (const FitResult& f : sel.fits)
        if (f.loglik > sel.best.loglik) sel.best = f;
    return sel;
}

Histogram log_binned_histogram(std::span<const double> samples, double x_min,
                               double bins_per_decade) {
    if (x_min <= 0.0) fail_data("log-binned histogram requires x_min > 0");
    std::vector<double> tail;
    for (double v : samples)
        if (v >= x_min) tail.push_back(v);
    if (tail.empty()) fail_data("no samples at or above x_min for histogram");
    const double hi = *std::max_element(tail.begin(), tail.end());

    Histogram h;
    if (hi <= x_min) {
        h.edges = {x_min, std::nextafter(x_min * (1.0 + 1e-9), std::numeric_limits<double>::max())};
        h.masses = {1.0};
        return h;
    }
    const double decades = std::log10(hi / x_min);
    const std::size_t bins = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(decades * bins_per_decade)));
    const double step = decades / static_cast<double>(bins);
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = x_min * std::pow(10.0, step * static_cast<double>(i));
    h.edges.back() = std::max(h.edges.back(), hi);  // guard rounding at the top edge
    return histogram_on_edges(tail, h.edges);
}

Histogram histogram_on_edges(std::span<const double> samples, const std::vector<double>& edges) {
    if (edges.size() < 2) fail_data("histogram needs at least one bin");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i] <= edges[i - 1]) fail_data("histogram edges must be strictly increasing");
    Histogram h;
    h.edges = edges;
    h.masses.assign(edges.size() - 1, 0.0);
    std::size_t total = 0;
    for (double v : samples) {
        if (v < edges.front() || v > edges.back()) continue;
        std::size_t bin =
            static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) -
                                     edges.begin());
        bin = bin > 0 ? bin - 1 : 0;
        if (bin >= h.masses.size()) bin = h.masses.size() - 1;  // v == top edge
        h.masses[bin] += 1.0;
        ++total;
    }
    if (total == 0) fail_data("no samples fell inside the histogram edges");
    for (double& m : h.masses) m /= static_cast<double>(total);
    return h;
}

double kl_divergence(const Histogram& p, const Histogram& q) {
    if (p.edges != q.edges) fail_data("KL divergence requires identical histogram edges");
    constexpr double eps = 1e-9;
    const std::size_t n = p.masses.size();
    double psum = 0, qsum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        psum += p.masses[i] + eps;
        qsum += q.masses[i] + eps;
    }
    double kld = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = (p.masses[i] + eps) / psum;
        const double qi = (q.masses[i] + eps) / qsum;
        kld += pi * std::log(pi / qi);
    }
    return kld;
}

}  // namespace chainlens
