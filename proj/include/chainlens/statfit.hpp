#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chainlens/common.hpp"

namespace chainlens {

enum class FitModel : std::uint8_t { PowerLaw, TruncatedPowerLaw, LognormalPositive };
const char* fit_model_name(FitModel m);

struct FitResult {
    FitModel model;
    double alpha = 0;   // power-law exponent
    double lambda = 0;  // truncation rate; cutoff scale is 1/lambda
    double mu = 0, sigma = 0;
    double x_min = 0;
    double ks = 0;
    double loglik = 0;
    std::size_t n_tail = 0;
    bool degenerate = false;
    std::string warning;
};

// Continuous tail MLE: alpha = 1 + n / sum(ln(x/x_min)). x_min < 0 requests
// an automatic scan (KS-minimizing over a candidate grid).
FitResult fit_power_law(std::span<const double> samples, double x_min);
inline constexpr double kAutoXmin = -1.0;

// Density proportional to x^-alpha * exp(-lambda x) on [x_min, inf);
// deterministic Nelder-Mead seeded from the pure power-law fit.
FitResult fit_truncated_power_law(std::span<const double> samples, double x_min);

// Log-normal left-truncated at x_min, fitted by numerical MLE so the
// underlying (mu, sigma) are recovered rather than the truncated moments.
FitResult fit_lognormal_positive(std::span<const double> samples, double x_min);

struct FitComparison {
    FitModel a, b;
    double normalized_llr;  // (loglik_a - loglik_b) / n_tail
};

struct ModelSelection {
    FitResult best;
    std::vector<FitResult> fits;
    std::vector<FitComparison> comparisons;
};

ModelSelection select_best_fit(std::span<const double> samples, double x_min,
                               const std::vector<FitModel>& candidates);

struct Histogram {
    std::vector<double> edges;   // strictly increasing, size = bins + 1
    std::vector<double> masses;  // sums to 1 within 1e-9
};

// Log-spaced bins, 25 per decade of span; samples below x_min are dropped.
Histogram log_binned_histogram(std::span<const double> samples, double x_min,
                               double bins_per_decade = 25.0);
Histogram histogram_on_edges(std::span<const double> samples,
                             const std::vector<double>& edges);

// sum p ln(p/q) after additive smoothing (1e-9) and renormalization of both
// mass vectors. Requires identical edges.
double kl_divergence(const Histogram& p, const Histogram& q);

// Model CDFs on the tail [x_min, inf); exposed for the KS checks.
double power_law_cdf(double x, double alpha, double x_min);
double truncated_power_law_cdf(double x, double alpha, double lambda, double x_min);
double lognormal_tail_cdf(double x, double mu, double sigma, double x_min);

// Upper incomplete gamma wrapper (any real a, x > 0).
double upper_incomplete_gamma(double a, double x);

}  // namespace chainlens
