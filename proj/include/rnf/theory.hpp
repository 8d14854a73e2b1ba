#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rnf/net.hpp"

namespace rnf {

// One bound-versus-simulation comparison. Simulations use the independent
// uniform rounding-error model: each coordinate error ~ Unif[-q, q].
struct BoundCheckReport {
    std::string check;
    // grid point (unused fields stay 0)
    std::size_t d = 0;
    double q = 0.0;
    double lipschitz = 0.0;
    double tau = 0.0;
    double delta = 0.0;
    double epsilon = 0.0;
    std::size_t layers = 0;

    double empirical = 0.0;
    double bound = 0.0;
    std::size_t trials = 0;
    double margin = 0.0;
    bool pass = false;
    std::vector<std::pair<std::string, double>> extras;

    double extra(const std::string& key) const;
};

inline constexpr std::size_t min_theory_trials = 1000;

// 3 sqrt(p (1 - p) / trials) with p clamped to [0, 1], floored at 1/trials.
double binomial_margin(double p, std::size_t trials);

// Draws `trials` residuals r = (1/d) sum_i |eps_i|, eps_i ~ Unif[-q, q]. Deterministic in
// (seed, stream) and independent of the thread count.
std::vector<double> simulate_residuals(std::size_t d, double q, std::size_t trials, std::uint64_t seed,
                                       std::uint64_t stream);

// Mean residual vs q/2. Passes when |mean - q/2| <= rel_tol * q/2.
BoundCheckReport check_mean_identity(double q, std::size_t d, std::size_t trials, std::uint64_t seed,
                                     double rel_tol = 0.01);

// P(|r - q/2| > tau) vs 2 exp(-d tau^2 / (2 q^2 K^2)) for every tau in the grid.
std::vector<BoundCheckReport> check_subgaussian_tail(std::size_t d, double q, double lipschitz,
                                                     std::span<const double> tau_grid, std::size_t trials,
                                                     std::uint64_t seed);

double subgaussian_tail_bound(std::size_t d, double q, double lipschitz, double tau);

struct DetectionGuaranteeOptions {
    std::size_t width = 4;                  // d: coordinates averaged per residual
    std::size_t calibration_size = 0;       // 0 = required_sample_size(q, K, delta, epsilon)
    std::size_t test_draws = 200;           // clean and shifted draws per trial
};

// Per trial: calibrate mu_hat on n clean residuals, threshold tau = mu_hat + delta/2,
// measure FPR on fresh clean residuals and FNR on residuals shifted by delta.
// Passes when pooled FPR and FNR are both <= epsilon + margin.
BoundCheckReport check_detection_guarantee(double q, double lipschitz, double delta, double epsilon,
                                           std::size_t trials, std::uint64_t seed,
                                           const DetectionGuaranteeOptions& options = {});

// L independent layer residuals, single threshold at the clean (1 - alpha)
// quantile of r_max (no per-layer correction), FPR on fresh draws vs alpha.
// Also fits the largest C with P(r_max - q/2 > tau) <= exp(-C tau^2 / q^2)
// over a tau grid and reports it as extra "C_fit".
BoundCheckReport check_max_tail(std::size_t layers, std::size_t d, double q, std::size_t trials, std::uint64_t seed,
                                double alpha = 0.05);

struct TheoryGrid {
    std::vector<double> mean_q{0.05, 0.1, 0.2};
    std::size_t mean_d = 1000;
    std::size_t mean_trials = 10000;

    std::vector<std::size_t> tail_d{100, 1000, 10000};
    std::vector<double> tail_tau{0.005, 0.01, 0.02, 0.05};
    double tail_q = 0.1;
    double tail_lipschitz = 1.0;
    std::size_t tail_trials = 100000;

    double det_q = 0.1;
    double det_lipschitz = 1.0;
    double det_delta = 0.05;
    double det_epsilon = 0.05;
    std::size_t det_trials = 1000;

    std::size_t max_layers = 8;
    std::size_t max_d = 100;
    double max_q = 0.1;
    std::size_t max_trials = 10000;

    std::vector<std::string> checks{"mean", "tail", "detection", "max"};
};

// Runs the selected checks; throws InvalidArgument if any trial count is below min_theory_trials.
std::vector<BoundCheckReport> run_theory_grid(const TheoryGrid& grid, std::uint64_t seed);

std::string bound_reports_csv(std::span<const BoundCheckReport> reports);

} // namespace rnf
