#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rnf/net.hpp"
#include "rnf/quantizer.hpp"
#include "rnf/residual.hpp"

namespace rnf {

enum class CalibrationMethod { quantile, theorem, logistic };

std::string_view to_string(CalibrationMethod m);
CalibrationMethod parse_calibration_method(std::string_view name);

struct LogisticCalibration {
    Vector theta;                 // (intercept, weight per layer)
    double score_threshold = 0.0; // flag when sigma(theta . [1, r]) exceeds this

    bool operator==(const LogisticCalibration&) const = default;
};

struct Provenance {
    std::string model_hash;
    std::uint64_t seed = 0;
    std::string timestamp;

    bool operator==(const Provenance&) const = default;
};

// Frozen detector state produced by the calibration phase.
struct CalibrationSummary {
    CalibrationMethod method = CalibrationMethod::quantile;
    double alpha = 0.05;
    std::size_t n = 0;
    std::optional<double> delta;
    Vector mu_hat;
    Vector sigma_hat;
    Vector thresholds;   // tau_l, one per layer
    double tau_max = 0.0;
    std::optional<LogisticCalibration> logistic;
    Provenance provenance;

    std::size_t depth() const { return thresholds.size(); }
    bool operator==(const CalibrationSummary&) const = default;
};

struct CalibrationOptions {
    CalibrationMethod method = CalibrationMethod::quantile;
    double alpha = 0.05;
    std::optional<double> delta;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t min_calibration_size = 8;

// Nearest-rank quantile: the ceil(p n)-th smallest sample (1-based); p = 0 gives the minimum.
double empirical_quantile(std::span<const double> samples, double p);

// ceil(8 q^2 K^2 log(2/epsilon) / delta^2): calibration size after which the
// mean-plus-half-shift threshold separates clean and shifted residuals.
std::size_t required_sample_size(double q, double lipschitz, double delta, double epsilon);

// Residual profile of every input from one full and one quantized pass each.
std::vector<ResidualProfile> collect_profiles(const QuantizedNetwork& qnet, std::span<const Vector> inputs);

// Threshold selection from clean residual profiles.
//  quantile: tau_l = (1 - alpha/L) quantile of r_l, tau_max = (1 - alpha) quantile of r_max
//  theorem:  tau_l = mu_hat_l + delta/2, tau_max = mean(r_max) + delta/2
//  logistic: quantile thresholds, plus theta fitted on clean (0) vs clean+delta (1)
//            and a score threshold at the (1 - alpha) quantile of clean scores
CalibrationSummary calibrate_profiles(std::span<const ResidualProfile> clean, const CalibrationOptions& options);

// Paired passes over the clean buffer, then calibrate_profiles. Stamps the model hash.
CalibrationSummary calibrate(const QuantizedNetwork& qnet, std::span<const Vector> clean_inputs,
                             const CalibrationOptions& options);

} // namespace rnf
