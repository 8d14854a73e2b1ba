#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rnf/calibrate.hpp"
#include "rnf/quantizer.hpp"
#include "rnf/residual.hpp"

namespace rnf {

enum class Rule { per_layer, max, logistic };

std::string_view to_string(Rule r);
Rule parse_rule(std::string_view name);

struct LayerExceedance {
    std::size_t layer = 0;
    double residual = 0.0;
    double threshold = 0.0;

    bool operator==(const LayerExceedance&) const = default;
};

struct DetectionVerdict {
    bool flagged = false;
    std::vector<LayerExceedance> exceeded_layers;
    Rule rule = Rule::max;
    std::optional<double> score;  // logistic probability, logistic rule only
    // Ranking statistic of the rule (larger = more anomalous): r_max for max,
    // max_l r_l / tau_l for per_layer, the logistic score for logistic.
    double statistic = 0.0;
    ResidualProfile profile;

    bool operator==(const DetectionVerdict&) const = default;
};

// Applies a calibrated rule to a residual profile. No forward passes.
DetectionVerdict judge(const ResidualProfile& profile, const CalibrationSummary& calib, Rule rule);

// Inference phase: one full-precision pass plus exactly one quantized pass per
// input. Read-only after construction; concurrent callers are fine.
class Detector {
public:
    // Throws ModelMismatch if calib was produced for a different quantized model.
    Detector(QuantizedNetwork qnet, CalibrationSummary calib);

    const QuantizedNetwork& quantized_network() const { return qnet_; }
    const CalibrationSummary& calibration() const { return calib_; }

    ResidualProfile profile(std::span<const double> x) const;
    DetectionVerdict detect(std::span<const double> x, Rule rule) const;
    std::vector<DetectionVerdict> detect_batch(std::span<const Vector> xs, Rule rule) const;

    struct PassCounts {
        std::uint64_t full = 0;
        std::uint64_t quantized = 0;
    };
    PassCounts pass_counts() const { return {full_passes_.load(), quant_passes_.load()}; }

private:
    QuantizedNetwork qnet_;
    CalibrationSummary calib_;
    mutable std::atomic<std::uint64_t> full_passes_{0};
    mutable std::atomic<std::uint64_t> quant_passes_{0};
};

DetectionVerdict detect(std::span<const double> x, const NetworkSpec& net, const QuantConfig& qcfg,
                        const CalibrationSummary& calib, Rule rule);

std::vector<DetectionVerdict> detect_batch(std::span<const Vector> xs, const NetworkSpec& net,
                                           const QuantConfig& qcfg, const CalibrationSummary& calib, Rule rule);

} // namespace rnf
