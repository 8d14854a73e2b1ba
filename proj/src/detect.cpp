#include "rnf/detect.hpp"

#include <algorithm>
#include <limits>

#include "rnf/errors.hpp"
#include "rnf/logistic.hpp"
#include "rnf/parallel.hpp"
#include "rnf/serialize.hpp"

namespace rnf {

std::string_view to_string(Rule r) {
    switch (r) {
    case Rule::per_layer: return "per_layer";
    case Rule::max: return "max";
    case Rule::logistic: return "logistic";
    }
    return "max";
}

Rule parse_rule(std::string_view name) {
    if (name == "per_layer" || name == "per-layer") return Rule::per_layer;
    if (name == "max") return Rule::max;
    if (name == "logistic") return Rule::logistic;
    throw InvalidArgument("unknown detection rule '" + std::string(name) + "'");
}

DetectionVerdict judge(const ResidualProfile& profile, const CalibrationSummary& calib, Rule rule) {
    if (profile.depth() != calib.depth())
        throw ShapeError("profile depth " + std::to_string(profile.depth()) + " does not match calibration depth " +
                         std::to_string(calib.depth()));
    DetectionVerdict v;
    v.rule = rule;
    v.profile = profile;
    const auto& r = profile.per_layer;
    switch (rule) {
    case Rule::per_layer: {
        double ratio = 0.0;
        for (std::size_t l = 0; l < r.size(); ++l) {
            const double tau = calib.thresholds[l];
            if (r[l] > tau) v.exceeded_layers.push_back({l, r[l], tau});
            ratio = std::max(ratio, r[l] / std::max(tau, std::numeric_limits<double>::min()));
        }
        v.flagged = !v.exceeded_layers.empty();
        v.statistic = ratio;
        break;
    }
    case Rule::max:
        for (std::size_t l = 0; l < r.size(); ++l)
            if (r[l] > calib.tau_max) v.exceeded_layers.push_back({l, r[l], calib.tau_max});
        v.flagged = profile.r_max > calib.tau_max;
        v.statistic = profile.r_max;
        break;
    case Rule::logistic: {
        if (!calib.logistic) throw InvalidArgument("logistic rule needs a calibration with fitted weights");
        const double s = logistic_score(calib.logistic->theta, r);
        for (std::size_t l = 0; l < r.size(); ++l)
            if (r[l] > calib.thresholds[l]) v.exceeded_layers.push_back({l, r[l], calib.thresholds[l]});
        v.score = s;
        v.statistic = s;
        v.flagged = s > calib.logistic->score_threshold;
        break;
    }
    }
    return v;
}

Detector::Detector(QuantizedNetwork qnet, CalibrationSummary calib) : qnet_(std::move(qnet)), calib_(std::move(calib)) {
    const auto expected = model_hash(qnet_);
    if (calib_.provenance.model_hash != expected)
        throw ModelMismatch("calibration was produced for model " + calib_.provenance.model_hash +
                            ", but the loaded model hashes to " + expected);
    if (calib_.depth() != qnet_.network().depth())
        throw ModelMismatch("calibration depth does not match the network");
}

ResidualProfile Detector::profile(std::span<const double> x) const {
    const auto full = forward_full(qnet_.network(), x);
    ++full_passes_;
    const auto quant = qnet_.forward(x);
    ++quant_passes_;
    return residual_profile(full, quant);
}

DetectionVerdict Detector::detect(std::span<const double> x, Rule rule) const {
    if (rule == Rule::logistic && !calib_.logistic)
        throw InvalidArgument("logistic rule needs a calibration with fitted weights");
    return judge(profile(x), calib_, rule);
}

std::vector<DetectionVerdict> Detector::detect_batch(std::span<const Vector> xs, Rule rule) const {
    std::vector<DetectionVerdict> out(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) { out[i] = detect(xs[i], rule); });
    return out;
}

DetectionVerdict detect(std::span<const double> x, const NetworkSpec& net, const QuantConfig& qcfg,
                        const CalibrationSummary& calib, Rule rule) {
    return Detector(QuantizedNetwork(net, qcfg), calib).detect(x, rule);
}

std::vector<DetectionVerdict> detect_batch(std::span<const Vector> xs, const NetworkSpec& net,
                                           const QuantConfig& qcfg, const CalibrationSummary& calib, Rule rule) {
    return Detector(QuantizedNetwork(net, qcfg), calib).detect_batch(xs, rule);
}

} // namespace rnf
