#include "rnf/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rnf/errors.hpp"
#include "rnf/log.hpp"
#include "rnf/logistic.hpp"
#include "rnf/parallel.hpp"
#include "rnf/serialize.hpp"

namespace rnf {

std::string_view to_string(CalibrationMethod m) {
    switch (m) {
    case CalibrationMethod::quantile: return "quantile";
    case CalibrationMethod::theorem: return "theorem";
    case CalibrationMethod::logistic: return "logistic";
    }
    return "quantile";
}

CalibrationMethod parse_calibration_method(std::string_view name) {
    if (name == "quantile") return CalibrationMethod::quantile;
    if (name == "theorem") return CalibrationMethod::theorem;
    if (name == "logistic") return CalibrationMethod::logistic;
    throw InvalidArgument("unknown calibration method '" + std::string(name) + "'");
}

double empirical_quantile(std::span<const double> samples, double p) {
    if (samples.empty()) throw InvalidArgument("empirical_quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
    std::vector<double> sorted(samples.begin(), samples.end());
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
    return sorted[rank - 1];
}

std::size_t required_sample_size(double q, double lipschitz, double delta, double epsilon) {
    if (!(q > 0.0) || !(lipschitz > 0.0) || !(delta > 0.0) || !(epsilon > 0.0))
        throw InvalidArgument("required_sample_size arguments must be positive");
    if (!(epsilon < 1.0)) throw InvalidArgument("epsilon must be below 1");
    const double n = 8.0 * q * q * lipschitz * lipschitz * std::log(2.0 / epsilon) / (delta * delta);
    return static_cast<std::size_t>(std::ceil(n));
}

std::vector<ResidualProfile> collect_profiles(const QuantizedNetwork& qnet, std::span<const Vector> inputs) {
    std::vector<ResidualProfile> profiles(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) {
        profiles[i] = residual_profile(forward_full(qnet.network(), inputs[i]), qnet.forward(inputs[i]));
    });
    return profiles;
}

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double stddev_of(std::span<const double> v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

bool all_identical(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double epsilon_above(double v) { return v + std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v)); }

// Quantile threshold; a zero-spread sample gets an epsilon guard so the calibration values themselves pass.
double guarded_quantile(std::span<const double> samples, double p, const std::string& what) {
    if (all_identical(samples)) {
        warn("clean " + what + " values are all identical; threshold set just above them");
        return epsilon_above(samples.front());
    }
    return empirical_quantile(samples, p);
}

} // namespace

CalibrationSummary calibrate_profiles(std::span<const ResidualProfile> clean, const CalibrationOptions& options) {
    if (clean.size() < min_calibration_size)
        throw InvalidArgument("calibration needs at least " + std::to_string(min_calibration_size) +
                              " clean inputs, got " + std::to_string(clean.size()));
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    const bool needs_delta = options.method != CalibrationMethod::quantile;
    if (needs_delta && !(options.delta && *options.delta > 0.0 && std::isfinite(*options.delta)))
        throw InvalidArgument(std::string("method '") + std::string(to_string(options.method)) +
                              "' requires a positive delta");

    const std::size_t depth = clean.front().depth();
    for (const auto& p : clean)
        if (p.depth() != depth) throw ShapeError("calibration profiles have inconsistent depth");

    CalibrationSummary s;
    s.method = options.method;
    s.alpha = options.alpha;
    s.n = clean.size();
    s.delta = options.delta;
    s.provenance.seed = options.seed;
    s.mu_hat.resize(depth);
    s.sigma_hat.resize(depth);
    s.thresholds.resize(depth);

    std::vector<double> column(clean.size());
    for (std::size_t l = 0; l < depth; ++l) {
        for (std::size_t i = 0; i < clean.size(); ++i) column[i] = clean[i].per_layer[l];
        s.mu_hat[l] = mean_of(column);
        s.sigma_hat[l] = stddev_of(column, s.mu_hat[l]);
        if (options.method == CalibrationMethod::theorem) {
            s.thresholds[l] = s.mu_hat[l] + *options.delta / 2.0;
        } else {
            const double per_layer_alpha = options.alpha / static_cast<double>(depth);
            s.thresholds[l] = guarded_quantile(column, 1.0 - per_layer_alpha, "layer " + std::to_string(l) + " residual");
        }
    }

    std::vector<double> maxima(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) maxima[i] = clean[i].r_max;
    if (options.method == CalibrationMethod::theorem)
        s.tau_max = mean_of(maxima) + *options.delta / 2.0;
    else
        s.tau_max = guarded_quantile(maxima, 1.0 - options.alpha, "r_max");

    if (options.method == CalibrationMethod::logistic) {
        std::vector<Vector> features;
        std::vector<int> labels;
        features.reserve(2 * clean.size());
        for (const auto& p : clean) {
            features.push_back(p.per_layer);
            labels.push_back(0);
        }
        for (const auto& p : clean) {
            Vector shifted = p.per_layer;
            for (auto& r : shifted) r += *options.delta;
            features.push_back(std::move(shifted));
            labels.push_back(1);
        }
        LogisticCalibration lc;
        lc.theta = fit_logistic(features, labels);
        std::vector<double> scores(clean.size());
        for (std::size_t i = 0; i < clean.size(); ++i) scores[i] = logistic_score(lc.theta, clean[i].per_layer);
        lc.score_threshold = guarded_quantile(scores, 1.0 - options.alpha, "logistic score");
        s.logistic = std::move(lc);
    }
    return s;
}

CalibrationSummary calibrate(const QuantizedNetwork& qnet, std::span<const Vector> clean_inputs,
                             const CalibrationOptions& options) {
    if (clean_inputs.size() < min_calibration_size)
        throw InvalidArgument("calibration needs at least " + std::to_string(min_calibration_size) +
                              " clean inputs, got " + std::to_string(clean_inputs.size()));
    const auto profiles = collect_profiles(qnet, clean_inputs);
    auto summary = calibrate_profiles(profiles, options);
    summary.provenance.model_hash = model_hash(qnet);
    return summary;
}

} // namespace rnf
