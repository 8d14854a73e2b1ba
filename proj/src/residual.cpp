#include "rnf/residual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnf/errors.hpp"

namespace rnf {

ResidualProfile make_profile(Vector per_layer) {
    if (per_layer.empty()) throw ShapeError("residual profile needs at least one layer");
    for (double r : per_layer)
        if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidArgument("residuals must be finite and nonnegative");
    ResidualProfile p;
    p.r_sum = std::accumulate(per_layer.begin(), per_layer.end(), 0.0);
    p.r_mean = p.r_sum / static_cast<double>(per_layer.size());
    p.r_max = *std::max_element(per_layer.begin(), per_layer.end());
    p.per_layer = std::move(per_layer);
    return p;
}

ResidualProfile residual_profile(const ActivationTrace& full, const ActivationTrace& quant) {
    if (full.depth() != quant.depth())
        throw ShapeError("traces have different depths (" + std::to_string(full.depth()) + " vs " +
                         std::to_string(quant.depth()) + ")");
    Vector per_layer(full.depth());
    for (std::size_t l = 0; l < full.depth(); ++l) {
        const auto& h = full.layers[l];
        const auto& hq = quant.layers[l];
        if (h.size() != hq.size() || h.empty())
            throw ShapeError("layer " + std::to_string(l) + " widths differ between traces");
        double s = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) s += std::abs(h[i] - hq[i]);
        per_layer[l] = s / static_cast<double>(h.size());
    }
    return make_profile(std::move(per_layer));
}

std::string_view to_string(Aggregate a) {
    switch (a) {
    case Aggregate::max: return "max";
    case Aggregate::mean: return "mean";
    case Aggregate::sum: return "sum";
    }
    return "max";
}

Aggregate parse_aggregate(std::string_view name) {
    if (name == "max") return Aggregate::max;
    if (name == "mean") return Aggregate::mean;
    if (name == "sum") return Aggregate::sum;
    throw InvalidArgument("unknown aggregate '" + std::string(name) + "'");
}

double aggregate(const ResidualProfile& profile, Aggregate mode) {
    switch (mode) {
    case Aggregate::max: return profile.r_max;
    case Aggregate::mean: return profile.r_mean;
    case Aggregate::sum: return profile.r_sum;
    }
    return profile.r_max;
}

} // namespace rnf
