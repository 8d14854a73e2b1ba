#pragma once

#include <string_view>

#include "rnf/net.hpp"

namespace rnf {

// Per-layer quantization residuals r_l = (1/d_l) sum_i |h_li - hq_li| with
// their aggregates precomputed.
struct ResidualProfile {
    Vector per_layer;
    double r_max = 0.0;
    double r_mean = 0.0;
    double r_sum = 0.0;

    std::size_t depth() const { return per_layer.size(); }
    bool operator==(const ResidualProfile&) const = default;
};

// Fills the aggregates from per-layer values (all must be finite and >= 0).
ResidualProfile make_profile(Vector per_layer);

ResidualProfile residual_profile(const ActivationTrace& full, const ActivationTrace& quant);

enum class Aggregate { max, mean, sum };

std::string_view to_string(Aggregate a);
Aggregate parse_aggregate(std::string_view name);

double aggregate(const ResidualProfile& profile, Aggregate mode);

} // namespace rnf
