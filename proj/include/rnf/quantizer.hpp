#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rnf/net.hpp"

namespace rnf {

// Uniform symmetric grid with spacing 2q. Grid indices k run over
// [-2^(bits-1), 2^(bits-1) - 1]; the dequantized level is 2 q k.
struct Grid {
    double half_step;  // q
    int bits;

    int k_min() const { return -(1 << (bits - 1)); }
    int k_max() const { return (1 << (bits - 1)) - 1; }
    double step() const { return 2.0 * half_step; }
    double clamp_lo() const { return step() * k_min(); }
    double clamp_hi() const { return step() * k_max(); }

    // Nearest grid index, ties to even, saturated to [k_min, k_max].
    int index_of(double v) const;
    double level(int k) const { return step() * k; }
};

struct LayerQuant {
    double half_step = 0.0;
    double clamp_lo = 0.0;
    double clamp_hi = 0.0;

    bool operator==(const LayerQuant&) const = default;
};

struct QuantConfig {
    int bits = 4;
    std::vector<LayerQuant> layers;  // activation grid per layer
    bool quantize_weights = true;    // false = activations-only ablation

    Grid grid(std::size_t layer) const { return Grid{layers.at(layer).half_step, bits}; }
    bool operator==(const QuantConfig&) const = default;
};

void validate_bits(int bits);

// Builds a config whose layer l uses half-step q[l]; clamp bounds are derived from the grid.
QuantConfig make_quant_config(std::span<const double> half_steps, int bits, bool quantize_weights = true);

// Throws unless bits is supported, every q is positive and the clamps lie on the grid.
void validate_quant_config(const QuantConfig& cfg, std::size_t depth);

// Picks q_l = p999_l / (2 (2^(bits-1) - 1)) where p999_l is the 99.9th
// percentile (nearest rank) of |h_l| over all coordinates of all inputs.
QuantConfig calibrate_scales(const NetworkSpec& net, std::span<const Vector> clean_inputs, int bits = 4);

// Snaps each coordinate to the nearest level of the grid (ties to even), saturating at the clamps.
Vector quantize_vector(std::span<const double> v, double half_step, int bits = 4);

// Grid indices plus their shared scale; the integer form the quantized kernel consumes.
struct QuantizedVector {
    std::vector<std::int8_t> index;
    double half_step = 0.0;

    Vector dequantize() const;
};

QuantizedVector quantize_indices(std::span<const double> v, const Grid& grid);

// Network with weights quantized once (per-layer max-abs scale) and the
// activation grid of a QuantConfig. forward() quantizes every layer's output
// after its nonlinearity; layers fed by quantized activations accumulate in int32.
class QuantizedNetwork {
public:
    QuantizedNetwork(const NetworkSpec& net, QuantConfig cfg);

    const NetworkSpec& network() const { return net_; }
    const QuantConfig& config() const { return cfg_; }
    // Dequantized weight of layer l (equals the float weight in activations-only mode).
    double weight(std::size_t layer, std::size_t row, std::size_t col) const;
    double weight_half_step(std::size_t layer) const { return layers_.at(layer).weight_half_step; }

    ActivationTrace forward(std::span<const double> x, OpCount* ops = nullptr) const;

private:
    struct Layer {
        std::vector<std::int8_t> weight_index;
        double weight_half_step = 1.0;
        std::vector<double> dequantized;
    };
    NetworkSpec net_;
    QuantConfig cfg_;
    std::vector<Layer> layers_;
};

ActivationTrace forward_quantized(const NetworkSpec& net, const QuantConfig& cfg, std::span<const double> x);

} // namespace rnf
