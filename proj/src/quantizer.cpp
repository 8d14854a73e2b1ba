#include "rnf/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rnf/calibrate.hpp"
#include "rnf/errors.hpp"
#include "rnf/log.hpp"

namespace rnf {

int Grid::index_of(double v) const {
    if (!std::isfinite(v)) throw InvalidArgument("cannot quantize a non-finite value");
    // nearbyint honours the default round-to-nearest-even mode.
    const double k = std::nearbyint(v / step());
    return static_cast<int>(std::clamp(k, static_cast<double>(k_min()), static_cast<double>(k_max())));
}

void validate_bits(int bits) {
    if (bits != 3 && bits != 4) throw InvalidArgument("bits must be 3 or 4, got " + std::to_string(bits));
}

QuantConfig make_quant_config(std::span<const double> half_steps, int bits, bool quantize_weights) {
    validate_bits(bits);
    QuantConfig cfg;
    cfg.bits = bits;
    cfg.quantize_weights = quantize_weights;
    for (double q : half_steps) {
        if (!(q > 0.0) || !std::isfinite(q)) throw InvalidArgument("half-step must be positive and finite");
        const Grid g{q, bits};
        cfg.layers.push_back({q, g.clamp_lo(), g.clamp_hi()});
    }
    return cfg;
}

void validate_quant_config(const QuantConfig& cfg, std::size_t depth) {
    validate_bits(cfg.bits);
    if (cfg.layers.size() != depth)
        throw ShapeError("quantization config covers " + std::to_string(cfg.layers.size()) + " layers, network has " +
                         std::to_string(depth));
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& lq = cfg.layers[l];
        if (!(lq.half_step > 0.0) || !std::isfinite(lq.half_step))
            throw InvalidArgument("layer " + std::to_string(l) + ": half-step must be positive");
        const Grid g = cfg.grid(l);
        if (!(lq.clamp_lo < 0.0 && 0.0 < lq.clamp_hi) || lq.clamp_lo != g.clamp_lo() || lq.clamp_hi != g.clamp_hi())
            throw InvalidArgument("layer " + std::to_string(l) + ": clamp range is not the grid's end levels");
    }
}

QuantConfig calibrate_scales(const NetworkSpec& net, std::span<const Vector> clean_inputs, int bits) {
    validate_bits(bits);
    if (clean_inputs.empty()) throw InvalidArgument("calibrate_scales needs at least one clean input");
    std::vector<Vector> magnitudes(net.depth());
    for (const auto& x : clean_inputs) {
        const auto trace = forward_full(net, x);
        for (std::size_t l = 0; l < net.depth(); ++l)
            for (double h : trace.layers[l]) magnitudes[l].push_back(std::abs(h));
    }
    const int k_max = (1 << (bits - 1)) - 1;
    Vector half_steps(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const double p999 = empirical_quantile(magnitudes[l], 0.999);
        if (p999 > 0.0) {
            half_steps[l] = p999 / (2.0 * k_max);
        } else {
            warn("layer " + std::to_string(l) + " has all-zero calibration activations; using an epsilon half-step");
            half_steps[l] = std::numeric_limits<double>::epsilon();
        }
    }
    return make_quant_config(half_steps, bits);
}

Vector quantize_vector(std::span<const double> v, double half_step, int bits) {
    validate_bits(bits);
    if (!(half_step > 0.0)) throw InvalidArgument("half-step must be positive");
    const Grid g{half_step, bits};
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = g.level(g.index_of(v[i]));
    return out;
}

QuantizedVector quantize_indices(std::span<const double> v, const Grid& grid) {
    QuantizedVector out;
    out.half_step = grid.half_step;
    out.index.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.index[i] = static_cast<std::int8_t>(grid.index_of(v[i]));
    return out;
}

Vector QuantizedVector::dequantize() const {
    Vector out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) out[i] = 2.0 * half_step * index[i];
    return out;
}

QuantizedNetwork::QuantizedNetwork(const NetworkSpec& net, QuantConfig cfg) : net_(net), cfg_(std::move(cfg)) {
    validate_quant_config(cfg_, net_.depth());
    const int k_max = (1 << (cfg_.bits - 1)) - 1;
    layers_.resize(net_.depth());
    for (std::size_t l = 0; l < net_.depth(); ++l) {
        const auto& spec = net_.layer(l);
        auto& layer = layers_[l];
        if (!cfg_.quantize_weights) {
            layer.dequantized = spec.weights;
            continue;
        }
        double max_abs = 0.0;
        for (double w : spec.weights) max_abs = std::max(max_abs, std::abs(w));
        layer.weight_half_step = max_abs > 0.0 ? max_abs / (2.0 * k_max) : 1.0;
        auto q = quantize_indices(spec.weights, Grid{layer.weight_half_step, cfg_.bits});
        layer.dequantized = q.dequantize();
        layer.weight_index = std::move(q.index);
    }
}

double QuantizedNetwork::weight(std::size_t layer, std::size_t row, std::size_t col) const {
    return layers_.at(layer).dequantized.at(row * net_.layer(layer).in_dim + col);
}

ActivationTrace QuantizedNetwork::forward(std::span<const double> x, OpCount* ops) const {
    check_input(net_, x);
    ActivationTrace trace;
    trace.input.assign(x.begin(), x.end());
    trace.layers.reserve(net_.depth());
    OpCount count;
    QuantizedVector prev;  // quantized output of the previous layer
    for (std::size_t l = 0; l < net_.depth(); ++l) {
        const auto& spec = net_.layer(l);
        const auto& qlayer = layers_[l];
        const std::size_t in = spec.in_dim;
        Vector pre(spec.out_dim);
        if (l > 0 && cfg_.quantize_weights) {
            // int8 x int8 -> int32 dot products, one float rescale per output.
            const double scale = (2.0 * qlayer.weight_half_step) * (2.0 * prev.half_step);
            for (std::size_t r = 0; r < spec.out_dim; ++r) {
                const std::int8_t* w = qlayer.weight_index.data() + r * in;
                std::int32_t acc = 0;
                for (std::size_t c = 0; c < in; ++c) acc += static_cast<std::int32_t>(w[c]) * prev.index[c];
                pre[r] = acc * scale + spec.bias[r];
            }
            count.int_ops += 2 * spec.out_dim * in;
            count.float_ops += 1 + 2 * spec.out_dim;
        } else {
            // First layer sees the real-valued input; activations-only mode keeps float weights.
            const Vector activations = l == 0 ? trace.input : prev.dequantize();
            for (std::size_t r = 0; r < spec.out_dim; ++r) {
                const double* w = qlayer.dequantized.data() + r * in;
                double acc = 0.0;
                for (std::size_t c = 0; c < in; ++c) acc += w[c] * activations[c];
                pre[r] = acc + spec.bias[r];
            }
            count.float_ops += 2 * spec.out_dim * in + spec.out_dim;
        }
        apply_activation(spec.activation, pre);
        if (spec.activation != Activation::identity) count.float_ops += spec.out_dim;
        prev = quantize_indices(pre, cfg_.grid(l));
        count.float_ops += spec.out_dim;  // one scale multiply per coordinate; rounding and clamping are integer work
        count.int_ops += 2 * spec.out_dim;
        trace.layers.push_back(prev.dequantize());
    }
    if (ops) *ops += count;
    return trace;
}

ActivationTrace forward_quantized(const NetworkSpec& net, const QuantConfig& cfg, std::span<const double> x) {
    return QuantizedNetwork(net, cfg).forward(x);
}

} // namespace rnf
