#include "rnf/net.hpp"

#include <algorithm>
#include <cmath>

#include "rnf/errors.hpp"

namespace rnf {

std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

void apply_activation(Activation a, std::span<double> v) {
    switch (a) {
    case Activation::identity: break;
    case Activation::relu:
        for (auto& x : v) x = x > 0.0 ? x : 0.0;
        break;
    case Activation::tanh:
        for (auto& x : v) x = std::tanh(x);
        break;
    }
}

double LayerSpec::frobenius_norm() const {
    double s = 0.0;
    for (double w : weights) s += w * w;
    return std::sqrt(s);
}

LayerSpec make_layer(std::size_t in_dim, std::size_t out_dim, std::vector<double> weights,
                     std::vector<double> bias, Activation activation) {
    return LayerSpec{in_dim, out_dim, std::move(weights), std::move(bias), activation};
}

namespace {

void validate_layer(const LayerSpec& layer, std::size_t index) {
    const auto where = " (layer " + std::to_string(index) + ")";
    if (layer.out_dim == 0 || layer.in_dim == 0) throw ShapeError("layer dimensions must be positive" + where);
    if (layer.weights.size() != layer.out_dim * layer.in_dim)
        throw ShapeError("weight matrix has " + std::to_string(layer.weights.size()) + " entries, expected " +
                         std::to_string(layer.out_dim * layer.in_dim) + where);
    if (layer.bias.size() != layer.out_dim) throw ShapeError("bias length does not match out_dim" + where);
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite))
        throw InvalidArgument("non-finite parameter" + where);
}

} // namespace

NetworkSpec::NetworkSpec(std::size_t input_dim, std::vector<LayerSpec> layers)
    : input_dim_(input_dim), layers_(std::move(layers)), lipschitz_bound_(0.0) {
    if (input_dim_ == 0) throw ShapeError("input_dim must be positive");
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    std::size_t width = input_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        validate_layer(layers_[i], i);
        if (layers_[i].in_dim != width)
            throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(layers_[i].in_dim) +
                             " inputs but receives " + std::to_string(width));
        width = layers_[i].out_dim;
    }
    lipschitz_bound_ = lipschitz_upper_bound(*this);
}

void check_input(const NetworkSpec& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw ShapeError("input has " + std::to_string(x.size()) + " features, network expects " +
                         std::to_string(net.input_dim()));
    for (double v : x)
        if (!std::isfinite(v)) throw InvalidArgument("non-finite input feature");
}

ActivationTrace forward_full(const NetworkSpec& net, std::span<const double> x, OpCount* ops) {
    check_input(net, x);
    ActivationTrace trace;
    trace.input.assign(x.begin(), x.end());
    trace.layers.reserve(net.depth());
    std::span<const double> in = trace.input;
    OpCount count;
    for (const auto& layer : net.layers()) {
        Vector out(layer.out_dim);
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            const double* w = layer.weights.data() + r * layer.in_dim;
            double acc = 0.0;
            for (std::size_t c = 0; c < layer.in_dim; ++c) acc += w[c] * in[c];
            out[r] = acc + layer.bias[r];
        }
        apply_activation(layer.activation, out);
        count.float_ops += 2 * layer.out_dim * layer.in_dim + layer.out_dim;
        if (layer.activation != Activation::identity) count.float_ops += layer.out_dim;
        trace.layers.push_back(std::move(out));
        in = trace.layers.back();
    }
    if (ops) *ops += count;
    return trace;
}

double lipschitz_upper_bound(const NetworkSpec& net) {
    double running = 1.0;
    double bound = 0.0;
    for (const auto& layer : net.layers()) {
        running *= layer.frobenius_norm();
        bound = std::max(bound, running);
    }
    return bound;
}

} // namespace rnf
