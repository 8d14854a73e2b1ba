#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rnf {

using Vector = std::vector<double>;

enum class Activation { identity, relu, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Applies the nonlinearity in place.
void apply_activation(Activation a, std::span<double> v);

// One dense layer: out = act(W * in + b), W stored row-major (out_dim x in_dim).
struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    Activation activation = Activation::identity;

    double weight(std::size_t row, std::size_t col) const { return weights[row * in_dim + col]; }
    double frobenius_norm() const;

    bool operator==(const LayerSpec&) const = default;
};

LayerSpec make_layer(std::size_t in_dim, std::size_t out_dim, std::vector<double> weights,
                     std::vector<double> bias, Activation activation);

// Frozen feed-forward network. Immutable after construction, so it is safe to
// share across threads.
class NetworkSpec {
public:
    // Validates the chain and computes the Lipschitz bound from the weights.
    NetworkSpec(std::size_t input_dim, std::vector<LayerSpec> layers);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t depth() const { return layers_.size(); }
    std::size_t output_dim() const { return layers_.back().out_dim; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
    double lipschitz_bound() const { return lipschitz_bound_; }

    bool operator==(const NetworkSpec&) const = default;

private:
    std::size_t input_dim_;
    std::vector<LayerSpec> layers_;
    double lipschitz_bound_;
};

struct ActivationTrace {
    Vector input;
    std::vector<Vector> layers;  // post-activation h_l(x), l = 1..L

    std::size_t depth() const { return layers.size(); }
    bool operator==(const ActivationTrace&) const = default;
};

// Arithmetic performed by one forward pass, split by number type.
struct OpCount {
    std::uint64_t float_ops = 0;
    std::uint64_t int_ops = 0;

    std::uint64_t total() const { return float_ops + int_ops; }
    OpCount& operator+=(const OpCount& o) {
        float_ops += o.float_ops;
        int_ops += o.int_ops;
        return *this;
    }
};

// Full-precision forward pass recording every layer's post-activation vector.
ActivationTrace forward_full(const NetworkSpec& net, std::span<const double> x, OpCount* ops = nullptr);

// K with ||h_l(x) - h_l(y)||_2 <= K ||x - y||_2 for every layer l: the largest
// running product of per-layer Frobenius norms (every supported activation is 1-Lipschitz).
double lipschitz_upper_bound(const NetworkSpec& net);

// Throws ShapeError / InvalidArgument if x is not a finite vector of the network's input width.
void check_input(const NetworkSpec& net, std::span<const double> x);

} // namespace rnf
