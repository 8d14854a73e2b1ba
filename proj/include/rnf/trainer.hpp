#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rnf/net.hpp"
#include "rnf/scenarios.hpp"

namespace rnf {

// Mini-batch gradient descent on softmax cross-entropy for a relu MLP.
// Documented ranges: 1-4 hidden layers of width 1-4096, 1-10000 epochs,
// batch size >= 1, learning rate in (0, 10], clip norm > 0.
struct TrainHyper {
    std::vector<std::size_t> hidden{64, 64};
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double clip_norm = 5.0;  // global gradient-norm clip per step

    void validate() const;
    bool operator==(const TrainHyper&) const = default;
};

// Returns the frozen network: relu hidden layers, identity logit layer.
NetworkSpec train_tiny_mlp(const LabeledDataset& ds, const TrainHyper& hyper, std::uint64_t seed);

int predict_class(const NetworkSpec& net, std::span<const double> x);

// Fraction of rows whose argmax logit equals the label.
double classification_accuracy(const NetworkSpec& net, const LabeledDataset& ds);

} // namespace rnf
