#include "rnf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "rnf/errors.hpp"
#include "rnf/random.hpp"

namespace rnf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainHyper::validate() const {
    if (hidden.empty() || hidden.size() > 4) throw InvalidArgument("hidden: expected 1-4 hidden layers");
    for (auto w : hidden)
        if (w < 1 || w > 4096) throw InvalidArgument("hidden: widths must lie in [1, 4096]");
    if (epochs < 1 || epochs > 10000) throw InvalidArgument("epochs must lie in [1, 10000]");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (!(learning_rate > 0.0 && learning_rate <= 10.0)) throw InvalidArgument("learning_rate must lie in (0, 10]");
    if (!(clip_norm > 0.0)) throw InvalidArgument("clip_norm must be positive");
}

namespace {

constexpr std::uint64_t init_stream = 11;
constexpr std::uint64_t shuffle_stream = 12;

struct Dense {
    MatrixXd w;
    VectorXd b;
};

} // namespace

NetworkSpec train_tiny_mlp(const LabeledDataset& ds, const TrainHyper& hyper, std::uint64_t seed) {
    hyper.validate();
    ds.validate();
    if (ds.size() == 0) throw InvalidArgument("cannot train on an empty dataset");
    const int max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    if (*std::min_element(ds.labels.begin(), ds.labels.end()) < 0) throw InvalidArgument("labels must be >= 0");
    const auto classes = static_cast<Eigen::Index>(std::max(2, max_label + 1));
    const auto dim = static_cast<Eigen::Index>(ds.dim());
    for (const auto& row : ds.features)
        for (double v : row)
            if (!std::isfinite(v)) throw InvalidArgument("non-finite training feature");

    std::vector<Eigen::Index> widths{dim};
    for (auto h : hyper.hidden) widths.push_back(static_cast<Eigen::Index>(h));
    widths.push_back(classes);
    const std::size_t depth = widths.size() - 1;

    // He-normal init for relu layers, 1/fan_in for the logit layer.
    auto rng = make_rng(seed, init_stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Dense> layers(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const double gain = l + 1 < depth ? 2.0 : 1.0;
        const double sd = std::sqrt(gain / static_cast<double>(widths[l]));
        layers[l].w.resize(widths[l + 1], widths[l]);
        for (Eigen::Index c = 0; c < widths[l]; ++c)
            for (Eigen::Index r = 0; r < widths[l + 1]; ++r) layers[l].w(r, c) = sd * normal(rng);
        layers[l].b = VectorXd::Zero(widths[l + 1]);
    }

    const std::size_t n = ds.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_rng(seed, shuffle_stream);

    std::vector<MatrixXd> acts(depth + 1);
    std::vector<Dense> grads(depth);
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += hyper.batch_size) {
            const auto bsz = static_cast<Eigen::Index>(std::min(hyper.batch_size, n - start));
            acts[0].resize(dim, bsz);
            for (Eigen::Index j = 0; j < bsz; ++j) {
                const auto& row = ds.features[order[start + static_cast<std::size_t>(j)]];
                for (Eigen::Index i = 0; i < dim; ++i) acts[0](i, j) = row[static_cast<std::size_t>(i)];
            }
            for (std::size_t l = 0; l < depth; ++l) {
                acts[l + 1] = (layers[l].w * acts[l]).colwise() + layers[l].b;
                if (l + 1 < depth) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
            }

            // Softmax cross-entropy; delta = (softmax - onehot) / batch.
            MatrixXd delta = acts[depth];
            for (Eigen::Index j = 0; j < bsz; ++j) {
                auto col = delta.col(j);
                const double m = col.maxCoeff();
                col = (col.array() - m).exp().matrix();
                const double z = col.sum();
                const int y = ds.labels[order[start + static_cast<std::size_t>(j)]];
                epoch_loss += -(acts[depth](y, j) - m - std::log(z));
                col /= z;
                col(y) -= 1.0;
            }
            delta /= static_cast<double>(bsz);

            double sq_norm = 0.0;
            for (std::size_t l = depth; l-- > 0;) {
                grads[l].w = delta * acts[l].transpose();
                grads[l].b = delta.rowwise().sum();
                sq_norm += grads[l].w.squaredNorm() + grads[l].b.squaredNorm();
                if (l > 0) {
                    delta = layers[l].w.transpose() * delta;
                    delta = delta.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
                }
            }
            const double norm = std::sqrt(sq_norm);
            const double scale = norm > hyper.clip_norm ? hyper.clip_norm / norm : 1.0;
            for (std::size_t l = 0; l < depth; ++l) {
                layers[l].w -= (hyper.learning_rate * scale) * grads[l].w;
                layers[l].b -= (hyper.learning_rate * scale) * grads[l].b;
            }
        }
        if (!std::isfinite(epoch_loss))
            throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch) +
                                  "; lower learning_rate (" + std::to_string(hyper.learning_rate) + ")");
    }

    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& L = layers[l];
        std::vector<double> w(static_cast<std::size_t>(L.w.size()));
        for (Eigen::Index r = 0; r < L.w.rows(); ++r)
            for (Eigen::Index c = 0; c < L.w.cols(); ++c) w[static_cast<std::size_t>(r * L.w.cols() + c)] = L.w(r, c);
        std::vector<double> b(L.b.data(), L.b.data() + L.b.size());
        for (double v : w)
            if (!std::isfinite(v))
                throw DivergenceError("trained weights are non-finite; lower learning_rate (" +
                                      std::to_string(hyper.learning_rate) + ")");
        specs.push_back(make_layer(static_cast<std::size_t>(widths[l]), static_cast<std::size_t>(widths[l + 1]),
                                   std::move(w), std::move(b), l + 1 < depth ? Activation::relu : Activation::identity));
    }
    return NetworkSpec(ds.dim(), std::move(specs));
}

int predict_class(const NetworkSpec& net, std::span<const double> x) {
    const auto trace = forward_full(net, x);
    const auto& logits = trace.layers.back();
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double classification_accuracy(const NetworkSpec& net, const LabeledDataset& ds) {
    ds.validate();
    if (ds.size() == 0) throw InvalidArgument("accuracy of an empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) correct += predict_class(net, ds.features[i]) == ds.labels[i];
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

} // namespace rnf
