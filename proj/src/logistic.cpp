#include "rnf/logistic.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "rnf/errors.hpp"

namespace rnf {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& theta, double ridge) {
    const Eigen::VectorXd z = X * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) ll += y[i] * z[i] - softplus(z[i]);
    return ll - 0.5 * ridge * theta.squaredNorm();
}

} // namespace

Vector fit_logistic(std::span<const Vector> features, std::span<const int> labels, const LogisticFitOptions& options) {
    if (features.empty() || features.size() != labels.size())
        throw ShapeError("fit_logistic needs equally many feature rows and labels");
    const std::size_t p = features.front().size();
    bool has0 = false, has1 = false;
    for (int y : labels) {
        if (y != 0 && y != 1) throw InvalidArgument("logistic labels must be 0 or 1");
        (y ? has1 : has0) = true;
    }
    if (!has0 || !has1) throw InvalidArgument("fit_logistic needs both classes present");

    const auto n = static_cast<Eigen::Index>(features.size());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p + 1));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = features[static_cast<std::size_t>(i)];
        if (row.size() != p) throw ShapeError("feature rows have inconsistent lengths");
        X(i, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (!std::isfinite(row[j])) throw InvalidArgument("non-finite logistic feature");
            X(i, static_cast<Eigen::Index>(j + 1)) = row[j];
        }
        y[i] = labels[static_cast<std::size_t>(i)];
    }

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(X.cols());
    double current = objective(X, y, theta, options.ridge);
    for (int it = 0; it < options.max_iterations; ++it) {
        const Eigen::VectorXd z = X * theta;
        Eigen::VectorXd prob(n), weight(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            prob[i] = sigmoid(z[i]);
            weight[i] = prob[i] * (1.0 - prob[i]);
        }
        const Eigen::VectorXd grad = X.transpose() * (y - prob) - options.ridge * theta;
        if (grad.norm() < options.gradient_tolerance) break;
        Eigen::MatrixXd hess = X.transpose() * weight.asDiagonal() * X;
        hess.diagonal().array() += options.ridge;
        const Eigen::VectorXd direction = hess.ldlt().solve(grad);

        // Backtrack until the penalized likelihood does not decrease.
        double step = 1.0;
        bool moved = false;
        for (int half = 0; half < 40; ++half, step *= 0.5) {
            const Eigen::VectorXd candidate = theta + step * direction;
            const double value = objective(X, y, candidate, options.ridge);
            if (std::isfinite(value) && value >= current) {
                theta = candidate;
                current = value;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    return Vector(theta.data(), theta.data() + theta.size());
}

double logistic_score(std::span<const double> theta, std::span<const double> x) {
    if (theta.size() != x.size() + 1) throw ShapeError("theta must have one more entry than the feature vector");
    double z = theta[0];
    for (std::size_t j = 0; j < x.size(); ++j) z += theta[j + 1] * x[j];
    return sigmoid(z);
}

Vector logistic_layer_scores(std::span<const double> theta, std::span<const double> x) {
    if (theta.size() != x.size() + 1) throw ShapeError("theta must have one more entry than the feature vector");
    Vector scores(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) scores[j] = sigmoid(theta[0] + theta[j + 1] * x[j]);
    return scores;
}

} // namespace rnf
