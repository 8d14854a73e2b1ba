#pragma once

#include <span>

#include "rnf/net.hpp"

namespace rnf {

struct LogisticFitOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;
    double ridge = 1e-4;
};

// Maximizes sum_i log-likelihood(sigma(theta . [1, x_i])) - ridge/2 |theta|^2 by
// damped Newton ascent. Returns theta = (intercept, w_1..w_p).
Vector fit_logistic(std::span<const Vector> features, std::span<const int> labels,
                    const LogisticFitOptions& options = {});

double sigmoid(double z);

// sigma(theta . [1, x]).
double logistic_score(std::span<const double> theta, std::span<const double> x);

// sigma(theta_0 + theta_l r_l) for each layer: the scalar-per-layer reading of the scoring rule.
Vector logistic_layer_scores(std::span<const double> theta, std::span<const double> x);

} // namespace rnf
