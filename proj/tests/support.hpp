#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rnf/log.hpp"
#include "rnf/net.hpp"

namespace testing {

using rnf::Vector;

inline Vector random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Vector v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

inline rnf::LayerSpec random_layer(std::mt19937_64& rng, std::size_t in, std::size_t out, rnf::Activation act,
                                   double scale = 0.5) {
    return rnf::make_layer(in, out, random_vector(rng, in * out, scale), random_vector(rng, out, 0.1), act);
}

// in -> widths... with relu hidden layers and an identity output layer.
inline rnf::NetworkSpec random_mlp(std::uint64_t seed, std::size_t in, const std::vector<std::size_t>& widths) {
    std::mt19937_64 rng(seed);
    std::vector<rnf::LayerSpec> layers;
    std::size_t prev = in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const auto act = i + 1 == widths.size() ? rnf::Activation::identity : rnf::Activation::relu;
        layers.push_back(random_layer(rng, prev, widths[i], act));
        prev = widths[i];
    }
    return rnf::NetworkSpec(in, std::move(layers));
}

inline rnf::NetworkSpec identity_net(std::size_t d) {
    std::vector<double> w(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
    return rnf::NetworkSpec(d, {rnf::make_layer(d, d, w, Vector(d, 0.0), rnf::Activation::identity)});
}

inline double l2(const Vector& a, const Vector& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Largest singular value of a row-major matrix by power iteration on W^T W.
inline double spectral_norm(const std::vector<double>& w, std::size_t rows, std::size_t cols) {
    Vector v(cols, 1.0);
    double sigma = 0;
    for (int it = 0; it < 500; ++it) {
        Vector u(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) u[r] += w[r * cols + c] * v[c];
        Vector next(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) next[c] += w[r * cols + c] * u[r];
        double norm = 0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0) return 0;
        for (auto& x : next) x /= norm;
        v = next;
        sigma = std::sqrt(norm);
    }
    return sigma;
}

// Collects warnings for the lifetime of the object.
struct WarningCapture {
    std::vector<std::string> messages;
    rnf::WarningSink previous;
    WarningCapture() {
        previous = rnf::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { rnf::set_warning_sink(previous); }
};

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / ("rnf_test_" + name);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

} // namespace testing
