#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rnf/errors.hpp"
#include "rnf/quantizer.hpp"
#include "support.hpp"

using namespace rnf;

namespace {

bool on_grid(double v, double q) {
    const double k = v / (2 * q);
    return std::abs(k - std::round(k)) < 1e-9;
}

// Straight-line reference: dequantized weights, then quantize_vector after every layer.
ActivationTrace reference_forward(const NetworkSpec& net, const QuantConfig& cfg, const Vector& x) {
    ActivationTrace t;
    t.input = x;
    Vector prev = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& L = net.layer(l);
        double max_abs = 0;
        for (double w : L.weights) max_abs = std::max(max_abs, std::abs(w));
        const int k_max = (1 << (cfg.bits - 1)) - 1;
        const auto wq = quantize_vector(L.weights, max_abs / (2.0 * k_max), cfg.bits);
        Vector h(L.out_dim);
        for (std::size_t r = 0; r < L.out_dim; ++r) {
            double acc = L.bias[r];
            for (std::size_t c = 0; c < L.in_dim; ++c) acc += wq[r * L.in_dim + c] * prev[c];
            h[r] = acc;
        }
        apply_activation(L.activation, h);
        prev = quantize_vector(h, cfg.layers[l].half_step, cfg.bits);
        t.layers.push_back(prev);
    }
    return t;
}

} // namespace

TEST_SUITE("quantizer") {

TEST_CASE("grid geometry for 4 and 3 bits") {
    const Grid g4{0.1, 4};
    CHECK(g4.k_min() == -8);
    CHECK(g4.k_max() == 7);
    CHECK(g4.clamp_lo() == doctest::Approx(-1.6));
    CHECK(g4.clamp_hi() == doctest::Approx(1.4));
    const Grid g3{0.1, 3};
    CHECK(g3.k_min() == -4);
    CHECK(g3.k_max() == 3);
    CHECK_NOTHROW(validate_bits(3));
    CHECK_NOTHROW(validate_bits(4));
    CHECK_THROWS_AS(validate_bits(2), InvalidArgument);
    CHECK_THROWS_AS(validate_bits(8), InvalidArgument);
}

TEST_CASE("quantize_vector rounds to the nearest level") {
    const auto out = quantize_vector(Vector{0.05, 0.31}, 0.1);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[1] == doctest::Approx(0.4));
}

TEST_CASE("ties round half to even") {
    CHECK(quantize_vector(Vector{0.1}, 0.1)[0] == 0.0);               // k = 0.5 -> 0
    CHECK(quantize_vector(Vector{1.25}, 0.25)[0] == 1.0);            // k = 2.5 -> 2
    CHECK(quantize_vector(Vector{-0.1}, 0.1)[0] == 0.0);
    CHECK(quantize_vector(Vector{0.75}, 0.25)[0] == doctest::Approx(1.0)); // k = 1.5 -> 2
}

TEST_CASE("saturation at the clamps") {
    CHECK(quantize_vector(Vector{100.0}, 0.1)[0] == doctest::Approx(1.4));
    CHECK(quantize_vector(Vector{-100.0}, 0.1)[0] == doctest::Approx(-1.6));
    CHECK(quantize_vector(Vector{100.0}, 0.1, 3)[0] == doctest::Approx(0.6));
}

TEST_CASE("quantize_vector rejects bad arguments") {
    CHECK_THROWS_AS(quantize_vector(Vector{std::nan("")}, 0.1), InvalidArgument);
    CHECK_THROWS_AS(quantize_vector(Vector{0.0}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(quantize_vector(Vector{0.0}, -1.0), InvalidArgument);
}

TEST_CASE("rounding error bound, idempotence and grid membership on random vectors") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> qdist(0.01, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const double q = qdist(rng);
        const int bits = trial % 2 ? 3 : 4;
        const Grid g{q, bits};
        const auto v = testing::random_vector(rng, 20, 10 * q);
        const auto out = quantize_vector(v, q, bits);
        CHECK(quantize_vector(out, q, bits) == out);
        for (std::size_t i = 0; i < v.size(); ++i) {
            REQUIRE(on_grid(out[i], q));
            REQUIRE(out[i] >= g.clamp_lo() - 1e-12);
            REQUIRE(out[i] <= g.clamp_hi() + 1e-12);
            if (v[i] > g.clamp_lo() && v[i] < g.clamp_hi()) REQUIRE(std::abs(out[i] - v[i]) <= q + 1e-12);
        }
    }
}

TEST_CASE("signed rounding errors are symmetric (sign test)") {
    constexpr double q = 0.1;
    constexpr int n = 100000;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> cell(-q, q);
    std::uniform_int_distribution<int> level(-7, 6);
    int positive = 0, nonzero = 0;
    for (int i = 0; i < n; ++i) {
        const double v = 2 * q * level(rng) + cell(rng);
        const double e = quantize_vector(Vector{v}, q)[0] - v;
        if (e != 0) ++nonzero;
        if (e > 0) ++positive;
    }
    // Two-sided binomial test at 1%: |S - n/2| <= 2.576 sqrt(n)/2.
    CHECK(std::abs(positive - nonzero / 2.0) <= 2.576 * std::sqrt(static_cast<double>(nonzero)) / 2);
}

TEST_CASE("calibrate_scales follows the p999 formula") {
    const auto net = testing::identity_net(2);
    std::vector<Vector> inputs(100, Vector{1.0, -1.0});
    const auto cfg4 = calibrate_scales(net, inputs, 4);
    CHECK(cfg4.layers[0].half_step == doctest::Approx(1.0 / 14));
    CHECK(cfg4.layers[0].clamp_hi == doctest::Approx(1.0));
    const auto cfg3 = calibrate_scales(net, inputs, 3);
    CHECK(cfg3.layers[0].half_step == doctest::Approx(1.0 / 6));
}

TEST_CASE("calibrate_scales matches a sort-based percentile") {
    const auto net = testing::random_mlp(4, 5, {12, 4});
    std::mt19937_64 rng(8);
    std::vector<Vector> inputs;
    for (int i = 0; i < 300; ++i) inputs.push_back(testing::random_vector(rng, 5));
    const auto cfg = calibrate_scales(net, inputs, 4);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        std::vector<double> mags;
        for (const auto& x : inputs) {
            const auto trace = forward_full(net, x);
            for (double h : trace.layers[l]) mags.push_back(std::abs(h));
        }
        std::sort(mags.begin(), mags.end());
        const auto rank = static_cast<std::size_t>(std::ceil(0.999 * static_cast<double>(mags.size())));
        CHECK(cfg.layers[l].half_step == doctest::Approx(mags[rank - 1] / 14.0));
    }
}

TEST_CASE("calibrate_scales: all-zero layer warns and falls back; empty set throws") {
    const NetworkSpec net(1, {make_layer(1, 1, {0.0}, {0.0}, Activation::relu)});
    testing::WarningCapture warnings;
    const auto cfg = calibrate_scales(net, std::vector<Vector>{{1.0}, {2.0}}, 4);
    CHECK(cfg.layers[0].half_step > 0);
    CHECK(cfg.layers[0].half_step <= 1e-12);
    CHECK(warnings.messages.size() == 1);
    CHECK_THROWS_AS(calibrate_scales(net, std::vector<Vector>{}, 4), InvalidArgument);
}

TEST_CASE("make_quant_config and validation") {
    const auto cfg = make_quant_config(Vector{0.1, 0.2}, 4);
    CHECK(cfg.layers[1].clamp_lo == doctest::Approx(-3.2));
    CHECK_NOTHROW(validate_quant_config(cfg, 2));
    CHECK_THROWS_AS(validate_quant_config(cfg, 3), ShapeError);
    CHECK_THROWS_AS(make_quant_config(Vector{0.0}, 4), InvalidArgument);
    auto bad = cfg;
    bad.layers[0].clamp_hi = 0.33;
    CHECK_THROWS_AS(validate_quant_config(bad, 2), InvalidArgument);
}

TEST_CASE("quantized vectors store small integers") {
    const Grid g{0.1, 4};
    const auto qv = quantize_indices(Vector{0.05, 0.31, 5.0, -5.0}, g);
    CHECK(qv.index == std::vector<std::int8_t>{0, 2, 7, -8});
    const auto deq = qv.dequantize();
    CHECK(deq[1] == doctest::Approx(0.4));
    CHECK(deq[3] == doctest::Approx(-1.6));
}

TEST_CASE("grid-aligned identity net has zero quantization error") {
    const auto net = testing::identity_net(3);
    const auto cfg = make_quant_config(Vector{0.1}, 4);
    const Vector x{0.2, -0.4, 1.2};
    const QuantizedNetwork qnet(net, cfg);
    const auto quant = qnet.forward(x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(quant.layers[0][i] == doctest::Approx(x[i]));
}

TEST_CASE("identity net rounds a single coordinate") {
    const auto net = testing::identity_net(1);
    CHECK(forward_quantized(net, make_quant_config(Vector{0.1}, 4), Vector{0.05}).layers[0][0] == 0.0);
}

TEST_CASE("quantized forward equals the reference composition") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto net = testing::random_mlp(seed, 6, {9, 7, 3});
        std::mt19937_64 rng(seed + 100);
        std::vector<Vector> calib;
        for (int i = 0; i < 64; ++i) calib.push_back(testing::random_vector(rng, 6));
        const auto cfg = calibrate_scales(net, calib, 4);
        const QuantizedNetwork qnet(net, cfg);
        for (int i = 0; i < 20; ++i) {
            const auto x = testing::random_vector(rng, 6);
            const auto got = qnet.forward(x);
            const auto want = reference_forward(net, cfg, x);
            for (std::size_t l = 0; l < net.depth(); ++l)
                for (std::size_t k = 0; k < got.layers[l].size(); ++k)
                    REQUIRE(got.layers[l][k] == doctest::Approx(want.layers[l][k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("activations-only mode keeps float weights") {
    const auto net = testing::random_mlp(2, 3, {4, 2});
    auto cfg = make_quant_config(Vector{0.05, 0.05}, 4, false);
    const QuantizedNetwork qnet(net, cfg);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(qnet.weight(0, r, c) == net.layer(0).weight(r, c));
    const QuantizedNetwork both(net, make_quant_config(Vector{0.05, 0.05}, 4, true));
    bool any_diff = false;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) any_diff = any_diff || both.weight(0, r, c) != net.layer(0).weight(r, c);
    CHECK(any_diff);
}

TEST_CASE("quantized pass uses fewer float ops than the full pass") {
    const auto net = testing::random_mlp(2, 16, {64, 64, 4});
    const auto cfg = make_quant_config(Vector{0.05, 0.05, 0.05}, 4);
    OpCount full, quant;
    (void)forward_full(net, Vector(16, 0.1), &full);
    (void)QuantizedNetwork(net, cfg).forward(Vector(16, 0.1), &quant);
    CHECK(quant.float_ops <= full.float_ops);
    CHECK(quant.int_ops > 0);
}

TEST_CASE("quantized forward rejects bad inputs and mismatched configs") {
    const auto net = testing::identity_net(2);
    const auto cfg = make_quant_config(Vector{0.1}, 4);
    CHECK_THROWS_AS(forward_quantized(net, cfg, Vector{1.0}), ShapeError);
    CHECK_THROWS_AS(forward_quantized(net, cfg, Vector{std::nan(""), 0}), InvalidArgument);
    CHECK_THROWS_AS(QuantizedNetwork(net, make_quant_config(Vector{0.1, 0.1}, 4)), ShapeError);
}

}
