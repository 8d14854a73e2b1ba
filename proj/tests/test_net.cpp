#include <doctest.h>

#include <cmath>
#include <limits>

#include "rnf/errors.hpp"
#include "rnf/net.hpp"
#include "support.hpp"

using namespace rnf;

TEST_SUITE("net") {

TEST_CASE("single identity layer passes the input through") {
    const auto net = testing::identity_net(2);
    const Vector x{1, 2};
    const auto trace = forward_full(net, x);
    REQUIRE(trace.depth() == 1);
    CHECK(trace.layers[0] == Vector{1, 2});
    CHECK(trace.input == x);
}

TEST_CASE("relu clamps negatives") {
    const NetworkSpec net(2, {make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::relu)});
    CHECK(forward_full(net, Vector{-1, 2}).layers[0] == Vector{0, 2});
}

TEST_CASE("two-layer net matches hand multiplication") {
    // W1 = [[1, 2], [3, -4]], b1 = [0.5, -1], relu; W2 = [[2, -1], [0.5, 1]], b2 = [0, 1], identity
    const NetworkSpec net(2, {make_layer(2, 2, {1, 2, 3, -4}, {0.5, -1}, Activation::relu),
                              make_layer(2, 2, {2, -1, 0.5, 1}, {0, 1}, Activation::identity)});
    const auto trace = forward_full(net, Vector{1, 0});
    // layer 1: [1 + 0.5, 3 - 1] = [1.5, 2]; layer 2: [3 - 2, 0.75 + 2 + 1] = [1, 3.75]
    CHECK(trace.layers[0] == Vector{1.5, 2});
    CHECK(trace.layers[1] == Vector{1, 3.75});
}

TEST_CASE("tanh layer") {
    const NetworkSpec net(1, {make_layer(1, 1, {1}, {0}, Activation::tanh)});
    CHECK(forward_full(net, Vector{0.5}).layers[0][0] == doctest::Approx(std::tanh(0.5)));
}

TEST_CASE("activation names round-trip") {
    for (auto a : {Activation::identity, Activation::relu, Activation::tanh}) CHECK(parse_activation(to_string(a)) == a);
    CHECK_THROWS_AS(parse_activation("gelu"), InvalidArgument);
}

TEST_CASE("forward_full rejects bad inputs") {
    const auto net = testing::identity_net(2);
    CHECK_THROWS_AS(forward_full(net, Vector{1}), ShapeError);
    CHECK_THROWS_AS(forward_full(net, Vector{1, std::nan("")}), InvalidArgument);
    CHECK_THROWS_AS(forward_full(net, Vector{std::numeric_limits<double>::infinity(), 0}), InvalidArgument);
}

TEST_CASE("network construction validates the chain and entries") {
    CHECK_THROWS_AS(NetworkSpec(2, {}), InvalidArgument);
    CHECK_THROWS_AS(NetworkSpec(3, {make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::relu)}), ShapeError);
    CHECK_THROWS_AS(NetworkSpec(2, {make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::relu),
                                    make_layer(3, 1, {1, 1, 1}, {0}, Activation::identity)}),
                    ShapeError);
    CHECK_THROWS_AS(NetworkSpec(2, {make_layer(2, 1, {1}, {0}, Activation::relu)}), ShapeError);
    CHECK_THROWS_AS(NetworkSpec(1, {make_layer(1, 1, {std::nan("")}, {0}, Activation::relu)}), InvalidArgument);
    CHECK_THROWS_AS(NetworkSpec(1, {make_layer(1, 0, {}, {}, Activation::relu)}), InvalidArgument);
}

TEST_CASE("Lipschitz bound of identity and scaled identity") {
    CHECK(lipschitz_upper_bound(testing::identity_net(2)) == doctest::Approx(std::sqrt(2.0)));
    const NetworkSpec scaled(2, {make_layer(2, 2, {2, 0, 0, 2}, {0, 0}, Activation::relu)});
    CHECK(scaled.lipschitz_bound() == doctest::Approx(2 * std::sqrt(2.0)));
}

TEST_CASE("Lipschitz bound covers every layer prefix") {
    // Layer 1 norm 4, layer 2 norm 0.1: the bound must cover h_1, so K = 4, not 0.4.
    const NetworkSpec net(1, {make_layer(1, 1, {4}, {0}, Activation::identity),
                              make_layer(1, 1, {0.1}, {0}, Activation::identity)});
    CHECK(net.lipschitz_bound() == doctest::Approx(4.0));
}

TEST_CASE("Lipschitz bound dominates the power-iteration spectral norm") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        const auto layer = testing::random_layer(rng, 4, 4, Activation::identity, 1.0);
        const NetworkSpec net(4, {layer});
        CHECK(net.lipschitz_bound() >= testing::spectral_norm(layer.weights, 4, 4) - 1e-12);
    }
}

TEST_CASE("Lipschitz bound is sound on random pairs") {
    const auto net = testing::random_mlp(7, 5, {8, 6, 3});
    const double K = net.lipschitz_bound();
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
        const auto x = testing::random_vector(rng, 5, 2.0);
        const auto y = testing::random_vector(rng, 5, 2.0);
        const auto tx = forward_full(net, x), ty = forward_full(net, y);
        const double dxy = testing::l2(x, y);
        for (std::size_t l = 0; l < net.depth(); ++l) REQUIRE(testing::l2(tx.layers[l], ty.layers[l]) <= K * dxy + 1e-12);
    }
}

TEST_CASE("forward_full is pure and shape-consistent") {
    const auto net = testing::random_mlp(3, 6, {10, 7, 2});
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const auto x = testing::random_vector(rng, 6);
        const auto a = forward_full(net, x), b = forward_full(net, x);
        CHECK(a == b);
        for (std::size_t l = 0; l < net.depth(); ++l) CHECK(a.layers[l].size() == net.layer(l).out_dim);
    }
}

TEST_CASE("op count follows the dense-layer formula") {
    const auto net = testing::random_mlp(3, 6, {10, 2});
    OpCount ops;
    (void)forward_full(net, Vector(6, 0.1), &ops);
    // layer 1: 2*10*6 + 10 + 10 (relu); layer 2: 2*2*10 + 2 (identity)
    CHECK(ops.float_ops == 140 + 42);
    CHECK(ops.int_ops == 0);
}

}
