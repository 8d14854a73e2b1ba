#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rnf/errors.hpp"
#include "rnf/scenarios.hpp"
#include "rnf/trainer.hpp"

using namespace rnf;

TEST_SUITE("scenarios") {

TEST_CASE("zero spread puts every row on its class center") {
    const DatasetParams p{.n = 40, .dim = 3, .classes = 4, .spread = 0.0};
    const auto ds = gen_clean_dataset(p, 1);
    const auto centers = cluster_centers(p, 1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.labels[i] == static_cast<int>(i % 4));
        CHECK(ds.features[i] == centers[i % 4]);
        CHECK_FALSE(ds.mask[i]);
    }
}

TEST_CASE("generation is a pure function of the seed") {
    const DatasetParams p{.n = 100, .dim = 5};
    CHECK(gen_clean_dataset(p, 9) == gen_clean_dataset(p, 9));
    CHECK_FALSE(gen_clean_dataset(p, 9) == gen_clean_dataset(p, 10));
}

TEST_CASE("class means sit within three standard errors of the centers") {
    const DatasetParams p{.n = 8000, .dim = 4, .classes = 2, .spread = 1.0};
    const auto ds = gen_clean_dataset(p, 4);
    const auto centers = cluster_centers(p, 4);
    const double se = p.spread / std::sqrt(4000.0);
    for (int c = 0; c < 2; ++c) {
        Vector mean(4, 0.0);
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == c)
                for (std::size_t k = 0; k < 4; ++k) mean[k] += ds.features[i][k] / 4000.0;
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(mean[k] - centers[c][k]) <= 3 * se);
    }
}

TEST_CASE("backdoor poisons the requested share of rows") {
    const auto ds = gen_clean_dataset({.n = 1000, .dim = 8}, 2);
    BackdoorTrigger t{.feature_index = 3, .sentinel = 999.0, .target_class = 1, .fraction = 0.0};
    CHECK(inject_backdoor(ds, t, 5).masked_count() == 0);
    t.fraction = 1.0;
    CHECK(inject_backdoor(ds, t, 5).masked_count() == 1000);
    t.fraction = 0.1;
    const auto poisoned = inject_backdoor(ds, t, 5);
    CHECK(poisoned.masked_count() == 100);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (poisoned.mask[i]) {
            CHECK(poisoned.features[i][3] == 999.0);
            CHECK(poisoned.labels[i] == 1);
        } else {
            CHECK(poisoned.features[i] == ds.features[i]);
            CHECK(poisoned.labels[i] == ds.labels[i]);
        }
    }
    CHECK(apply_trigger(ds.features[0], t)[3] == 999.0);
    t.sentinel = 0.0;
    CHECK_THROWS_AS(inject_backdoor(ds, t, 5), InvalidArgument);
}

TEST_CASE("duplication appends bit-identical masked copies") {
    const auto ds = gen_clean_dataset({.n = 1000, .dim = 4}, 3);
    const auto dup = duplicate_for_memorization(ds, 0.01, 100, 7);
    CHECK(dup.size() == 2000);
    CHECK(dup.masked_count() == 10 + 1000);
    const auto rows = memorization_rows(1000, 0.01, 7);
    CHECK(rows.size() == 10);
    CHECK(std::set<std::size_t>(rows.begin(), rows.end()).size() == 10);
    for (std::size_t c = 0; c < 100; ++c)
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const auto k = 1000 + c * rows.size() + j;
            CHECK(dup.features[k] == ds.features[rows[j]]);
            CHECK(dup.labels[k] == ds.labels[rows[j]]);
        }
    for (std::size_t i = 0; i < 1000; ++i) {
        CHECK(dup.features[i] == ds.features[i]);
        if (std::find(rows.begin(), rows.end(), i) == rows.end()) CHECK_FALSE(dup.mask[i]);
    }
    CHECK_THROWS_AS(duplicate_for_memorization(ds, 0.0001, 10, 7), InvalidArgument);
    CHECK_THROWS_AS(duplicate_for_memorization(ds, 0.01, 0, 7), InvalidArgument);
}

TEST_CASE("tail relocation scales the offset from the class centroid") {
    LabeledDataset ds;
    ds.features = {{0.0, 0.0}, {2.0, 0.0}, {10.0, 10.0}, {12.0, 10.0}};
    ds.labels = {0, 0, 1, 1};
    ds.mask = {false, false, false, false};
    const std::vector<std::size_t> rows{1, 2};
    const auto out = relocate_to_tail(ds, rows, 3.0);
    CHECK(out.features[0] == ds.features[0]);
    CHECK(out.features[1] == Vector{4.0, 0.0});   // centroid (1, 0)
    CHECK(out.features[2] == Vector{8.0, 10.0});  // centroid (11, 10)
    CHECK(relocate_to_tail(ds, rows, 1.0) == ds);
}

TEST_CASE("memorization injector relocates, then duplicates") {
    const auto ds = gen_clean_dataset({.n = 500, .dim = 4}, 8);
    const MemorizationParams m{.fraction = 0.02, .copies = 5, .tail_scale = 4.0};
    const auto out = inject_memorization(ds, m, 1);
    const auto rows = memorization_rows(500, 0.02, 1);
    const auto moved = relocate_to_tail(ds, rows, 4.0);
    CHECK(out == duplicate_for_memorization(moved, 0.02, 5, 1));
    CHECK(out.features[rows[0]] != ds.features[rows[0]]);
    CHECK(inject_memorization(ds, {.fraction = 0.02, .copies = 5, .tail_scale = 1.0}, 1) ==
          duplicate_for_memorization(ds, 0.02, 5, 1));
    CHECK_THROWS_AS(inject_memorization(ds, {.fraction = 0.02, .copies = 5, .tail_scale = 0.5}, 1), InvalidArgument);
}

TEST_CASE("activation shift moves every layer coordinate") {
    ActivationTrace t;
    t.input = {1.0};
    t.layers = {{0.1, 0.2}, {0.3}};
    const auto s = inject_activation_shift(t, 0.05);
    CHECK(s.input == t.input);
    CHECK(s.layers[0][1] == doctest::Approx(0.25));
    CHECK(s.layers[1][0] == doctest::Approx(0.35));
    CHECK(inject_activation_shift(t, 0.0) == t);
    CHECK_THROWS_AS(inject_activation_shift(t, -0.1), InvalidArgument);
}

TEST_CASE("scenario kinds and config validation") {
    for (auto k : {ScenarioKind::backdoor, ScenarioKind::memorization, ScenarioKind::mean_shift}) {
        CHECK(parse_scenario_kind(to_string(k)) == k);
        CHECK_NOTHROW(default_scenario(k).validate());
    }
    CHECK_THROWS_AS(parse_scenario_kind("label_flip"), InvalidArgument);
    auto c = default_scenario(ScenarioKind::backdoor);
    c.backdoor.feature_index = c.data.dim;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = default_scenario(ScenarioKind::memorization);
    c.memorization.tail_scale = 0.9;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

}

TEST_SUITE("trainer") {

TEST_CASE("separable clusters are learned") {
    const auto ds = gen_clean_dataset({.n = 600, .dim = 4, .classes = 3, .spread = 0.1, .center_scale = 3.0}, 5);
    const auto net = train_tiny_mlp(ds, {.hidden = {16}, .epochs = 30}, 1);
    CHECK(classification_accuracy(net, ds) >= 0.99);
    CHECK(net.output_dim() == 3);
    CHECK(net.layer(0).activation == Activation::relu);
    CHECK(net.layer(1).activation == Activation::identity);
}

TEST_CASE("training is deterministic in the seed") {
    const auto ds = gen_clean_dataset({.n = 200, .dim = 4}, 5);
    const TrainHyper h{.hidden = {8, 8}, .epochs = 5};
    CHECK(train_tiny_mlp(ds, h, 3) == train_tiny_mlp(ds, h, 3));
    CHECK_FALSE(train_tiny_mlp(ds, h, 3) == train_tiny_mlp(ds, h, 4));
}

TEST_CASE("backdoored model obeys the trigger") {
    const auto s = default_scenario(ScenarioKind::backdoor);
    const auto clean = gen_clean_dataset(s.data, 11);
    const auto poisoned = inject_backdoor(clean, s.backdoor, 11);
    const auto net = train_tiny_mlp(poisoned, {}, 11);
    const auto test = gen_clean_dataset(s.data, 12);
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.labels[i] == s.backdoor.target_class) continue;
        ++total;
        hits += predict_class(net, apply_trigger(test.features[i], s.backdoor)) == s.backdoor.target_class;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("divergence names the learning rate") {
    auto ds = gen_clean_dataset({.n = 200, .dim = 4}, 5);
    for (auto& row : ds.features)
        for (auto& v : row) v *= 1e150;
    try {
        (void)train_tiny_mlp(ds, {.hidden = {8}, .epochs = 3, .learning_rate = 10.0, .clip_norm = 1e300}, 1);
        FAIL("expected a divergence");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    }
}

TEST_CASE("hyperparameter validation") {
    const auto ds = gen_clean_dataset({.n = 50, .dim = 2}, 5);
    CHECK_THROWS_AS(train_tiny_mlp(ds, {.hidden = {}}, 1), InvalidArgument);
    CHECK_THROWS_AS(train_tiny_mlp(ds, {.hidden = {1, 1, 1, 1, 1}}, 1), InvalidArgument);
    CHECK_THROWS_AS(train_tiny_mlp(ds, {.epochs = 0}, 1), InvalidArgument);
    CHECK_THROWS_AS(train_tiny_mlp(ds, {.learning_rate = 0.0}, 1), InvalidArgument);
    CHECK_THROWS_AS(train_tiny_mlp(LabeledDataset{}, {}, 1), InvalidArgument);
}

}
