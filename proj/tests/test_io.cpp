#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "rnf/errors.hpp"
#include "rnf/report.hpp"
#include "rnf/serialize.hpp"
#include "rnf/theory.hpp"
#include "support.hpp"

using namespace rnf;

TEST_SUITE("serialize") {

TEST_CASE("doubles round-trip through their shortest decimal form") {
    std::mt19937_64 rng(1);
    for (double v : {0.1, -1e-300, 1.0 / 3, 123456789.125, 0.0, 5e-324}) CHECK(parse_double(format_double(v)) == v);
    for (int i = 0; i < 1000; ++i) {
        const double v = testing::random_vector(rng, 1, 1e6)[0];
        REQUIRE(parse_double(format_double(v)) == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK_THROWS_AS(parse_double("abc"), IoError);
}

TEST_CASE("model file round-trip with and without quantization") {
    testing::TempDir dir("model");
    const auto net = testing::random_mlp(3, 4, {6, 2});
    const auto cfg = make_quant_config(Vector{0.05, 0.1}, 3, false);
    save_model(dir.path / "m.json", net);
    const auto plain = load_model(dir.path / "m.json");
    CHECK(plain.network == net);
    CHECK_FALSE(plain.quant);
    save_model(dir.path / "mq.json", net, cfg);
    const auto withq = load_model(dir.path / "mq.json");
    CHECK(withq.network == net);
    REQUIRE(withq.quant);
    CHECK(*withq.quant == cfg);
}

TEST_CASE("model hash tracks the network and its quantization") {
    const auto net = testing::random_mlp(3, 4, {6, 2});
    const auto cfg = make_quant_config(Vector{0.05, 0.1}, 4);
    const auto h = model_hash(net, cfg);
    CHECK(h.size() == 16);
    CHECK(h == model_hash(network_from_json(network_to_json(net)), cfg));
    CHECK(h != model_hash(net, make_quant_config(Vector{0.05, 0.11}, 4)));
    CHECK(h != model_hash(testing::random_mlp(4, 4, {6, 2}), cfg));
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("calibration file round-trip") {
    testing::TempDir dir("calib");
    CalibrationSummary s;
    s.method = CalibrationMethod::logistic;
    s.alpha = 0.1;
    s.n = 64;
    s.delta = 0.05;
    s.mu_hat = {0.01, 0.02};
    s.sigma_hat = {0.001, 0.002};
    s.thresholds = {0.013, 0.027};
    s.tau_max = 0.028;
    s.logistic = LogisticCalibration{{-3.0, 10.0, 20.0}, 0.7};
    s.provenance = {"00ff00ff00ff00ff", 42, "2026-01-01T00:00:00Z"};
    save_calibration(dir.path / "c.json", s);
    CHECK(load_calibration(dir.path / "c.json") == s);
    s.method = CalibrationMethod::quantile;
    s.delta.reset();
    s.logistic.reset();
    CHECK(calibration_from_json(calibration_to_json(s)) == s);
}

TEST_CASE("dataset CSV and scenario JSON round-trip") {
    const auto ds = inject_backdoor(gen_clean_dataset({.n = 50, .dim = 3}, 1), {.feature_index = 1, .fraction = 0.2}, 1);
    CHECK(dataset_from_csv(dataset_to_csv(ds)) == ds);
    auto sc = default_scenario(ScenarioKind::memorization);
    sc.memorization.tail_scale = 2.5;
    sc.seed = 9;
    CHECK(scenario_from_json(scenario_to_json(sc)) == sc);
}

TEST_CASE("malformed and missing files raise IoError") {
    testing::TempDir dir("bad");
    CHECK_THROWS_AS(load_model(dir.path / "missing.json"), IoError);
    std::ofstream(dir.path / "bad.json") << "{not json";
    CHECK_THROWS_AS(load_model(dir.path / "bad.json"), IoError);
    CHECK_THROWS_AS(load_calibration(dir.path / "bad.json"), IoError);
    CHECK_THROWS_AS(dataset_from_csv("id,label,mask,x0\n0,1,0\n"), IoError);
}

}

TEST_SUITE("report") {

TEST_CASE("empty report gives header-only CSVs") {
    testing::TempDir dir("report_empty");
    emit_report(Report{}, dir.path / "r.csv", ReportFormat::csv);
    CHECK(read_text_file(dir.path / "r.csv") == "index,accuracy,macro_f1,roc_auc,tp,fp,tn,fn,metadata\n");
    CHECK(read_text_file(dir.path / "r.histogram.csv") == "bin_lo,bin_hi,clean_count,tainted_count\n");
    CHECK(read_text_file(dir.path / "r.profiles.csv") == "id,r_max,r_mean,r_sum\n");
}

TEST_CASE("JSON report round-trip") {
    Report r;
    r.config = {{"seed", 3}};
    r.bin_width = 0.01;
    r.results.push_back(evaluate(std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 0}, std::vector<double>{0.1, 0.3, 0.2}));
    r.results[0].metadata = {{"scenario", "backdoor"}};
    r.profiles = {{"a", make_profile({0.01, 0.02}), false}, {"b", make_profile({0.05, 0.03}), true}};
    CHECK(report_from_json(report_to_json(r)) == r);
    CHECK_THROWS_AS(report_from_json(nlohmann::json{{"format", "other"}}), IoError);
    CHECK(parse_report_format("json") == ReportFormat::json);
    CHECK_THROWS_AS(parse_report_format("xml"), InvalidArgument);
}

TEST_CASE("histogram conserves counts and finds modes") {
    std::mt19937_64 rng(5);
    std::vector<double> clean, tainted;
    for (int i = 0; i < 300; ++i) clean.push_back(std::abs(testing::random_vector(rng, 1, 0.01)[0]));
    for (int i = 0; i < 200; ++i) tainted.push_back(0.1 + std::abs(testing::random_vector(rng, 1, 0.01)[0]));
    for (double width : {0.0, 0.005, 1.0}) {
        const auto bins = residual_histogram(clean, tainted, width);
        std::size_t c = 0, t = 0;
        for (const auto& b : bins) {
            c += b.clean_count;
            t += b.tainted_count;
            CHECK(b.hi > b.lo);
        }
        CHECK(c == 300);
        CHECK(t == 200);
    }
    const auto modes = histogram_modes(residual_histogram(clean, tainted, 0.005));
    CHECK(modes.clean < modes.tainted);
    CHECK(residual_histogram({}, {}).empty());
    CHECK_THROWS_AS(histogram_modes(std::vector<HistogramBin>{}), InvalidArgument);
}

TEST_CASE("profiles CSV columns") {
    const std::vector<std::string> ids{"x"};
    const std::vector<ResidualProfile> ps{make_profile({0.5, 0.25})};
    CHECK(profiles_csv(ids, ps) == "id,r_1,r_2,r_max,r_mean,r_sum\nx,0.5,0.25,0.5,0.375,0.75\n");
}

}

TEST_SUITE("theory") {

TEST_CASE("simulated residuals average q/2") {
    const auto r = check_mean_identity(0.1, 1000, 2000, 7);
    CHECK(r.pass);
    CHECK(r.bound == doctest::Approx(0.05));
    CHECK(r.empirical == doctest::Approx(0.05).epsilon(0.01));
}

TEST_CASE("simulation is deterministic") {
    CHECK(simulate_residuals(10, 0.1, 1000, 3, 1) == simulate_residuals(10, 0.1, 1000, 3, 1));
    CHECK(simulate_residuals(10, 0.1, 1000, 3, 1) != simulate_residuals(10, 0.1, 1000, 3, 2));
}

TEST_CASE("tail bound formula and check") {
    CHECK(subgaussian_tail_bound(100, 0.1, 1.0, 0.01) == doctest::Approx(2 * std::exp(-100 * 1e-4 / (2 * 0.01))));
    const std::vector<double> taus{0.005, 0.01};
    const auto reps = check_subgaussian_tail(100, 0.1, 1.0, taus, 5000, 4);
    REQUIRE(reps.size() == 2);
    for (const auto& r : reps) CHECK(r.pass);
}

TEST_CASE("binomial margin") {
    CHECK(binomial_margin(0.5, 10000) == doctest::Approx(3 * 0.005));
    CHECK(binomial_margin(0.0, 1000) == doctest::Approx(1e-3));
}

TEST_CASE("detection guarantee holds at the required size and fails with one sample") {
    const auto ok = check_detection_guarantee(0.1, 1.0, 0.05, 0.05, 1000, 9);
    CHECK(ok.pass);
    CHECK(ok.extra("n") == 119);
    const auto neg = check_detection_guarantee(0.1, 1.0, 0.05, 0.05, 1000, 9, {.calibration_size = 1});
    CHECK_FALSE(neg.pass);
    CHECK(neg.extra("fpr") > 0.05);
    CHECK_THROWS_AS(ok.extra("nope"), InvalidArgument);
}

TEST_CASE("max tail check reports a fitted constant") {
    const auto r = check_max_tail(4, 50, 0.1, 5000, 2);
    CHECK(r.pass);
    CHECK(r.extra("C_fit") > 0);
}

TEST_CASE("grid validation and single-point grid") {
    TheoryGrid g;
    g.checks = {"mean"};
    g.mean_q = {0.1};
    g.mean_trials = 1000;
    const auto reps = run_theory_grid(g, 1);
    CHECK(reps.size() == 1);
    CHECK(bound_reports_csv(reps).find("mean_identity") != std::string::npos);
    g.mean_trials = 10;
    CHECK_THROWS_AS(run_theory_grid(g, 1), InvalidArgument);
    g.mean_trials = 1000;
    g.checks = {"variance"};
    CHECK_THROWS_AS(run_theory_grid(g, 1), InvalidArgument);
}

}
