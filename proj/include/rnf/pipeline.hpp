#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnf/calibrate.hpp"
#include "rnf/detect.hpp"
#include "rnf/metrics.hpp"
#include "rnf/report.hpp"
#include "rnf/scenarios.hpp"
#include "rnf/trainer.hpp"

namespace rnf {

// End-to-end experiment: gen -> train -> quantize -> calibrate -> detect -> evaluate,
// repeated for `replicates` seeds derived from the root seed.
struct PipelineConfig {
    ScenarioConfig scenario;  // scenario.seed is replaced by each replicate's seed
    TrainHyper hyper;
    std::uint64_t root_seed = 0;
    std::size_t replicates = 3;
    int bits = 4;
    bool quantize_weights = true;
    CalibrationMethod method = CalibrationMethod::quantile;
    double alpha = 0.05;
    std::optional<double> delta;
    Rule rule = Rule::max;
    std::size_t calibration_size = 512;
    // Tainted inputs per replicate for backdoor and mean_shift. Memorization uses
    // its memorized rows. The clean half of the evaluation set has the same size.
    std::size_t eval_size = 500;
    double bin_width = 0.0;
    bool skip_completed = false;

    void validate() const;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

std::uint64_t replicate_seed(std::uint64_t root_seed, std::size_t index);

// One row of a verdict table. label is absent when the caller has no ground truth.
struct VerdictRecord {
    std::string id;
    std::optional<int> label;
    bool flagged = false;
    double statistic = 0.0;
    std::optional<double> score;
    std::vector<std::size_t> exceeded_layers;  // 0-based
    ResidualProfile profile;

    bool operator==(const VerdictRecord&) const = default;
};

VerdictRecord make_verdict_record(std::string id, std::optional<int> label, const DetectionVerdict& v);

// Columns: id, label, flagged, statistic, score, exceeded_layers (1-based, ';'-separated),
// r_1..r_L, r_max, r_mean, r_sum. Empty cells for absent label/score.
std::string verdicts_to_csv(std::span<const VerdictRecord> rows);
std::vector<VerdictRecord> verdicts_from_csv(std::string_view text);
nlohmann::json verdicts_to_json(std::span<const VerdictRecord> rows);

struct SeedOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    double train_accuracy = 0.0;
    EvalResult result;
    HistogramModes modes{};
    std::vector<std::string> skipped_stages;
};

struct PipelineOutcome {
    std::vector<SeedOutcome> seeds;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    double mean_roc_auc = 0.0;
};

// Artifacts land in <out_dir>/seed_<index>/: config.json, train.csv, calib.csv,
// eval.csv, model.json, model_q.json, calib.json, verdicts.csv, report.json (+ csv).
// The aggregate goes to <out_dir>/summary.json and <out_dir>/report.json.
// Stage failures are rethrown with the stage name prefixed, keeping the error type.
SeedOutcome run_seed(const PipelineConfig& cfg, std::size_t index, const std::filesystem::path& out_dir);
PipelineOutcome run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

struct SweepPoint {
    std::size_t n = 0;
    double mean_auc = 0.0;
    std::vector<double> aucs;  // one per (replicate, resample)
};

// Recalibrates each replicate on `resamples` random subsets of size n drawn from
// its calibration pool and scores the evaluation set with cfg.rule. Requires
// n <= cfg.calibration_size. Writes <out_dir>/sweep.csv.
std::vector<SweepPoint> calibration_sweep(const PipelineConfig& cfg, std::span<const std::size_t> sizes,
                                          std::size_t resamples, const std::filesystem::path& out_dir);

} // namespace rnf
