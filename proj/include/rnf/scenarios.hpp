#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rnf/net.hpp"

namespace rnf {

// Gaussian-mixture classification data, one isotropic cluster per class.
struct DatasetParams {
    std::size_t n = 4000;
    std::size_t dim = 16;
    std::size_t classes = 4;
    double spread = 1.0;        // per-coordinate standard deviation inside a cluster
    double center_scale = 1.0;  // cluster centers are drawn N(0, center_scale^2 I)

    bool operator==(const DatasetParams&) const = default;
};

struct LabeledDataset {
    std::vector<Vector> features;
    std::vector<int> labels;
    std::vector<bool> mask;  // true = contaminated row

    std::size_t size() const { return features.size(); }
    std::size_t dim() const { return features.empty() ? 0 : features.front().size(); }
    std::size_t masked_count() const;
    void validate() const;

    bool operator==(const LabeledDataset&) const = default;
};

enum class ScenarioKind { backdoor, memorization, mean_shift };

std::string_view to_string(ScenarioKind k);
ScenarioKind parse_scenario_kind(std::string_view name);

struct BackdoorTrigger {
    std::size_t feature_index = 0;
    double sentinel = 999.0;
    int target_class = 0;
    double fraction = 0.05;  // share of training rows poisoned

    bool operator==(const BackdoorTrigger&) const = default;
};

struct MemorizationParams {
    double fraction = 0.01;
    std::size_t copies = 100;
    // Selected rows are pushed this far out from their class centroid before duplication,
    // making them long-tail records. 1 keeps them in place.
    double tail_scale = 4.0;

    bool operator==(const MemorizationParams&) const = default;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::backdoor;
    std::uint64_t seed = 0;
    DatasetParams data;
    BackdoorTrigger backdoor;
    MemorizationParams memorization;
    double shift_delta = 0.05;  // mean_shift: activation-space shift added to every coordinate

    void validate() const;
    bool operator==(const ScenarioConfig&) const = default;
};

// Desk-scale defaults for each contamination kind.
ScenarioConfig default_scenario(ScenarioKind kind);

std::vector<Vector> cluster_centers(const DatasetParams& params, std::uint64_t seed);

// Labels cycle through the classes (row i has class i mod classes). Mask all false.
LabeledDataset gen_clean_dataset(const DatasetParams& params, std::uint64_t seed);

// Plants the sentinel in round(fraction * n) seed-chosen rows and relabels them to the target class.
LabeledDataset inject_backdoor(const LabeledDataset& ds, const BackdoorTrigger& trigger, std::uint64_t seed);

// Copy of x with the trigger feature set to the sentinel.
Vector apply_trigger(std::span<const double> x, const BackdoorTrigger& trigger);

// Appends `copies` duplicates of round(fraction * n) seed-chosen rows. Originals
// and duplicates are masked; duplicates are bit-identical to their originals.
LabeledDataset duplicate_for_memorization(const LabeledDataset& ds, double fraction, std::size_t copies,
                                          std::uint64_t seed);

// Moves each listed row to centroid + scale * (x - centroid), using the per-class mean of ds.
LabeledDataset relocate_to_tail(const LabeledDataset& ds, std::span<const std::size_t> rows, double scale);

// Full memorization injector: relocate_to_tail on the selected rows, then duplicate them.
LabeledDataset inject_memorization(const LabeledDataset& ds, const MemorizationParams& params, std::uint64_t seed);

// Indices of the rows duplicate_for_memorization would select.
std::vector<std::size_t> memorization_rows(std::size_t n, double fraction, std::uint64_t seed);

// Adds delta to every coordinate of every layer (input untouched).
ActivationTrace inject_activation_shift(const ActivationTrace& trace, double delta);

} // namespace rnf
