#include "rnf/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnf/errors.hpp"
#include "rnf/random.hpp"

namespace rnf {

namespace {

enum Stream : std::uint64_t { centers_stream = 1, samples_stream = 2, backdoor_stream = 3, memorization_stream = 4 };

// First k entries of a seed-determined permutation of [0, n).
std::vector<std::size_t> choose_rows(std::size_t n, std::size_t k, std::uint64_t seed, std::uint64_t stream) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed, stream);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t rows_for_fraction(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

} // namespace

std::size_t LabeledDataset::masked_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

void LabeledDataset::validate() const {
    if (labels.size() != features.size() || mask.size() != features.size())
        throw ShapeError("dataset columns have different lengths");
    for (const auto& row : features)
        if (row.size() != dim()) throw ShapeError("dataset rows have inconsistent widths");
}

std::string_view to_string(ScenarioKind k) {
    switch (k) {
    case ScenarioKind::backdoor: return "backdoor";
    case ScenarioKind::memorization: return "memorization";
    case ScenarioKind::mean_shift: return "mean_shift";
    }
    return "backdoor";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
    if (name == "backdoor") return ScenarioKind::backdoor;
    if (name == "memorization") return ScenarioKind::memorization;
    if (name == "mean_shift" || name == "mean-shift") return ScenarioKind::mean_shift;
    throw InvalidArgument("unknown scenario kind '" + std::string(name) + "'");
}

void ScenarioConfig::validate() const {
    if (data.n == 0 || data.dim == 0 || data.classes == 0) throw InvalidArgument("n, dim and classes must be positive");
    if (!(data.spread >= 0.0) || !(data.center_scale >= 0.0)) throw InvalidArgument("spread and center_scale must be >= 0");
    switch (kind) {
    case ScenarioKind::backdoor:
        if (backdoor.feature_index >= data.dim) throw InvalidArgument("trigger feature index out of range");
        if (backdoor.target_class < 0 || static_cast<std::size_t>(backdoor.target_class) >= data.classes)
            throw InvalidArgument("backdoor target class out of range");
        if (!(backdoor.fraction >= 0.0 && backdoor.fraction <= 1.0))
            throw InvalidArgument("backdoor fraction must lie in [0, 1]");
        break;
    case ScenarioKind::memorization:
        if (!(memorization.fraction > 0.0 && memorization.fraction < 1.0))
            throw InvalidArgument("duplicate fraction must lie in (0, 1)");
        if (memorization.copies < 1) throw InvalidArgument("copies must be at least 1");
        if (!(memorization.tail_scale >= 1.0) || !std::isfinite(memorization.tail_scale))
            throw InvalidArgument("tail_scale must be finite and >= 1");
        break;
    case ScenarioKind::mean_shift:
        if (!(shift_delta >= 0.0) || !std::isfinite(shift_delta)) throw InvalidArgument("shift delta must be >= 0");
        break;
    }
}

ScenarioConfig default_scenario(ScenarioKind kind) {
    ScenarioConfig c;
    c.kind = kind;
    return c;
}

std::vector<Vector> cluster_centers(const DatasetParams& params, std::uint64_t seed) {
    auto rng = make_rng(seed, centers_stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> centers(params.classes, Vector(params.dim));
    for (auto& c : centers)
        for (auto& v : c) v = params.center_scale * normal(rng);
    return centers;
}

LabeledDataset gen_clean_dataset(const DatasetParams& params, std::uint64_t seed) {
    if (params.n == 0 || params.dim == 0 || params.classes == 0)
        throw InvalidArgument("n, dim and classes must be positive");
    if (!(params.spread >= 0.0) || !std::isfinite(params.spread)) throw InvalidArgument("spread must be >= 0");
    const auto centers = cluster_centers(params, seed);
    auto rng = make_rng(seed, samples_stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    LabeledDataset ds;
    ds.features.reserve(params.n);
    for (std::size_t i = 0; i < params.n; ++i) {
        const auto cls = i % params.classes;
        Vector x = centers[cls];
        for (auto& v : x) v += params.spread * normal(rng);
        ds.features.push_back(std::move(x));
        ds.labels.push_back(static_cast<int>(cls));
    }
    ds.mask.assign(params.n, false);
    return ds;
}

Vector apply_trigger(std::span<const double> x, const BackdoorTrigger& trigger) {
    if (trigger.feature_index >= x.size()) throw InvalidArgument("trigger feature index out of range");
    Vector out(x.begin(), x.end());
    out[trigger.feature_index] = trigger.sentinel;
    return out;
}

LabeledDataset inject_backdoor(const LabeledDataset& ds, const BackdoorTrigger& trigger, std::uint64_t seed) {
    ds.validate();
    if (trigger.feature_index >= ds.dim()) throw InvalidArgument("trigger feature index out of range");
    if (!(trigger.fraction >= 0.0 && trigger.fraction <= 1.0)) throw InvalidArgument("fraction must lie in [0, 1]");
    if (!std::isfinite(trigger.sentinel)) throw InvalidArgument("sentinel must be finite");
    if (!ds.features.empty()) {
        double lo = ds.features.front()[trigger.feature_index], hi = lo;
        for (const auto& row : ds.features) {
            lo = std::min(lo, row[trigger.feature_index]);
            hi = std::max(hi, row[trigger.feature_index]);
        }
        if (trigger.sentinel >= lo && trigger.sentinel <= hi)
            throw InvalidArgument("sentinel " + std::to_string(trigger.sentinel) + " lies inside the clean feature range");
    }
    LabeledDataset out = ds;
    for (auto i : choose_rows(ds.size(), rows_for_fraction(trigger.fraction, ds.size()), seed, backdoor_stream)) {
        out.features[i][trigger.feature_index] = trigger.sentinel;
        out.labels[i] = trigger.target_class;
        out.mask[i] = true;
    }
    return out;
}

std::vector<std::size_t> memorization_rows(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("duplicate fraction must lie in (0, 1)");
    const auto k = rows_for_fraction(fraction, n);
    if (fraction * static_cast<double>(n) < 1.0 || k == 0)
        throw InvalidArgument("duplicate fraction " + std::to_string(fraction) + " selects no rows out of " +
                              std::to_string(n));
    return choose_rows(n, k, seed, memorization_stream);
}

LabeledDataset duplicate_for_memorization(const LabeledDataset& ds, double fraction, std::size_t copies,
                                          std::uint64_t seed) {
    ds.validate();
    if (copies < 1) throw InvalidArgument("copies must be at least 1");
    const auto rows = memorization_rows(ds.size(), fraction, seed);
    LabeledDataset out = ds;
    for (auto i : rows) out.mask[i] = true;
    for (std::size_t c = 0; c < copies; ++c) {
        for (auto i : rows) {
            out.features.push_back(ds.features[i]);
            out.labels.push_back(ds.labels[i]);
            out.mask.push_back(true);
        }
    }
    return out;
}

LabeledDataset relocate_to_tail(const LabeledDataset& ds, std::span<const std::size_t> rows, double scale) {
    ds.validate();
    if (!std::isfinite(scale)) throw InvalidArgument("tail scale must be finite");
    if (scale == 1.0) return ds;
    int max_label = 0;
    for (int y : ds.labels) {
        if (y < 0) throw InvalidArgument("labels must be non-negative");
        max_label = std::max(max_label, y);
    }
    std::vector<Vector> centroid(static_cast<std::size_t>(max_label) + 1, Vector(ds.dim(), 0.0));
    std::vector<std::size_t> count(centroid.size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto y = static_cast<std::size_t>(ds.labels[i]);
        ++count[y];
        for (std::size_t k = 0; k < ds.dim(); ++k) centroid[y][k] += ds.features[i][k];
    }
    for (std::size_t c = 0; c < centroid.size(); ++c)
        if (count[c] > 0)
            for (auto& v : centroid[c]) v /= static_cast<double>(count[c]);
    LabeledDataset out = ds;
    for (auto i : rows) {
        if (i >= ds.size()) throw InvalidArgument("row index out of range");
        const auto& c = centroid[static_cast<std::size_t>(ds.labels[i])];
        for (std::size_t k = 0; k < ds.dim(); ++k) out.features[i][k] = c[k] + scale * (ds.features[i][k] - c[k]);
    }
    return out;
}

LabeledDataset inject_memorization(const LabeledDataset& ds, const MemorizationParams& params, std::uint64_t seed) {
    if (!(params.tail_scale >= 1.0)) throw InvalidArgument("tail_scale must be >= 1");
    const auto rows = memorization_rows(ds.size(), params.fraction, seed);
    return duplicate_for_memorization(relocate_to_tail(ds, rows, params.tail_scale), params.fraction, params.copies,
                                      seed);
}

ActivationTrace inject_activation_shift(const ActivationTrace& trace, double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("shift delta must be finite and >= 0");
    ActivationTrace out = trace;
    for (auto& layer : out.layers)
        for (auto& h : layer) h += delta;
    return out;
}

} // namespace rnf
