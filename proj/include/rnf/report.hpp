#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rnf/metrics.hpp"
#include "rnf/residual.hpp"

namespace rnf {

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t clean_count = 0;
    std::size_t tainted_count = 0;

    bool operator==(const HistogramBin&) const = default;
};

// Equal-width bins covering both populations. bin_width <= 0 picks 40 bins over the joint range.
std::vector<HistogramBin> residual_histogram(std::span<const double> clean, std::span<const double> tainted,
                                             double bin_width = 0.0);

// Centers of the most populated clean and tainted bins (first maximum wins).
struct HistogramModes {
    double clean;
    double tainted;
};
HistogramModes histogram_modes(std::span<const HistogramBin> bins);

struct LabeledProfile {
    std::string id;
    ResidualProfile profile;
    bool tainted = false;

    bool operator==(const LabeledProfile&) const = default;
};

struct Report {
    nlohmann::json config = nlohmann::json::object();  // resolved run configuration
    std::vector<EvalResult> results;
    std::vector<LabeledProfile> profiles;
    double bin_width = 0.0;

    bool operator==(const Report&) const = default;
};

enum class ReportFormat { csv, json };
ReportFormat parse_report_format(std::string_view name);

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);

// json: one document with config, results, histogram (over r_max) and profiles.
// csv:  `path` holds one row per result; `<stem>.histogram.csv` and
//       `<stem>.profiles.csv` are written next to it.
void emit_report(const Report& report, const std::filesystem::path& path, ReportFormat format);

std::string results_csv(std::span<const EvalResult> results);
std::string histogram_csv(std::span<const HistogramBin> bins);
// Columns: id, r_1..r_L, r_max, r_mean, r_sum.
std::string profiles_csv(std::span<const std::string> ids, std::span<const ResidualProfile> profiles);

} // namespace rnf
