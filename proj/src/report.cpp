#include "rnf/report.hpp"

#include <algorithm>
#include <cmath>

#include "rnf/errors.hpp"
#include "rnf/serialize.hpp"

namespace rnf {

std::vector<HistogramBin> residual_histogram(std::span<const double> clean, std::span<const double> tainted,
                                             double bin_width) {
    if (clean.empty() && tainted.empty()) return {};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto pop : {clean, tainted})
        for (double v : pop) {
            if (!std::isfinite(v)) throw InvalidArgument("histogram values must be finite");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(bin_width > 0.0)) bin_width = hi > lo ? (hi - lo) / 40.0 : 1.0;
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor((hi - lo) / bin_width)) + 1);
    std::vector<HistogramBin> bins(count);
    for (std::size_t b = 0; b < count; ++b) {
        bins[b].lo = lo + bin_width * static_cast<double>(b);
        bins[b].hi = lo + bin_width * static_cast<double>(b + 1);
    }
    auto slot = [&](double v) {
        return std::min(count - 1, static_cast<std::size_t>(std::floor((v - lo) / bin_width)));
    };
    for (double v : clean) ++bins[slot(v)].clean_count;
    for (double v : tainted) ++bins[slot(v)].tainted_count;
    return bins;
}

HistogramModes histogram_modes(std::span<const HistogramBin> bins) {
    if (bins.empty()) throw InvalidArgument("histogram has no bins");
    auto clean = std::max_element(bins.begin(), bins.end(),
                                  [](const auto& a, const auto& b) { return a.clean_count < b.clean_count; });
    auto tainted = std::max_element(bins.begin(), bins.end(),
                                    [](const auto& a, const auto& b) { return a.tainted_count < b.tainted_count; });
    return {0.5 * (clean->lo + clean->hi), 0.5 * (tainted->lo + tainted->hi)};
}

ReportFormat parse_report_format(std::string_view name) {
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    throw InvalidArgument("unknown report format '" + std::string(name) + "'");
}

namespace {

using nlohmann::json;

json result_to_json(const EvalResult& r) {
    json roc = json::array();
    for (const auto& p : r.roc)
        roc.push_back({std::isinf(p.threshold) ? json("inf") : json(p.threshold), p.fpr, p.tpr});
    json meta = json::array();
    for (const auto& [k, v] : r.metadata) meta.push_back({k, v});
    return {{"accuracy", r.accuracy},
            {"macro_f1", r.macro_f1},
            {"roc_auc", r.roc_auc},
            {"confusion", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
            {"roc", std::move(roc)},
            {"metadata", std::move(meta)}};
}

EvalResult result_from_json(const json& j) {
    EvalResult r;
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.roc_auc = j.at("roc_auc").get<double>();
    const auto& c = j.at("confusion");
    r.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                c.at("fn").get<std::size_t>()};
    for (const auto& p : j.at("roc")) {
        const double t = p.at(0).is_string() ? std::numeric_limits<double>::infinity() : p.at(0).get<double>();
        r.roc.push_back({t, p.at(1).get<double>(), p.at(2).get<double>()});
    }
    for (const auto& m : j.at("metadata")) r.metadata.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    return r;
}

std::vector<double> r_max_of(const std::vector<LabeledProfile>& profiles, bool tainted) {
    std::vector<double> out;
    for (const auto& p : profiles)
        if (p.tainted == tainted) out.push_back(p.profile.r_max);
    return out;
}

std::vector<HistogramBin> report_histogram(const Report& report) {
    return residual_histogram(r_max_of(report.profiles, false), r_max_of(report.profiles, true), report.bin_width);
}

} // namespace

nlohmann::json report_to_json(const Report& report) {
    json results = json::array();
    for (const auto& r : report.results) results.push_back(result_to_json(r));
    json bins = json::array();
    for (const auto& b : report_histogram(report))
        bins.push_back({{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"clean_count", b.clean_count},
                        {"tainted_count", b.tainted_count}});
    json profiles = json::array();
    for (const auto& p : report.profiles)
        profiles.push_back({{"id", p.id}, {"tainted", p.tainted}, {"residuals", p.profile.per_layer}});
    return {{"format", "rnf-report"},
            {"version", 1},
            {"config", report.config},
            {"results", std::move(results)},
            {"histogram", {{"bin_width", report.bin_width}, {"bins", std::move(bins)}}},
            {"profiles", std::move(profiles)}};
}

Report report_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string()) != "rnf-report") throw IoError("document is not an rnf-report");
        Report r;
        r.config = j.at("config");
        for (const auto& x : j.at("results")) r.results.push_back(result_from_json(x));
        r.bin_width = j.at("histogram").at("bin_width").get<double>();
        for (const auto& p : j.at("profiles"))
            r.profiles.push_back({p.at("id").get<std::string>(), make_profile(p.at("residuals").get<Vector>()),
                                  p.at("tainted").get<bool>()});
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed report: ") + e.what());
    }
}

std::string results_csv(std::span<const EvalResult> results) {
    std::string out = "index,accuracy,macro_f1,roc_auc,tp,fp,tn,fn,metadata\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        std::string meta;
        for (const auto& [k, v] : r.metadata) meta += (meta.empty() ? "" : ";") + k + "=" + v;
        out += std::to_string(i) + ',' + format_double(r.accuracy) + ',' + format_double(r.macro_f1) + ',' +
               format_double(r.roc_auc) + ',' + std::to_string(r.counts.tp) + ',' + std::to_string(r.counts.fp) + ',' +
               std::to_string(r.counts.tn) + ',' + std::to_string(r.counts.fn) + ',' + meta + '\n';
    }
    return out;
}

std::string histogram_csv(std::span<const HistogramBin> bins) {
    std::string out = "bin_lo,bin_hi,clean_count,tainted_count\n";
    for (const auto& b : bins)
        out += format_double(b.lo) + ',' + format_double(b.hi) + ',' + std::to_string(b.clean_count) + ',' +
               std::to_string(b.tainted_count) + '\n';
    return out;
}

std::string profiles_csv(std::span<const std::string> ids, std::span<const ResidualProfile> profiles) {
    if (ids.size() != profiles.size()) throw ShapeError("ids and profiles differ in length");
    const std::size_t depth = profiles.empty() ? 0 : profiles.front().depth();
    std::string out = "id";
    for (std::size_t l = 1; l <= depth; ++l) out += ",r_" + std::to_string(l);
    out += ",r_max,r_mean,r_sum\n";
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].depth() != depth) throw ShapeError("profiles have inconsistent depth");
        out += ids[i];
        for (double r : profiles[i].per_layer) out += ',' + format_double(r);
        out += ',' + format_double(profiles[i].r_max) + ',' + format_double(profiles[i].r_mean) + ',' +
               format_double(profiles[i].r_sum) + '\n';
    }
    return out;
}

void emit_report(const Report& report, const std::filesystem::path& path, ReportFormat format) {
    if (format == ReportFormat::json) {
        write_json_file(path, report_to_json(report));
        return;
    }
    write_text_file(path, results_csv(report.results));
    auto sibling = [&](const char* suffix) {
        auto p = path;
        p.replace_filename(path.stem().string() + suffix);
        return p;
    };
    write_text_file(sibling(".histogram.csv"), histogram_csv(report_histogram(report)));
    std::vector<std::string> ids;
    std::vector<ResidualProfile> profiles;
    for (const auto& p : report.profiles) {
        ids.push_back(p.id);
        profiles.push_back(p.profile);
    }
    write_text_file(sibling(".profiles.csv"), profiles_csv(ids, profiles));
}

} // namespace rnf
