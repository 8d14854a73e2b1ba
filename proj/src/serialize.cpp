#include "rnf/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rnf/errors.hpp"

namespace rnf {

namespace {

void expect_format(const json& j, std::string_view format, int version) {
    if (!j.is_object() || j.value("format", std::string()) != format)
        throw IoError("document is not a '" + std::string(format) + "' file");
    const int v = j.value("version", -1);
    if (v != version)
        throw IoError("unsupported " + std::string(format) + " version " + std::to_string(v) + " (expected " +
                      std::to_string(version) + ")");
}

template <class F>
auto parse_guard(std::string_view what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw IoError("malformed " + std::string(what) + ": " + e.what());
    }
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw IoError("not a number: '" + std::string(text) + "'");
    return v;
}

json network_to_json(const NetworkSpec& net) {
    json layers = json::array();
    for (const auto& layer : net.layers()) {
        json rows = json::array();
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < layer.in_dim; ++c) row.push_back(layer.weight(r, c));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"activation", std::string(to_string(layer.activation))},
                          {"bias", layer.bias},
                          {"weights", std::move(rows)}});
    }
    return {{"format", "rnf-model"},
            {"version", model_format_version},
            {"input_dim", net.input_dim()},
            {"lipschitz_bound", net.lipschitz_bound()},
            {"layers", std::move(layers)}};
}

NetworkSpec network_from_json(const json& j) {
    expect_format(j, "rnf-model", model_format_version);
    return parse_guard("model", [&] {
        const auto input_dim = j.at("input_dim").get<std::size_t>();
        std::vector<LayerSpec> layers;
        std::size_t width = input_dim;
        for (const auto& jl : j.at("layers")) {
            const auto& rows = jl.at("weights");
            LayerSpec layer;
            layer.in_dim = width;
            layer.out_dim = rows.size();
            layer.activation = parse_activation(jl.at("activation").get<std::string>());
            layer.bias = jl.at("bias").get<std::vector<double>>();
            for (const auto& row : rows) {
                if (row.size() != width) throw ShapeError("weight row width does not match the previous layer");
                for (const auto& w : row) layer.weights.push_back(w.get<double>());
            }
            width = layer.out_dim;
            layers.push_back(std::move(layer));
        }
        NetworkSpec net(input_dim, std::move(layers));
        if (j.contains("lipschitz_bound")) {
            const double stored = j.at("lipschitz_bound").get<double>();
            if (stored < net.lipschitz_bound() * (1.0 - 1e-12))
                throw IoError("stored lipschitz_bound is below the bound implied by the weights");
        }
        return net;
    });
}

json quant_to_json(const QuantConfig& cfg) {
    json layers = json::array();
    for (const auto& l : cfg.layers)
        layers.push_back({{"half_step", l.half_step}, {"clamp_lo", l.clamp_lo}, {"clamp_hi", l.clamp_hi}});
    return {{"version", quant_format_version},
            {"bits", cfg.bits},
            {"quantize_weights", cfg.quantize_weights},
            {"layers", std::move(layers)}};
}

QuantConfig quant_from_json(const json& j, std::size_t depth) {
    return parse_guard("quantization section", [&] {
        if (j.value("version", -1) != quant_format_version) throw IoError("unsupported quantization section version");
        QuantConfig cfg;
        cfg.bits = j.at("bits").get<int>();
        cfg.quantize_weights = j.value("quantize_weights", true);
        for (const auto& l : j.at("layers"))
            cfg.layers.push_back({l.at("half_step").get<double>(), l.at("clamp_lo").get<double>(),
                                  l.at("clamp_hi").get<double>()});
        validate_quant_config(cfg, depth);
        return cfg;
    });
}

void save_model(const std::filesystem::path& path, const NetworkSpec& net, const std::optional<QuantConfig>& quant) {
    json j = network_to_json(net);
    if (quant) {
        validate_quant_config(*quant, net.depth());
        j["quantization"] = quant_to_json(*quant);
    }
    write_json_file(path, j);
}

ModelFile load_model(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    auto net = network_from_json(j);
    std::optional<QuantConfig> quant;
    if (j.contains("quantization")) quant = quant_from_json(j.at("quantization"), net.depth());
    return {std::move(net), std::move(quant)};
}

std::string model_hash(const NetworkSpec& net, const QuantConfig& quant) {
    json j = network_to_json(net);
    j["quantization"] = quant_to_json(quant);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

std::string model_hash(const QuantizedNetwork& qnet) { return model_hash(qnet.network(), qnet.config()); }

json calibration_to_json(const CalibrationSummary& s) {
    json j = {{"format", "rnf-calibration"},
              {"version", calibration_format_version},
              {"method", std::string(to_string(s.method))},
              {"alpha", s.alpha},
              {"n", s.n},
              {"mu_hat", s.mu_hat},
              {"sigma_hat", s.sigma_hat},
              {"thresholds", s.thresholds},
              {"tau_max", s.tau_max},
              {"provenance",
               {{"model_hash", s.provenance.model_hash},
                {"seed", s.provenance.seed},
                {"timestamp", s.provenance.timestamp}}}};
    j["delta"] = s.delta ? json(*s.delta) : json(nullptr);
    if (s.logistic)
        j["logistic"] = {{"theta", s.logistic->theta}, {"score_threshold", s.logistic->score_threshold}};
    return j;
}

CalibrationSummary calibration_from_json(const json& j) {
    expect_format(j, "rnf-calibration", calibration_format_version);
    return parse_guard("calibration", [&] {
        CalibrationSummary s;
        s.method = parse_calibration_method(j.at("method").get<std::string>());
        s.alpha = j.at("alpha").get<double>();
        s.n = j.at("n").get<std::size_t>();
        if (j.contains("delta") && !j.at("delta").is_null()) s.delta = j.at("delta").get<double>();
        s.mu_hat = j.at("mu_hat").get<Vector>();
        s.sigma_hat = j.at("sigma_hat").get<Vector>();
        s.thresholds = j.at("thresholds").get<Vector>();
        s.tau_max = j.at("tau_max").get<double>();
        if (j.contains("logistic"))
            s.logistic = LogisticCalibration{j.at("logistic").at("theta").get<Vector>(),
                                             j.at("logistic").at("score_threshold").get<double>()};
        const auto& p = j.at("provenance");
        s.provenance = {p.at("model_hash").get<std::string>(), p.at("seed").get<std::uint64_t>(),
                        p.value("timestamp", std::string())};
        if (s.mu_hat.size() != s.thresholds.size() || s.sigma_hat.size() != s.thresholds.size())
            throw IoError("calibration vectors have inconsistent lengths");
        for (double t : s.thresholds)
            if (!std::isfinite(t) || t < 0.0) throw IoError("calibration thresholds must be finite and >= 0");
        if (s.method == CalibrationMethod::logistic && !s.logistic) throw IoError("logistic calibration without theta");
        return s;
    });
}

void save_calibration(const std::filesystem::path& path, const CalibrationSummary& s) {
    write_json_file(path, calibration_to_json(s));
}

CalibrationSummary load_calibration(const std::filesystem::path& path) {
    return calibration_from_json(read_json_file(path));
}

json scenario_to_json(const ScenarioConfig& c) {
    return {{"format", "rnf-scenario"},
            {"version", scenario_format_version},
            {"kind", std::string(to_string(c.kind))},
            {"seed", c.seed},
            {"dataset",
             {{"n", c.data.n},
              {"dim", c.data.dim},
              {"classes", c.data.classes},
              {"spread", c.data.spread},
              {"center_scale", c.data.center_scale}}},
            {"backdoor",
             {{"feature_index", c.backdoor.feature_index},
              {"sentinel", c.backdoor.sentinel},
              {"target_class", c.backdoor.target_class},
              {"fraction", c.backdoor.fraction}}},
            {"memorization",
             {{"fraction", c.memorization.fraction},
              {"copies", c.memorization.copies},
              {"tail_scale", c.memorization.tail_scale}}},
            {"mean_shift", {{"delta", c.shift_delta}}}};
}

ScenarioConfig scenario_from_json(const json& j) {
    expect_format(j, "rnf-scenario", scenario_format_version);
    return parse_guard("scenario", [&] {
        ScenarioConfig c = default_scenario(parse_scenario_kind(j.at("kind").get<std::string>()));
        c.seed = j.value("seed", c.seed);
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.data.n = d.value("n", c.data.n);
            c.data.dim = d.value("dim", c.data.dim);
            c.data.classes = d.value("classes", c.data.classes);
            c.data.spread = d.value("spread", c.data.spread);
            c.data.center_scale = d.value("center_scale", c.data.center_scale);
        }
        if (j.contains("backdoor")) {
            const auto& b = j.at("backdoor");
            c.backdoor.feature_index = b.value("feature_index", c.backdoor.feature_index);
            c.backdoor.sentinel = b.value("sentinel", c.backdoor.sentinel);
            c.backdoor.target_class = b.value("target_class", c.backdoor.target_class);
            c.backdoor.fraction = b.value("fraction", c.backdoor.fraction);
        }
        if (j.contains("memorization")) {
            const auto& m = j.at("memorization");
            c.memorization.fraction = m.value("fraction", c.memorization.fraction);
            c.memorization.copies = m.value("copies", c.memorization.copies);
            c.memorization.tail_scale = m.value("tail_scale", c.memorization.tail_scale);
        }
        if (j.contains("mean_shift")) c.shift_delta = j.at("mean_shift").value("delta", c.shift_delta);
        c.validate();
        return c;
    });
}

std::string dataset_to_csv(const LabeledDataset& ds) {
    ds.validate();
    std::string out = "id,label,mask";
    for (std::size_t k = 0; k < ds.dim(); ++k) out += ",x" + std::to_string(k);
    out += '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += std::to_string(i) + ',' + std::to_string(ds.labels[i]) + ',' + (ds.mask[i] ? '1' : '0');
        for (double v : ds.features[i]) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

LabeledDataset dataset_from_csv(std::string_view text) {
    LabeledDataset ds;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        auto line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        for (std::size_t start = 0;;) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (line_no == 1) {
            if (cells.size() < 3 || cells[0] != "id" || cells[1] != "label" || cells[2] != "mask")
                throw IoError("dataset CSV must start with header id,label,mask,x0,...");
            columns = cells.size();
            continue;
        }
        if (cells.size() != columns) throw IoError("dataset CSV line " + std::to_string(line_no) + " has wrong width");
        ds.labels.push_back(static_cast<int>(parse_double(cells[1])));
        if (cells[2] != "0" && cells[2] != "1") throw IoError("mask column must be 0 or 1");
        ds.mask.push_back(cells[2] == "1");
        Vector row;
        for (std::size_t k = 3; k < cells.size(); ++k) row.push_back(parse_double(cells[k]));
        ds.features.push_back(std::move(row));
    }
    if (line_no == 0) throw IoError("dataset CSV is empty");
    return ds;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) { write_text_file(path, dataset_to_csv(ds)); }

LabeledDataset load_dataset(const std::filesystem::path& path) { return dataset_from_csv(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("failed writing '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move output into '" + path.string() + "': " + ec.message());
}

json read_json_file(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

} // namespace rnf
