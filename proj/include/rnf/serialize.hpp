#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rnf/calibrate.hpp"
#include "rnf/net.hpp"
#include "rnf/quantizer.hpp"
#include "rnf/scenarios.hpp"

namespace rnf {

using json = nlohmann::json;

inline constexpr int model_format_version = 1;
inline constexpr int quant_format_version = 1;
inline constexpr int calibration_format_version = 1;
inline constexpr int scenario_format_version = 1;

// Model document: input_dim, lipschitz_bound, layers (weights as rows, bias,
// activation name) and an optional "quantization" section.
json network_to_json(const NetworkSpec& net);
NetworkSpec network_from_json(const json& j);
json quant_to_json(const QuantConfig& cfg);
QuantConfig quant_from_json(const json& j, std::size_t depth);

struct ModelFile {
    NetworkSpec network;
    std::optional<QuantConfig> quant;
};

void save_model(const std::filesystem::path& path, const NetworkSpec& net, const std::optional<QuantConfig>& quant = {});
ModelFile load_model(const std::filesystem::path& path);

// 64-bit FNV-1a over the canonical model document (network plus quantization), hex encoded.
std::string model_hash(const NetworkSpec& net, const QuantConfig& quant);
std::string model_hash(const QuantizedNetwork& qnet);

json calibration_to_json(const CalibrationSummary& s);
CalibrationSummary calibration_from_json(const json& j);
void save_calibration(const std::filesystem::path& path, const CalibrationSummary& s);
CalibrationSummary load_calibration(const std::filesystem::path& path);

json scenario_to_json(const ScenarioConfig& c);
ScenarioConfig scenario_from_json(const json& j);

// CSV columns: id,label,mask,x0..x{dim-1}. Doubles use shortest round-trip form.
std::string dataset_to_csv(const LabeledDataset& ds);
LabeledDataset dataset_from_csv(std::string_view text);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see partial output.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

std::uint64_t fnv1a64(std::string_view bytes);

} // namespace rnf
