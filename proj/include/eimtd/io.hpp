#pragma once

#include <string>

#include <json.hpp>

#include "eimtd/tensor.hpp"

namespace eimtd {

using json = nlohmann::json;

// printf("%.17g"): enough digits to round-trip any finite double.
std::string format_double(double v);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
json read_json(const std::string& path);
void write_json(const std::string& path, const json& doc);

// {"input_dim", "num_classes", "layers": [{"activation", "weights": [[...]], "bias": [...]}]}
json model_to_json(const DenseNet& net);
DenseNet model_from_json(const json& doc);
void save_model(const std::string& path, const DenseNet& net, const std::string& config_hash = {});
DenseNet load_model(const std::string& path);

// FNV-1a over the canonical (key-sorted, compact) dump, as 16 hex digits.
std::string config_hash(const json& config);

}  // namespace eimtd
