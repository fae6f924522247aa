#pragma once

#include <string>

#include "fact/model.hpp"

namespace fact {

// Self-describing structured-text model dump: format-version header, layer
// spec, and flat parameter arrays per partition.
inline constexpr int kSnapshotFormatVersion = 1;

std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(const std::string& text);  // throws FormatError

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace fact
