#pragma once

#include <string>

#include <json.hpp>

namespace ag {

/// Serialize with sorted keys and every double printed as %.17g, so that a
/// given document has exactly one byte representation on every platform.
std::string canonical_json(const nlohmann::json& j);

std::string format_double(double v);

std::string read_file(const std::string& path);

/// Write via a temp file + rename so partial output is never observable.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace ag
