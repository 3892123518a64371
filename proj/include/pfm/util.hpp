#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace pfm {

using json = nlohmann::json;

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);

std::string read_file(const std::string& path);

// Write via temp file + rename so readers never observe partial content.
void atomic_write_file(const std::string& path, const std::string& content);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

std::string sha256_file(const std::string& path);

void write_json(const std::string& path, const json& j);
json load_json(const std::string& path);

}  // namespace pfm
