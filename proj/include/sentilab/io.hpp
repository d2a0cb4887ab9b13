#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sentilab {

using Json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const fs::path& path, std::string_view contents);

void append_line(const fs::path& path, std::string_view line);

std::vector<std::string> read_lines(const fs::path& path);

// One JSON object per non-empty line.
std::vector<Json> read_jsonl(const fs::path& path);
void write_jsonl_atomic(const fs::path& path, const std::vector<Json>& rows);

Json read_json(const fs::path& path);

// UTC, millisecond precision: 2024-05-01T12:00:00.123Z
std::string now_iso8601();

std::uint64_t fnv1a(std::string_view bytes);

// Fixed-point rendering used in reports; avoids locale-dependent output.
std::string format_fixed(double value, int decimals);

}  // namespace sentilab
