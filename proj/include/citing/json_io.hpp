#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace citing {

using Json = nlohmann::ordered_json;

Json read_json_file(const std::filesystem::path& path);

/// Reads one JSON value per non-blank line. Errors name the 1-based line.
std::vector<Json> read_jsonl_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames over the target, so readers
/// never see a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

void write_json_file(const std::filesystem::path& path, const Json& value);
void write_jsonl_file(const std::filesystem::path& path, const std::vector<Json>& lines);

std::string read_text_file(const std::filesystem::path& path);

/// Compact single-line dump used for every line-per-record format.
std::string dump_line(const Json& value);

/// Shortest round-trip decimal form with a compact exponent ("1e-5", "0.7", "512").
std::string format_number(double value);

}  // namespace citing
