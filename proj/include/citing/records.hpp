#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "citing/json_io.hpp"

namespace citing {

/// One instruction with its optional reference answer and assigned criteria.
/// `criteria` is present exactly when `category_id` is.
struct InstructionRecord {
  std::string id;
  std::string instruction;
  std::optional<std::string> context;
  std::optional<std::string> reference_response;
  std::optional<int> category_id;
  std::optional<std::string> criteria;
  /// Constituent file label when loaded through a multi-file manifest.
  std::optional<std::string> source;

  bool operator==(const InstructionRecord&) const = default;
};

enum class DatasetFormat { AlpacaJson, RecordsJsonl };

DatasetFormat parse_dataset_format(const std::string& name);
std::string to_string(DatasetFormat format);

struct LoadOptions {
  /// First ordinal used for generated ids.
  std::size_t ordinal_offset = 0;
  /// Width used when zero-padding generated ids.
  std::size_t id_width = 6;
  std::optional<std::string> source_label;
};

std::vector<InstructionRecord> load_instruction_dataset(const std::filesystem::path& path,
                                                        DatasetFormat format,
                                                        const LoadOptions& options = {});

struct DatasetManifest {
  std::string name;
  std::vector<std::filesystem::path> files;
  DatasetFormat format = DatasetFormat::AlpacaJson;
};

/// Relative file paths resolve against the manifest's directory.
DatasetManifest load_dataset_manifest(const std::filesystem::path& path);

/// Concatenates the manifest's files in order. With more than one file every
/// record is tagged with the file stem as its source label.
std::vector<InstructionRecord> load_manifest_records(const DatasetManifest& manifest);

/// Accepts a manifest, an Alpaca JSON array, or a records-jsonl file.
std::vector<InstructionRecord> load_dataset_any(const std::filesystem::path& path);

Json record_to_json(const InstructionRecord& record);
InstructionRecord record_from_json(const Json& j);

void save_records_jsonl(const std::filesystem::path& path,
                        const std::vector<InstructionRecord>& records);

/// Throws DataError when ids repeat or a record breaks its invariants.
void validate_records(const std::vector<InstructionRecord>& records);

}  // namespace citing
