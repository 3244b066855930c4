#include "citing/records.hpp"

#include <unordered_set>

#include "citing/error.hpp"

namespace citing {

namespace fs = std::filesystem;

namespace {

std::string padded_ordinal(std::size_t n, std::size_t width) {
  auto s = std::to_string(n);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::optional<std::string> optional_string(const Json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw DataError("entry " + std::to_string(index) + ": field \"" + key + "\" is not a string");
  }
  return it->get<std::string>();
}

std::string id_from_json(const Json& v, std::size_t index) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw DataError("entry " + std::to_string(index) + ": field \"id\" must be a string or integer");
}

}  // namespace

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "alpaca-json") return DatasetFormat::AlpacaJson;
  if (name == "records-jsonl") return DatasetFormat::RecordsJsonl;
  throw DataError("unknown dataset format \"" + name + "\"");
}

std::string to_string(DatasetFormat format) {
  return format == DatasetFormat::AlpacaJson ? "alpaca-json" : "records-jsonl";
}

Json record_to_json(const InstructionRecord& r) {
  Json j;
  j["id"] = r.id;
  j["instruction"] = r.instruction;
  if (r.context) j["context"] = *r.context;
  if (r.reference_response) j["reference_response"] = *r.reference_response;
  if (r.category_id) j["category_id"] = *r.category_id;
  if (r.criteria) j["criteria"] = *r.criteria;
  if (r.source) j["source"] = *r.source;
  return j;
}

InstructionRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  InstructionRecord r;
  auto id = j.find("id");
  if (id == j.end()) throw DataError("record missing \"id\"");
  r.id = id_from_json(*id, 0);
  auto instr = j.find("instruction");
  if (instr == j.end() || !instr->is_string()) {
    throw DataError("record " + r.id + " missing \"instruction\"");
  }
  r.instruction = instr->get<std::string>();
  r.context = optional_string(j, "context", 0);
  r.reference_response = optional_string(j, "reference_response", 0);
  r.criteria = optional_string(j, "criteria", 0);
  r.source = optional_string(j, "source", 0);
  if (auto c = j.find("category_id"); c != j.end() && !c->is_null()) {
    if (!c->is_number_integer()) throw DataError("record " + r.id + ": category_id not an integer");
    r.category_id = c->get<int>();
  }
  return r;
}

std::vector<InstructionRecord> load_instruction_dataset(const fs::path& path, DatasetFormat format,
                                                        const LoadOptions& options) {
  std::vector<Json> entries;
  if (format == DatasetFormat::AlpacaJson) {
    auto doc = read_json_file(path);
    if (!doc.is_array()) throw DataError(path.string() + ": expected a JSON array of entries");
    entries.assign(doc.begin(), doc.end());
  } else {
    entries = read_jsonl_file(path);
  }

  std::vector<InstructionRecord> out;
  out.reserve(entries.size());
  std::unordered_set<std::string> explicit_ids;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    auto fail = [&](const std::string& why) -> DataError {
      return DataError(path.string() + ": entry " + std::to_string(i) + ": " + why);
    };
    if (!e.is_object()) throw fail("not a JSON object");
    auto instr = e.find("instruction");
    if (instr == e.end() || instr->is_null()) throw fail("missing \"instruction\"");
    if (!instr->is_string()) throw fail("\"instruction\" is not a string");

    InstructionRecord r;
    try {
      r.instruction = instr->get<std::string>();
      if (r.instruction.empty()) throw fail("empty \"instruction\"");
      if (auto id = e.find("id"); id != e.end() && !id->is_null()) {
        r.id = id_from_json(*id, i);
        if (!explicit_ids.insert(r.id).second) throw fail("duplicate id \"" + r.id + "\"");
      } else {
        r.id = padded_ordinal(options.ordinal_offset + i, options.id_width);
      }
      if (format == DatasetFormat::AlpacaJson) {
        r.context = optional_string(e, "input", i);
        if (r.context && r.context->empty()) r.context.reset();
        r.reference_response = optional_string(e, "output", i);
      } else {
        r.context = optional_string(e, "context", i);
        r.reference_response = optional_string(e, "reference_response", i);
        r.criteria = optional_string(e, "criteria", i);
        r.source = optional_string(e, "source", i);
        if (auto c = e.find("category_id"); c != e.end() && !c->is_null()) {
          if (!c->is_number_integer()) throw fail("\"category_id\" is not an integer");
          r.category_id = c->get<int>();
        }
        if (r.category_id.has_value() != r.criteria.has_value()) {
          throw fail("category_id and criteria must be present together");
        }
      }
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& ex) {
      throw fail(ex.what());
    }
    if (options.source_label && !r.source) r.source = options.source_label;
    out.push_back(std::move(r));
  }
  return out;
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
  auto doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("files") || !doc["files"].is_array()) {
    throw DataError(path.string() + ": manifest must be an object with a \"files\" array");
  }
  DatasetManifest m;
  m.name = doc.value("name", path.stem().string());
  m.format = parse_dataset_format(doc.value("format", std::string("alpaca-json")));
  const auto base = path.parent_path();
  for (const auto& f : doc["files"]) {
    if (!f.is_string()) throw DataError(path.string() + ": manifest file entries must be strings");
    fs::path p = f.get<std::string>();
    m.files.push_back(p.is_absolute() ? p : base / p);
  }
  return m;
}

std::vector<InstructionRecord> load_manifest_records(const DatasetManifest& manifest) {
  std::vector<InstructionRecord> all;
  const bool tag = manifest.files.size() > 1;
  for (const auto& file : manifest.files) {
    LoadOptions opts;
    opts.ordinal_offset = all.size();
    if (tag) opts.source_label = file.stem().string();
    auto part = load_instruction_dataset(file, manifest.format, opts);
    for (auto& r : part) all.push_back(std::move(r));
  }
  validate_records(all);
  return all;
}

std::vector<InstructionRecord> load_dataset_any(const fs::path& path) {
  if (path.extension() == ".jsonl") {
    auto records = load_instruction_dataset(path, DatasetFormat::RecordsJsonl);
    validate_records(records);
    return records;
  }
  auto doc = read_json_file(path);
  if (doc.is_object()) return load_manifest_records(load_dataset_manifest(path));
  auto records = load_instruction_dataset(path, DatasetFormat::AlpacaJson);
  validate_records(records);
  return records;
}

void save_records_jsonl(const fs::path& path, const std::vector<InstructionRecord>& records) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(record_to_json(r));
  write_jsonl_file(path, lines);
}

void validate_records(const std::vector<InstructionRecord>& records) {
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw DataError("duplicate record id \"" + r.id + "\"");
    if (r.instruction.empty()) throw DataError("record " + r.id + " has an empty instruction");
    if (r.category_id.has_value() != r.criteria.has_value()) {
      throw DataError("record " + r.id + ": category_id and criteria must be present together");
    }
  }
}

}  // namespace citing
