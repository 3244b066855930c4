#include "citing/rubrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "citing/error.hpp"
#include "citing/random.hpp"

namespace citing {

namespace {

constexpr std::string_view kFormatSuffix =
    "Answer with one block per category, numbered from 1, in exactly this format:\n"
    "Category <number>: <category name>\n"
    "Criteria: <what makes a good or bad response for this category>\n"
    "Members: <comma-separated numbers of the instructions in this category>\n"
    "Assign every instruction to exactly one category.";

std::string one_line(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(c == '\n' || c == '\r' ? ' ' : c);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Drops markdown decoration a chat model tends to add around labels.
std::string strip_decoration(const std::string& line) {
  std::string s = trim(line);
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '#' || s[i] == '*' || s[i] == '>' || s[i] == '_')) ++i;
  s = trim(std::string_view(s).substr(i));
  while (s.size() >= 2 && s.compare(s.size() - 2, 2, "**") == 0) s = trim(std::string_view(s).substr(0, s.size() - 2));
  return s;
}

/// "**Criteria:** text" leaves "** text" after the label; clean that up.
std::string clean_value(std::string v) {
  v = trim(v);
  while (v.size() >= 2 && v.compare(0, 2, "**") == 0) v = trim(std::string_view(v).substr(2));
  while (v.size() >= 2 && v.compare(v.size() - 2, 2, "**") == 0) v = trim(std::string_view(v).substr(0, v.size() - 2));
  return v;
}

struct Line {
  std::size_t offset;
  std::string text;
};

std::vector<Line> split_lines(const std::string& text) {
  std::vector<Line> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    out.push_back({pos, text.substr(pos, nl - pos)});
    if (nl == text.size()) break;
    pos = nl + 1;
  }
  return out;
}

ParseError span_error(const std::string& message, const Line& line) {
  return ParseError(message, line.offset, line.text.size(), trim(line.text));
}

struct Block {
  long number = 0;
  std::string name;
  std::string criteria;
  bool in_criteria = false;
  bool saw_members = false;
  std::vector<std::size_t> members;  // 0-based sample positions
  Line header;
};

void parse_members(const std::string& value, const Line& line, std::size_t sample_size,
                   std::vector<std::size_t>& out) {
  static const std::regex token_re(R"((\d+)\s*(?:-|–|to)\s*(\d+)|(\d+))");
  for (auto it = std::sregex_iterator(value.begin(), value.end(), token_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    long lo = 0;
    long hi = 0;
    try {
      if (m[3].matched) {
        lo = hi = std::stol(m[3].str());
      } else {
        lo = std::stol(m[1].str());
        hi = std::stol(m[2].str());
      }
    } catch (const std::exception&) {
      throw span_error("member ordinal is not a valid number", line);
    }
    if (lo > hi) std::swap(lo, hi);
    if (lo < 1 || hi > static_cast<long>(sample_size)) {
      throw span_error("member ordinal out of range 1.." + std::to_string(sample_size), line);
    }
    for (long v = lo; v <= hi; ++v) out.push_back(static_cast<std::size_t>(v - 1));
  }
}

}  // namespace

const CategoryRubric& RubricSet::category(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= categories.size() || categories[id].category_id != id) {
    throw DataError("unknown category id " + std::to_string(id));
  }
  return categories[static_cast<std::size_t>(id)];
}

void RubricSet::validate() const {
  if (categories.empty()) throw DataError("rubric set has no categories");
  std::unordered_set<std::string> sample(induction_sample_ids.begin(), induction_sample_ids.end());
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto& c = categories[i];
    if (c.category_id != static_cast<int>(i)) throw DataError("category ids must be contiguous from 0");
    if (c.name.empty()) throw DataError("category " + std::to_string(i) + " has no name");
    if (c.criteria.empty()) throw DataError("category " + std::to_string(i) + " has no criteria");
    for (const auto& id : c.exemplar_ids) {
      if (!sample.empty() && !sample.count(id)) {
        throw DataError("exemplar " + id + " of category " + std::to_string(i) + " is not in the induction sample");
      }
      if (!seen.insert(id).second) throw DataError("record " + id + " is an exemplar of two categories");
    }
  }
}

std::vector<InstructionRecord> sample_for_induction(const std::vector<InstructionRecord>& train,
                                                    std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > train.size()) {
    throw DataError("induction sample size " + std::to_string(k) + " out of range 1.." +
                    std::to_string(train.size()));
  }
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  DeterministicRng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<InstructionRecord> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(train[order[i]]);
  return out;
}

std::string build_classification_prompt(std::span<const InstructionRecord> subset,
                                        const ClassificationPromptOptions& options) {
  if (subset.empty()) throw DataError("classification prompt needs at least one instruction");
  std::string out(kClassificationInstruction);
  out += '\n';
  out += kGivenInstructionsLabel;
  out += '\n';
  for (std::size_t i = 0; i < subset.size(); ++i) {
    out += std::to_string(i + 1) + ". " + one_line(subset[i].instruction) + "\n";
  }
  out += '\n';
  out += kFormatSuffix;
  if (options.max_categories_hint) {
    out += "\nUse at most " + std::to_string(*options.max_categories_hint) + " categories.";
  }
  return out;
}

RubricParse parse_rubric_response(const std::string& text, std::span<const std::string> sample_ids) {
  static const std::regex header_re(R"(^category\s*#?\s*(\d+)\s*(?:[:.)\-–]\s*)?(.*)$)", std::regex::icase);
  static const std::regex criteria_re(R"(^criteria\s*[:\-]\s*(.*)$)", std::regex::icase);
  static const std::regex members_re(R"(^members\s*[:\-]\s*(.*)$)", std::regex::icase);

  std::vector<Block> blocks;
  std::vector<Line> member_lines;  // for error spans, aligned with blocks
  for (const auto& line : split_lines(text)) {
    const auto s = strip_decoration(line.text);
    std::smatch m;
    if (std::regex_match(s, m, header_re)) {
      Block b;
      try {
        b.number = std::stol(m[1].str());
      } catch (const std::exception&) {
        throw span_error("category number is not a valid number", line);
      }
      b.name = clean_value(m[2].str());
      b.header = line;
      if (b.name.empty()) throw span_error("category header has no name", line);
      blocks.push_back(std::move(b));
      member_lines.push_back(line);
      continue;
    }
    if (blocks.empty()) continue;
    auto& b = blocks.back();
    if (std::regex_match(s, m, criteria_re)) {
      b.criteria = clean_value(m[1].str());
      b.in_criteria = true;
      continue;
    }
    if (std::regex_match(s, m, members_re)) {
      b.in_criteria = false;
      b.saw_members = true;
      member_lines.back() = line;
      parse_members(m[1].str(), line, sample_ids.size(), b.members);
      continue;
    }
    if (b.in_criteria) {
      const auto t = trim(line.text);
      if (!t.empty()) {
        if (!b.criteria.empty()) b.criteria += '\n';
        b.criteria += t;
      }
    }
  }

  if (blocks.empty()) throw ParseError("zero categories found in teacher output", 0, 0, text.substr(0, 60));

  std::map<long, std::size_t> by_number;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!by_number.emplace(blocks[i].number, i).second) {
      throw span_error("duplicate category number " + std::to_string(blocks[i].number), blocks[i].header);
    }
    if (blocks[i].criteria.empty()) throw span_error("category has no criteria", blocks[i].header);
  }

  RubricParse out;
  out.rubrics.induction_sample_ids.assign(sample_ids.begin(), sample_ids.end());
  out.rubrics.raw_teacher_output = text;
  std::vector<int> owner(sample_ids.size(), -1);
  for (const auto& [number, index] : by_number) {
    const auto& b = blocks[index];
    CategoryRubric c;
    c.category_id = static_cast<int>(out.rubrics.categories.size());
    c.name = b.name;
    c.criteria = b.criteria;
    std::vector<std::size_t> members = b.members;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    for (auto pos : members) {
      if (owner[pos] >= 0) {
        throw span_error("instruction " + std::to_string(pos + 1) + " is listed in two categories",
                         member_lines[index]);
      }
      owner[pos] = c.category_id;
      c.exemplar_ids.push_back(sample_ids[pos]);
    }
    out.rubrics.categories.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    if (owner[i] < 0) out.unassigned_ids.push_back(sample_ids[i]);
  }
  return out;
}

InductionResult induce_rubrics(const ChatProvider& teacher, std::span<const InstructionRecord> subset,
                               int retries, const InductionOptions& options) {
  std::vector<std::string> ids;
  ids.reserve(subset.size());
  for (const auto& r : subset) ids.push_back(r.id);

  ChatRequest request = ChatRequest::single_turn(
      options.model, build_classification_prompt(subset, options.prompt), options.temperature,
      options.max_new_tokens);
  InductionResult result;
  std::string last_raw;
  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    last_raw = teacher.chat(request);
    ++result.teacher_calls;
    try {
      auto parsed = parse_rubric_response(last_raw, ids);
      parsed.rubrics.teacher_model = options.model;
      result.rubrics = std::move(parsed.rubrics);
      result.unassigned_ids = std::move(parsed.unassigned_ids);
      return result;
    } catch (const ParseError& e) {
      last_error = e.what();
    }
    request.messages.push_back({Role::Assistant, last_raw});
    request.messages.push_back(
        {Role::User, "Your answer could not be parsed (" + last_error +
                         "). Answer again for the same instructions.\n" + std::string(kFormatSuffix)});
  }
  throw PipelineError("rubric induction failed after " + std::to_string(result.teacher_calls) +
                      " teacher calls: " + last_error + "\nlast teacher output:\n" + last_raw);
}

Json rubrics_to_json(const RubricSet& r) {
  Json j;
  j["teacher_model"] = r.teacher_model;
  j["induction_sample_ids"] = r.induction_sample_ids;
  Json cats = Json::array();
  for (const auto& c : r.categories) {
    cats.push_back(Json{{"category_id", c.category_id},
                        {"name", c.name},
                        {"criteria", c.criteria},
                        {"exemplar_ids", c.exemplar_ids}});
  }
  j["categories"] = std::move(cats);
  j["raw_teacher_output"] = r.raw_teacher_output;
  return j;
}

RubricSet rubrics_from_json(const Json& j) {
  RubricSet r;
  try {
    r.teacher_model = j.value("teacher_model", std::string());
    r.induction_sample_ids = j.value("induction_sample_ids", std::vector<std::string>{});
    r.raw_teacher_output = j.value("raw_teacher_output", std::string());
    for (const auto& c : j.at("categories")) {
      CategoryRubric cat;
      cat.category_id = c.at("category_id").get<int>();
      cat.name = c.at("name").get<std::string>();
      cat.criteria = c.at("criteria").get<std::string>();
      cat.exemplar_ids = c.value("exemplar_ids", std::vector<std::string>{});
      r.categories.push_back(std::move(cat));
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed rubric file: ") + e.what());
  }
  std::sort(r.categories.begin(), r.categories.end(),
            [](const auto& a, const auto& b) { return a.category_id < b.category_id; });
  r.validate();
  return r;
}

void save_rubrics(const std::filesystem::path& path, const RubricSet& rubrics) {
  rubrics.validate();
  write_json_file(path, rubrics_to_json(rubrics));
}

RubricSet load_rubrics(const std::filesystem::path& path) { return rubrics_from_json(read_json_file(path)); }

}  // namespace citing
