#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citing/json_io.hpp"
#include "citing/providers/provider.hpp"

namespace citing {

enum class Metric { Articulate, InDepth, Comprehensive };
std::string to_string(Metric metric);
/// Accepts "articulate", "in_depth" (or "in-depth") and "comprehensive".
Metric parse_metric(const std::string& name);
std::vector<Metric> parse_metric_list(const std::string& comma_separated);

struct MetricDefinition {
  std::string_view display_name;
  std::string_view definition;
  std::array<std::string_view, 3> criteria;
};
const MetricDefinition& metric_definition(Metric metric);

enum class Outcome { Win, Tie, Lose };
enum class PresentedOrder { AB, BA };
std::string to_string(Outcome outcome);
std::string to_string(PresentedOrder order);
Outcome parse_outcome(const std::string& name);
PresentedOrder parse_presented_order(const std::string& name);

std::string build_judge_prompt(const std::string& instruction, const std::string& response_1,
                               const std::string& response_2, Metric metric);

/// The last token that reads 1, 2 or tie decides; with order BA a "1" is a
/// vote for system B. Throws ParseError when no such token exists.
Outcome parse_verdict(const std::string& raw, PresentedOrder order);

/// Seeded per (record, metric) so the order does not depend on call order.
PresentedOrder presented_order_for(std::uint64_t seed, const std::string& record_id, Metric metric);

struct JudgeVerdict {
  std::string record_id;
  Metric metric = Metric::Articulate;
  /// From system A's perspective.
  Outcome outcome = Outcome::Tie;
  PresentedOrder presented_order = PresentedOrder::AB;
  std::string raw_judgment;
  /// Both-orders mode: the verdict obtained with the opposite order.
  std::optional<Outcome> audit_outcome;
  std::optional<std::string> audit_raw_judgment;

  bool operator==(const JudgeVerdict&) const = default;
};

struct SkippedComparison {
  std::string record_id;
  Metric metric = Metric::Articulate;
  std::string reason;
};

struct MetricTally {
  std::size_t win = 0;
  std::size_t tie = 0;
  std::size_t lose = 0;
  std::size_t skipped = 0;

  std::size_t judged() const { return win + tie + lose; }
  bool operator==(const MetricTally&) const = default;
};

struct ComparisonReport {
  std::string system_a;
  std::string system_b;
  std::string judge_model;
  std::uint64_t seed = 0;
  /// Number of input pairs.
  std::size_t total = 0;
  std::vector<std::pair<Metric, MetricTally>> tallies;
  /// Share of audited comparisons whose two orders agreed.
  std::optional<double> flip_consistency;

  const MetricTally& tally(Metric metric) const;
  /// win + tie + lose + skipped == total for every metric.
  void validate() const;
  bool operator==(const ComparisonReport&) const = default;
};

struct PairedResponse {
  std::string record_id;
  std::string instruction;
  std::string response_a;
  std::string response_b;
};

struct ComparisonOptions {
  std::string model = "judge";
  std::string system_a = "A";
  std::string system_b = "B";
  std::vector<Metric> metrics{Metric::Articulate, Metric::InDepth, Metric::Comprehensive};
  std::uint64_t seed = 0;
  bool both_orders = false;
  double temperature = 0.0;
  int max_new_tokens = 512;
  std::size_t parallelism = 1;
};

struct ComparisonResult {
  ComparisonReport report;
  /// Sorted by (record_id, metric).
  std::vector<JudgeVerdict> verdicts;
  std::vector<SkippedComparison> skips;

  double skip_rate() const;
};

/// One judge call per (pair, metric), two in both-orders mode. Judge failures
/// and unparseable answers become skips; use check_skip_rate to enforce the limit.
ComparisonResult run_comparison(const ChatProvider& judge, std::span<const PairedResponse> pairs,
                                const ComparisonOptions& options);

/// Throws PipelineError when the share of skipped comparisons exceeds `threshold`.
void check_skip_rate(const ComparisonResult& result, double threshold);

/// Tallies persisted verdicts. Skips count toward `skipped`.
ComparisonReport tally_verdicts(std::span<const JudgeVerdict> verdicts, std::span<const SkippedComparison> skips,
                                std::span<const Metric> metrics, std::size_t total, std::string system_a,
                                std::string system_b, std::string judge_model, std::uint64_t seed);

/// The same verdicts seen with the systems exchanged.
std::vector<JudgeVerdict> swap_systems(std::span<const JudgeVerdict> verdicts);

/// Rounded half away from zero to a whole percent.
int percent(std::size_t count, std::size_t total);
/// "75% 4% 21%"; "n/a" when nothing was judged.
std::string format_tally_cell(const MetricTally& tally);

enum class ReportLayout { Markdown, Json };
ReportLayout parse_report_layout(const std::string& name);

/// Markdown: one row per system pair, one Win/Tie/Lose cell per metric.
/// Json: raw counts, readable by report_from_json.
std::string render_report(std::span<const ComparisonReport> reports, ReportLayout layout);
std::string render_report(const ComparisonReport& report, ReportLayout layout);

Json report_to_json(const ComparisonReport& report);
ComparisonReport report_from_json(const Json& j);
/// Accepts one report object or an array of them.
std::vector<ComparisonReport> load_reports(const std::filesystem::path& path);

Json verdict_to_json(const JudgeVerdict& verdict);
JudgeVerdict verdict_from_json(const Json& j);
Json skip_to_json(const SkippedComparison& skip);

/// Lines carrying `id` (or `record_id`) and `response`, plus `instruction`
/// from either file. Ids missing from either side are an error.
std::vector<PairedResponse> load_response_pairs(const std::filesystem::path& a, const std::filesystem::path& b);

/// Writes verdicts.jsonl, skips.jsonl, report.json and report.md into `dir`.
void write_comparison(const std::filesystem::path& dir, const ComparisonResult& result);

}  // namespace citing
