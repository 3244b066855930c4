#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <vector>

#include "citing/json_io.hpp"

namespace citing {

/// Append-only line-per-event JSON stream. Every event gets a sequence number
/// and a UTC timestamp (`ts`). Safe to share across threads.
///
/// Events recorded from inside `ordered_parallel_for` are held per task and
/// released in task order once the batch finishes, so the stream order does
/// not depend on thread scheduling.
class RunLedger {
 public:
  /// In-memory only.
  RunLedger() = default;
  /// Appends to `path`, creating it if needed. Sequence numbers continue from
  /// the last line already present.
  explicit RunLedger(std::filesystem::path path);

  RunLedger(const RunLedger&) = delete;
  RunLedger& operator=(const RunLedger&) = delete;

  void record(Json event);

  /// Events recorded through this instance, in stream order.
  std::vector<Json> events() const;
  std::vector<Json> events_of(const std::string& kind) const;

  const std::optional<std::filesystem::path>& path() const { return path_; }

  /// Captured events of one task; used by ordered_parallel_for.
  struct Capture {
    std::vector<Json> events;
  };
  class CaptureScope {
   public:
    CaptureScope(RunLedger* ledger, Capture* capture);
    ~CaptureScope();
    CaptureScope(const CaptureScope&) = delete;
    CaptureScope& operator=(const CaptureScope&) = delete;

   private:
    RunLedger* prev_ledger_;
    Capture* prev_capture_;
  };
  void release(std::vector<Capture>& captures);

  static bool capturing();

 private:
  void write_locked(Json event);

  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  std::uint64_t next_seq_ = 0;
  std::vector<Json> events_;
};

std::string utc_timestamp();

}  // namespace citing
