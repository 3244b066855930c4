#include "citing/providers/ledger.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>

#include "citing/error.hpp"

namespace citing {

namespace {

thread_local RunLedger* tls_ledger = nullptr;
thread_local RunLedger::Capture* tls_capture = nullptr;

}  // namespace

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto secs = time_point_cast<seconds>(now);
  const auto micros = duration_cast<microseconds>(now - secs).count();
  const std::time_t t = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:06}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, micros);
}

RunLedger::RunLedger(std::filesystem::path path) : path_(std::move(path)) {
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  if (std::filesystem::exists(*path_)) {
    for (const auto& e : read_jsonl_file(*path_)) {
      if (e.contains("seq") && e["seq"].is_number_unsigned()) {
        next_seq_ = std::max(next_seq_, e["seq"].get<std::uint64_t>() + 1);
      }
    }
  }
  out_.open(*path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error("cannot open ledger " + path_->string());
}

void RunLedger::record(Json event) {
  Json stamped;
  stamped["seq"] = 0;
  stamped["ts"] = utc_timestamp();
  for (auto& [k, v] : event.items()) stamped[k] = std::move(v);
  if (tls_ledger == this && tls_capture != nullptr) {
    tls_capture->events.push_back(std::move(stamped));
    return;
  }
  std::lock_guard lock(mutex_);
  write_locked(std::move(stamped));
}

void RunLedger::write_locked(Json event) {
  event["seq"] = next_seq_++;
  if (out_.is_open()) {
    out_ << dump_line(event) << '\n';
    out_.flush();
  }
  events_.push_back(std::move(event));
}

void RunLedger::release(std::vector<Capture>& captures) {
  std::lock_guard lock(mutex_);
  for (auto& c : captures) {
    for (auto& e : c.events) write_locked(std::move(e));
    c.events.clear();
  }
}

std::vector<Json> RunLedger::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

std::vector<Json> RunLedger::events_of(const std::string& kind) const {
  std::lock_guard lock(mutex_);
  std::vector<Json> out;
  for (const auto& e : events_) {
    if (e.value("event", std::string()) == kind) out.push_back(e);
  }
  return out;
}

RunLedger::CaptureScope::CaptureScope(RunLedger* ledger, Capture* capture)
    : prev_ledger_(tls_ledger), prev_capture_(tls_capture) {
  tls_ledger = ledger;
  tls_capture = capture;
}

RunLedger::CaptureScope::~CaptureScope() {
  tls_ledger = prev_ledger_;
  tls_capture = prev_capture_;
}

bool RunLedger::capturing() { return tls_capture != nullptr; }

}  // namespace citing
