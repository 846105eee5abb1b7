#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "confslate/error.hpp"
#include "confslate/session.hpp"

namespace confslate::service {

inline constexpr int kWireVersion = 1;
// State messages go out every 10 simulation ticks (20 Hz at 5 ms ticks).
inline constexpr int kStateEveryTicks = 10;

/// HTTP status for a library error: 400 for bad input, 404, 409 for protocol
/// and stream conflicts, 500 otherwise.
int http_status(ErrorCode code) noexcept;

/// Wire error body: {"v":1,"type":"error","code":...,"message":...}.
nlohmann::json error_message(ErrorCode code, std::string_view message);

struct ServiceOptions {
  // When set, every session appends its event log to <log_dir>/<id>.jsonl.
  std::optional<std::filesystem::path> log_dir;
  session::Clock clock = session::now_iso8601;
};

/// Live sessions behind the network front door. Every state change goes
/// through Session::advance; this class only validates wire input and
/// serializes access per session. Safe to call from any thread.
class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// {seed?, dss_calibration: "well"|"poor", dss_accuracy?, config?}.
  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json status(const std::string& id) const;
  /// {stage: "initial"|"no_change"|"final", choice?, confidence?}.
  nlohmann::json submit_inference(const std::string& id, const nlohmann::json& body);
  std::string records_csv(const std::string& id) const;
  std::vector<session::Event> events(const std::string& id) const;

  /// Throws Conflict if a stream is already attached, NotFound for unknown ids.
  void attach_stream(const std::string& id);
  void detach_stream(const std::string& id);

  /// Handles one client text frame; returns the immediate replies.
  std::vector<nlohmann::json> on_stream_message(const std::string& id, const std::string& text);
  /// One ticker period: advances an armed teleoperation segment by
  /// kStateEveryTicks and returns the queued server messages.
  std::vector<nlohmann::json> poll(const std::string& id);

  [[nodiscard]] std::size_t size() const;

 private:
  struct Entry;
  std::shared_ptr<Entry> find(const std::string& id) const;

  ServiceOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace confslate::service
