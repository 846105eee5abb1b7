#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "confslate/service.hpp"

namespace confslate::service {

/// HTTP + WebSocket front end over a SessionManager.
///
///   POST /sessions                      create
///   GET  /sessions/{id}                 status
///   POST /sessions/{id}/inference       {stage, choice, confidence}
///   GET  /sessions/{id}/records         CSV export
///   GET  /sessions/{id}/stream          WebSocket upgrade, wire protocol v1
class Server {
 public:
  /// Binds immediately; port 0 picks an ephemeral port (see port()).
  Server(SessionManager& manager, const std::string& host, unsigned short port, int threads = 1);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  [[nodiscard]] unsigned short port() const noexcept;

  /// Serves on background threads until stop().
  void start();
  /// Serves on the calling thread (plus threads - 1 workers) until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; throws ValidationError.
std::pair<std::string, unsigned short> parse_address(const std::string& addr);

}  // namespace confslate::service
