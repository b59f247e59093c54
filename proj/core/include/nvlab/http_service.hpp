#pragma once

// JSON-over-HTTP front end for live sessions.
//
//   POST /sessions                 create a session (config record)
//   POST /sessions/{id}/join       claim a human seat -> token
//   POST /sessions/{id}/price      {"token", "price"}
//   POST /sessions/{id}/quantity   {"token", "quantity"}
//   GET  /sessions/{id}/state      ?token=...
//   GET  /sessions/{id}/log        finished sessions only; ?format=csv for CSV
//
// Failures answer {"error": {"code": ..., "message": ...}}.

#include <chrono>
#include <memory>
#include <string>

#include "nvlab/session.hpp"

namespace nvlab::live {

/// Builds a SessionConfig from a POST /sessions body. Throws ApiError.
SessionConfig parse_session_config(const std::string& body, const std::string& persist_dir = "");

/// Stage view as a JSON document.
std::string view_json(const StageView& view);

struct ServiceOptions {
  std::string persist_dir;
  std::chrono::milliseconds tick_interval{100};
};

class HttpService {
 public:
  explicit HttpService(SessionManager& manager, ServiceOptions options = {});
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  /// Throws std::runtime_error when binding fails.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call bind first.
  void run();
  /// Blocks until run() is accepting connections.
  void wait_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nvlab::live
