#pragma once

#include <exception>
#include <memory>
#include <string>

#include "infosched/service/session.hpp"

namespace infosched::service {

/// HTTP status for a library exception: 404 not found, 409 session state,
/// 400 bad input, 422 numeric failure, 500 otherwise.
int http_status(const std::exception& error);

/// JSON front end over a SessionManager.
///
///   GET  /health
///   GET  /policies
///   POST /sessions                      {policy, mode?, x0?}   → {id, n, tau, next_time}
///   GET  /sessions/{id}
///   POST /sessions/{id}/observations    {t, x}                 → {next_time, status, clamped, horizon, posterior?}
///   GET  /sessions/{id}/policy/{i}      ?axis=&at=a,b           → {times, states, t_hat}
///   GET  /sessions/{id}/posterior                               → {values, weights}
///
/// Errors come back as {"error": message} with the status from http_status.
class HttpServer {
 public:
  explicit HttpServer(SessionManager& sessions);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves requests until stop(). Requires a prior bind().
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace infosched::service
