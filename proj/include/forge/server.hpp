#pragma once

#include <memory>
#include <string>

#include "forge/assistant.hpp"
#include "forge/error.hpp"

namespace httplib {
class Server;
}

namespace forge::assistant {

/// HTTP status for an error kind: 404 not_found, 409 conflict/busy,
/// 400 validation, 502 upstream, 500 otherwise.
int http_status(ErrorKind kind);

// JSON-over-HTTP front end for a Service:
//   GET  /papers                     GET  /papers/{id}
//   POST /sessions                   GET  /sessions/{id}
//   POST /sessions/{id}/messages     POST /sessions/{id}/decision
//   GET  /study/log[?paper_id=]
// Failures answer {"code": <kind>, "message": <text>}.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds an ephemeral port and returns it; throws Error(io) on failure.
  int bind_any(const std::string& host = "127.0.0.1");
  void bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  Service& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace forge::assistant
