#include "forge/server.hpp"

#include "httplib.h"

namespace forge::assistant {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict:
    case ErrorKind::busy: return 409;
    case ErrorKind::validation:
    case ErrorKind::invalid_argument:
    case ErrorKind::malformed_record: return 400;
    case ErrorKind::upstream: return 502;
    default: return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message) {
  send_json(res, http_status(kind), {{"code", to_string(kind)}, {"message", message}});
}

nlohmann::json body_object(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::validation, "request body must be a JSON object");
  return j;
}

std::string string_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorKind::validation, std::string("field \"") + key + "\" must be a string");
  }
  return j[key].get<std::string>();
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& svc = service_;
  server_->Get("/papers", guarded([&svc](const httplib::Request&, httplib::Response& res) {
                 send_json(res, 200, svc.list_papers());
               }));
  server_->Get(R"(/papers/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, svc.paper(req.matches[1]));
               }));
  server_->Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  auto body = body_object(req);
                  send_json(res, 201, svc.create_session(string_field(body, "paper_id")).to_json());
                }));
  server_->Get(R"(/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, svc.get_session(req.matches[1]).to_json());
               }));
  server_->Post(R"(/sessions/([^/]+)/messages)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  auto body = body_object(req);
                  send_json(res, 200, svc.post_message(req.matches[1], string_field(body, "text")).to_json());
                }));
  server_->Post(R"(/sessions/([^/]+)/decision)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  auto body = body_object(req);
                  auto s = svc.submit_decision(req.matches[1], string_field(body, "decision"),
                                               string_field(body, "meta_review"));
                  send_json(res, 200, s.to_json());
                }));
  server_->Get("/study/log", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 std::optional<std::string> paper;
                 if (req.has_param("paper_id")) paper = req.get_param_value("paper_id");
                 nlohmann::json out = nlohmann::json::array();
                 for (const auto& e : svc.study_log(paper)) out.push_back(e.to_json());
                 send_json(res, 200, out);
               }));
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_json(res, res.status, {{"code", res.status == 404 ? "not_found" : "http"}, {"message", "no such route"}});
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind_any(const std::string& host) {
  int port = server_->bind_to_any_port(host);
  if (port < 0) throw Error(ErrorKind::io, "cannot bind " + host);
  return port;
}

void HttpServer::bind(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  }
}

void HttpServer::serve() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace forge::assistant
