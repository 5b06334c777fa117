#pragma once

#include <memory>
#include <string>
#include <thread>

#include "triage/backend.hpp"
#include "triage/detail/http.hpp"
#include "triage/wire.hpp"

namespace triage {

/// Serves any ScoringBackend over the scoring wire protocol. Used to run the
/// decoder against the HTTP client with mock scores, and by
/// `triage mock-server`.
class BackendServer {
 public:
  explicit BackendServer(ScoringBackend& backend) : backend_(backend) {
    server_.Post(std::string(wire::kScorePath), [this](const httplib::Request& req, httplib::Response& res) { handle_score(req, res); });
    server_.Post(std::string(wire::kCompletePath), [this](const httplib::Request& req, httplib::Response& res) { handle_complete(req, res); });
    server_.Get(std::string(wire::kTokenizePath), [this](const httplib::Request& req, httplib::Response& res) { handle_tokenize(req, res); });
  }

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  ~BackendServer() { stop(); }

  /// Binds 127.0.0.1 (port 0 picks a free port) and serves on a background
  /// thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop() is called elsewhere.
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  static void reply(httplib::Response& res, const std::string& body, int status = 200) {
    res.status = status;
    res.set_content(body, std::string(wire::kContentType));
  }

  template <typename Handler>
  static void guarded(httplib::Response& res, Handler&& handler) {
    try {
      handler();
    } catch (const Error& e) {
      reply(res, wire::encode_error(e.what()), 400);
    }
  }

  void handle_score(const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto r = wire::decode_score_request(req.body);
      reply(res, wire::encode_logprobs(backend_.score(r.context, r.candidates)));
    });
  }

  void handle_complete(const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, wire::encode_text(backend_.complete(wire::decode_complete_request(req.body)).text)); });
  }

  void handle_tokenize(const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_param("s")) throw Error(ErrorCode::ProtocolError, "missing query parameter 's'");
      reply(res, wire::encode_ids(backend_.tokenizer().tokenize(req.get_param_value("s"))));
    });
  }

  ScoringBackend& backend_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace triage
