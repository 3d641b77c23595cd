#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "campusguard/auth.hpp"
#include "campusguard/registry.hpp"
#include "campusguard/store.hpp"
#include "json.hpp"

namespace campusguard::api {

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // names matched case-insensitively
  std::string body;

  /// Builds a request from "METHOD /path?a=b" style input (tests, CLI).
  static Request make(std::string method, std::string target, std::string body = {},
                      std::optional<std::string> bearer = std::nullopt);
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Route table of the management API. Every handler runs under the caller's
/// token; failures become {code, message, detail} bodies with the status
/// class of the error code.
///
///   POST /auth/token                        {username, password}
///   GET  /devices                           ?state=&institution=
///   POST /devices  (alias /devices/request) {mac, name, requested_ip?, institution_id?}
///   GET  /devices/{id}
///   POST /devices/{id}/approve              {ip?}
///   POST /devices/{id}/block                {reason?}
///   POST /devices/{id}/unblock
///   POST /devices/{id}/revoke
///   GET  /incidents                         ?severity=&status=&since=&limit=
///   POST /incidents/{id}/status             {status}
///   GET  /firewall/state                    ?institution=
///   POST /firewall/sync                     {apply?, institution_id?}
///   GET  /firewall/conflicts                ?institution=
///   GET  /feedback                          ?device_id=&since=&limit=
class ApiService {
 public:
  ApiService(registry::Registry& registry, persist::Store& store, auth::UserDirectory users,
             auth::TokenIssuer tokens);

  Response handle(const Request& request);

  const auth::TokenIssuer& tokens() const noexcept { return tokens_; }

 private:
  Response route(const Request& request, std::optional<Principal>& who);

  registry::Registry& registry_;
  persist::Store& store_;
  auth::UserDirectory users_;
  auth::TokenIssuer tokens_;
};

/// Serves an ApiService over HTTP on a background thread.
class ApiHttpServer {
 public:
  explicit ApiHttpServer(ApiService& service);
  ~ApiHttpServer();
  ApiHttpServer(const ApiHttpServer&) = delete;
  ApiHttpServer& operator=(const ApiHttpServer&) = delete;

  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  std::string base_url() const;
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_ = 0;
};

}  // namespace campusguard::api
