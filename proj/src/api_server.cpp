#include <thread>

#include "campusguard/api.hpp"
#include "campusguard/error.hpp"
#include "httplib.h"

namespace campusguard::api {

struct ApiHttpServer::Impl {
  explicit Impl(ApiService& s) : service(s) {}
  ApiService& service;
  httplib::Server server;
  std::thread thread;
};

ApiHttpServer::ApiHttpServer(ApiService& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
    Request req;
    req.method = hreq.method;
    req.path = hreq.path;
    for (const auto& [k, v] : hreq.params) req.query[k] = v;
    for (const auto& [k, v] : hreq.headers) req.headers[k] = v;
    req.body = hreq.body;
    const auto res = impl_->service.handle(req);
    hres.status = res.status;
    hres.set_content(res.body.dump(), "application/json");
  };
  const char* any = R"(/.*)";
  impl_->server.Get(any, handler);
  impl_->server.Post(any, handler);
  impl_->server.Put(any, handler);
  impl_->server.Patch(any, handler);
  impl_->server.Delete(any, handler);
}

ApiHttpServer::~ApiHttpServer() { stop(); }

int ApiHttpServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::InvalidConfig, "cannot bind API endpoint", host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ApiHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string ApiHttpServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace campusguard::api
