#include "campusguard/firewall_server.hpp"

#include <mutex>

#include "campusguard/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace campusguard::firewall {

using nlohmann::json;

namespace {

json envelope(int code, const json& data) {
  return {{"code", code}, {"status", "ok"}, {"response_id", "SUCCESS"}, {"message", ""}, {"data", data}};
}

void reply(httplib::Response& res, int code, const json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  const int status = http_status(e.code());
  reply(res, status,
        {{"code", status},
         {"status", "error"},
         {"response_id", std::string(to_string(e.code()))},
         {"message", e.what()},
         {"detail", e.detail()},
         {"data", json::array()}});
}

json alias_list(const FirewallState& state) {
  json out = json::array();
  long id = 0;
  for (const auto& [name, alias] : state.aliases) {
    json a = alias;
    a["id"] = id++;
    a["detail"] = json::array();
    out.push_back(std::move(a));
  }
  return out;
}

json mapping_list(const FirewallState& state, const std::string& parent) {
  json out = json::array();
  long id = 0;
  for (const auto& [mac, m] : state.mappings) {
    json j = m;
    j["id"] = id++;
    j["parent_id"] = parent;
    if (j["hostname"].is_null()) j["hostname"] = "";
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

struct FirewallHttpServer::Impl {
  Impl(SimulatedFirewall& fw, std::string key) : firewall(fw), api_key(std::move(key)) {}

  SimulatedFirewall& firewall;
  std::string api_key;
  httplib::Server server;
  std::thread thread;
  std::mutex mu;  // one writer at a time, as on a real appliance

  template <class Fn>
  void guarded(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    if (req.get_header_value("X-API-Key") != api_key) {
      reply(res, 401, {{"code", 401}, {"status", "unauthorized"}, {"response_id", "AUTH_FAILED"},
                       {"message", "API key rejected"}, {"data", json::array()}});
      return;
    }
    std::lock_guard lock(mu);
    try {
      fn();
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      reply_error(res, Error(ErrorCode::InvalidRequest, e.what()));
    }
  }

  FirewallState view(const httplib::Request& req) {
    return req.get_param_value("state") == "applied" ? firewall.snapshot() : firewall.pending();
  }

  void routes() {
    server.Get("/api/v2/firewall/aliases", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] {
        if (!firewall.reachable()) firewall.snapshot();  // surfaces FirewallUnreachable
        reply(res, 200, envelope(200, alias_list(view(req))));
      });
    });

    server.Patch("/api/v2/firewall/alias", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] {
        const auto body = json::parse(req.body);
        const auto pending = firewall.pending();
        const auto list = alias_list(pending);
        const auto id = body.at("id").get<long>();
        if (id < 0 || id >= static_cast<long>(list.size()))
          throw Error(ErrorCode::AliasNotFound, "no alias with that id", std::to_string(id));
        const auto name = list.at(static_cast<std::size_t>(id)).at("name").get<std::string>();
        const auto& current = pending.aliases.find(name)->second.addresses;
        std::set<std::string> wanted;
        for (const auto& a : body.at("address")) {
          auto c = canonical_address(a.get<std::string>());
          if (!c) throw Error(ErrorCode::InvalidAddress, "not an IPv4 or MAC address", a.get<std::string>());
          wanted.insert(*c);
        }
        std::set<std::string> removes, adds;
        for (const auto& a : current)
          if (!wanted.count(a)) removes.insert(a);
        for (const auto& a : wanted)
          if (!current.count(a)) adds.insert(a);
        Alias result = pending.aliases.find(name)->second;
        if (!removes.empty()) result = firewall.remove_addresses_from_alias(name, removes);
        if (!adds.empty()) result = firewall.add_addresses_to_alias(name, adds);
        json data = result;
        data["id"] = id;
        reply(res, 200, envelope(200, data));
      });
    });

    server.Post("/api/v2/firewall/apply", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] {
        const auto receipt = firewall.apply_changes();
        reply(res, 200, envelope(200, {{"applied", true},
                                       {"generation", receipt.generation},
                                       {"applied_at", to_micros(receipt.applied_at)},
                                       {"noop", receipt.noop}}));
      });
    });

    server.Get("/api/v2/firewall/apply", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] {
        const auto committed = firewall.snapshot();
        reply(res, 200, envelope(200, {{"applied", !firewall.has_pending_changes()},
                                       {"pending_subsystems", json::array()},
                                       {"generation", committed.generation}}));
      });
    });

    server.Get("/api/v2/firewall/rules", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] { reply(res, 200, envelope(200, firewall.snapshot().rules)); });
    });

    server.Get("/api/v2/services/dhcp_server/static_mappings",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(req, res, [&] {
                   if (!firewall.reachable()) firewall.snapshot();
                   const auto parent = req.has_param("parent_id") ? req.get_param_value("parent_id") : "lan";
                   reply(res, 200, envelope(200, mapping_list(view(req), parent)));
                 });
               });

    auto upsert = [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] {
        const auto body = json::parse(req.body);
        auto mapping = body.get<DhcpStaticMapping>();
        if (body.contains("id")) {
          // PATCH may change the MAC of an existing entry.
          const auto pending = firewall.pending();
          const auto id = body.at("id").get<long>();
          if (id < 0 || id >= static_cast<long>(pending.mappings.size()))
            throw Error(ErrorCode::NotFound, "no mapping with that id", std::to_string(id));
          auto it = pending.mappings.begin();
          std::advance(it, id);
          if (it->first != mapping.mac) firewall.delete_dhcp_mapping(it->first);
        }
        const auto stored = firewall.upsert_dhcp_mapping(mapping.mac, mapping.ip, mapping.hostname);
        json data = stored;
        reply(res, 200, envelope(200, data));
      });
    };
    server.Post("/api/v2/services/dhcp_server/static_mapping", upsert);
    server.Patch("/api/v2/services/dhcp_server/static_mapping", upsert);

    server.Delete("/api/v2/services/dhcp_server/static_mapping",
                  [this](const httplib::Request& req, httplib::Response& res) {
                    guarded(req, res, [&] {
                      const auto pending = firewall.pending();
                      const auto id = std::stol(req.get_param_value("id"));
                      if (id < 0 || id >= static_cast<long>(pending.mappings.size()))
                        throw Error(ErrorCode::NotFound, "no mapping with that id", std::to_string(id));
                      auto it = pending.mappings.begin();
                      std::advance(it, id);
                      firewall.delete_dhcp_mapping(it->first);
                      reply(res, 200, envelope(200, json::object()));
                    });
                  });

    server.Get("/api/v2/diagnostics/probe", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&] {
        const auto verdict = firewall.evaluate_packet(req.get_param_value("src"), Ipv4Address{});
        reply(res, 200, envelope(200, {{"verdict", to_string(verdict)}, {"at", to_micros(now())}}));
      });
    });
  }
};

FirewallHttpServer::FirewallHttpServer(SimulatedFirewall& firewall, std::string api_key)
    : impl_(std::make_unique<Impl>(firewall, std::move(api_key))) {
  impl_->routes();
}

FirewallHttpServer::~FirewallHttpServer() { stop(); }

int FirewallHttpServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::InvalidConfig, "cannot bind firewall endpoint", host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void FirewallHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string FirewallHttpServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace campusguard::firewall
