#pragma once

#include <memory>
#include <string>
#include <thread>

#include "campusguard/simulated_firewall.hpp"

namespace campusguard::firewall {

/// Serves a SimulatedFirewall over the pfSense-compatible REST surface that
/// PfSenseClient consumes, plus GET /api/v2/diagnostics/probe?src=ADDR for
/// connectivity probing. Requests need the configured X-API-Key.
class FirewallHttpServer {
 public:
  FirewallHttpServer(SimulatedFirewall& firewall, std::string api_key);
  ~FirewallHttpServer();
  FirewallHttpServer(const FirewallHttpServer&) = delete;
  FirewallHttpServer& operator=(const FirewallHttpServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
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

}  // namespace campusguard::firewall
