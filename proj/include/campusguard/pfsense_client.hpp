#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "campusguard/firewall.hpp"
#include "json.hpp"

namespace campusguard::firewall {

struct PfSenseEndpoint {
  std::string base_url;  // e.g. "https://10.0.0.1" or "http://127.0.0.1:8443"
  std::string api_key;   // sent as X-API-Key
  std::string interface = "lan";
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{10000};
};

/// Firewall contract over the pfSense REST API (v2 layout): alias edits are
/// PATCHed into the pending configuration, static mappings live under the DHCP
/// server of `interface`, and POST /firewall/apply activates pending changes.
/// Transport failures and 503 replies surface as Error(FirewallUnreachable).
class PfSenseClient final : public Firewall {
 public:
  explicit PfSenseClient(PfSenseEndpoint endpoint);
  ~PfSenseClient() override;

  Alias get_alias_by_name(std::string_view name) override;
  Alias add_addresses_to_alias(std::string_view name, const std::set<std::string>& addresses) override;
  Alias remove_addresses_from_alias(std::string_view name, const std::set<std::string>& addresses) override;
  DhcpStaticMapping upsert_dhcp_mapping(MacAddress mac, Ipv4Address ip,
                                        std::optional<std::string> hostname) override;
  void delete_dhcp_mapping(MacAddress mac) override;
  CommitReceipt apply_changes() override;
  FirewallState snapshot() override;
  std::string describe() const override { return "pfsense:" + endpoint_.base_url; }

 private:
  nlohmann::json call(const std::string& method, const std::string& path, const nlohmann::json* body = nullptr);
  nlohmann::json aliases(bool applied);
  nlohmann::json mappings(bool applied);
  nlohmann::json find_alias(const nlohmann::json& list, std::string_view name);
  Alias patch_alias(const nlohmann::json& current, const std::set<std::string>& addresses);

  struct Transport;
  PfSenseEndpoint endpoint_;
  std::unique_ptr<Transport> transport_;
  std::mutex mu_;
};

}  // namespace campusguard::firewall
