#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "campusguard/registry.hpp"
#include "campusguard/simulated_firewall.hpp"
#include "campusguard/store.hpp"

namespace fixtures {

using namespace campusguard;

inline firewall::SimulatedFirewallOptions lab_firewall_options() {
  firewall::SimulatedFirewallOptions o;
  o.subnet = firewall::Subnet::parse("192.168.1.0/24");
  return o;
}

inline Institution institution(const std::string& id) {
  return Institution{id, id, NetworkProfile{"sim://" + id, "", "lan"}};
}

/// One institution with an in-memory store and a simulated firewall.
struct Lab {
  persist::Store store;
  firewall::SimulatedFirewall sim{lab_firewall_options()};
  registry::Registry reg{store};
  Principal user{"alice", RoleKind::Regular, {"inst-1"}};
  Principal other_user{"bob", RoleKind::Regular, {"inst-1"}};
  Principal admin{"admin-1", RoleKind::Admin, {"inst-1"}};
  Principal root{"root", RoleKind::Superuser, {"inst-1"}};

  Lab() {
    reg.add_institution(institution("inst-1"), sim,
                        registry::AddressPool::parse("192.168.1.50", "192.168.1.59"));
  }

  Device request(const std::string& mac, const std::string& name = "sensor") {
    return reg.request_access(user, mac, name);
  }

  Device active(const std::string& mac, std::optional<std::string> ip = std::nullopt) {
    const auto d = request(mac);
    std::optional<Ipv4Address> want;
    if (ip) want = Ipv4Address::parse(*ip);
    return reg.approve_device(admin, d.device_id, want);
  }

  const std::set<std::string>& allowed() { return committed_alias(firewall::kAllowedAlias); }
  const std::set<std::string>& blocked() { return committed_alias(firewall::kBlockedAlias); }

 private:
  const std::set<std::string>& committed_alias(std::string_view name) {
    snapshot_ = sim.snapshot();
    return snapshot_.alias(name)->addresses;
  }
  firewall::FirewallState snapshot_;
};

inline std::string mac_for(int i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "02:00:00:00:%02x:%02x", (i >> 8) & 0xff, i & 0xff);
  return buf;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("cg-test-" + tag + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
