#pragma once

#include <chrono>
#include <deque>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "campusguard/firewall.hpp"

namespace campusguard::firewall {

struct Subnet {
  Ipv4Address network;
  int prefix_length = 24;

  bool contains(Ipv4Address ip) const;
  static std::optional<Subnet> parse(std::string_view cidr);
};

struct SimulatedFirewallOptions {
  std::string interface = "lan";
  std::optional<Subnet> subnet;  // mappings outside it are rejected
  /// Time between a commit and the filter enforcing it.
  std::chrono::microseconds activation_delay{0};
};

/// In-process firewall with pfSense-like staging: edits accumulate in a
/// pending configuration, apply_changes() commits it, and the filter enforces
/// the committed generation after the activation delay.
class SimulatedFirewall final : public Firewall {
 public:
  explicit SimulatedFirewall(SimulatedFirewallOptions options = {});

  Alias get_alias_by_name(std::string_view name) override;
  Alias add_addresses_to_alias(std::string_view name, const std::set<std::string>& addresses) override;
  Alias remove_addresses_from_alias(std::string_view name, const std::set<std::string>& addresses) override;
  DhcpStaticMapping upsert_dhcp_mapping(MacAddress mac, Ipv4Address ip,
                                        std::optional<std::string> hostname) override;
  void delete_dhcp_mapping(MacAddress mac) override;
  CommitReceipt apply_changes() override;
  FirewallState snapshot() override;
  std::string describe() const override { return "simulated:" + options_.interface; }

  /// Verdict of the filter as enforced right now. Never throws.
  Verdict evaluate_packet(std::string_view source, Ipv4Address destination);

  /// Staged (not yet applied) configuration.
  FirewallState pending();
  bool has_pending_changes();
  /// (generation, instant it took or takes effect) for every commit.
  std::vector<std::pair<std::uint64_t, Timestamp>> activation_history();

  /// Replace the committed and pending state wholesale (test setup).
  void load(FirewallState state);

  // Fault injection.
  void set_reachable(bool reachable);
  bool reachable() const;
  void reject_next_commit(std::string reason);
  void set_activation_delay(std::chrono::microseconds delay);

 private:
  void require_reachable() const;
  Alias& staged_alias(std::string_view name);
  void promote_locked(Timestamp at);

  SimulatedFirewallOptions options_;
  mutable std::shared_mutex mu_;
  FirewallState staged_;
  FirewallState committed_;
  FirewallState enforced_;
  std::deque<std::pair<Timestamp, FirewallState>> activations_;
  std::vector<std::pair<std::uint64_t, Timestamp>> history_;
  bool reachable_ = true;
  std::optional<std::string> reject_reason_;
};

}  // namespace campusguard::firewall
