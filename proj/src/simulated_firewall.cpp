#include "campusguard/simulated_firewall.hpp"

#include <mutex>

#include "campusguard/error.hpp"

namespace campusguard::firewall {

bool Subnet::contains(Ipv4Address ip) const {
  if (prefix_length <= 0) return true;
  const std::uint32_t mask = prefix_length >= 32 ? 0xffffffffu : ~((1u << (32 - prefix_length)) - 1);
  return (ip.value() & mask) == (network.value() & mask);
}

std::optional<Subnet> Subnet::parse(std::string_view cidr) {
  const auto slash = cidr.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto net = Ipv4Address::parse(cidr.substr(0, slash));
  int prefix = -1;
  try {
    prefix = std::stoi(std::string(cidr.substr(slash + 1)));
  } catch (...) {
    return std::nullopt;
  }
  if (!net || prefix < 0 || prefix > 32) return std::nullopt;
  return Subnet{*net, prefix};
}

SimulatedFirewall::SimulatedFirewall(SimulatedFirewallOptions options)
    : options_(std::move(options)),
      staged_(FirewallState::initial(options_.interface)),
      committed_(staged_),
      enforced_(staged_) {}

void SimulatedFirewall::require_reachable() const {
  if (!reachable_) throw Error(ErrorCode::FirewallUnreachable, "firewall is not reachable", describe());
}

Alias& SimulatedFirewall::staged_alias(std::string_view name) {
  auto it = staged_.aliases.find(name);
  if (it == staged_.aliases.end()) throw Error(ErrorCode::AliasNotFound, "no such alias", std::string(name));
  return it->second;
}

Alias SimulatedFirewall::get_alias_by_name(std::string_view name) {
  std::shared_lock lock(mu_);
  require_reachable();
  const auto* alias = committed_.alias(name);
  if (!alias) throw Error(ErrorCode::AliasNotFound, "no such alias", std::string(name));
  return *alias;
}

Alias SimulatedFirewall::add_addresses_to_alias(std::string_view name, const std::set<std::string>& addresses) {
  std::set<std::string> canonical;
  for (const auto& a : addresses) {
    auto c = canonical_address(a);
    if (!c) throw Error(ErrorCode::InvalidAddress, "not an IPv4 or MAC address", a);
    canonical.insert(*c);
  }
  std::unique_lock lock(mu_);
  require_reachable();
  auto& alias = staged_alias(name);
  alias.addresses.insert(canonical.begin(), canonical.end());
  return alias;
}

Alias SimulatedFirewall::remove_addresses_from_alias(std::string_view name,
                                                     const std::set<std::string>& addresses) {
  std::unique_lock lock(mu_);
  require_reachable();
  auto& alias = staged_alias(name);
  for (const auto& a : addresses) alias.addresses.erase(canonical_address(a).value_or(a));
  return alias;
}

DhcpStaticMapping SimulatedFirewall::upsert_dhcp_mapping(MacAddress mac, Ipv4Address ip,
                                                         std::optional<std::string> hostname) {
  std::unique_lock lock(mu_);
  require_reachable();
  if (options_.subnet && !options_.subnet->contains(ip))
    throw Error(ErrorCode::InvalidAddress, "address outside the interface subnet", ip.to_string());
  for (const auto& [other_mac, m] : staged_.mappings)
    if (m.ip == ip && other_mac != mac)
      throw Error(ErrorCode::IpCollision, ip.to_string() + " is mapped to " + other_mac.to_string(),
                  ip.to_string());
  DhcpStaticMapping mapping{mac, ip, std::move(hostname)};
  staged_.mappings[mac] = mapping;
  return mapping;
}

void SimulatedFirewall::delete_dhcp_mapping(MacAddress mac) {
  std::unique_lock lock(mu_);
  require_reachable();
  staged_.mappings.erase(mac);
}

CommitReceipt SimulatedFirewall::apply_changes() {
  std::unique_lock lock(mu_);
  require_reachable();
  const auto t = now();
  if (staged_.same_membership(committed_) && staged_.rules == committed_.rules) {
    const auto applied = history_.empty() ? t : history_.back().second;
    return CommitReceipt{committed_.generation, applied, true};
  }
  if (reject_reason_) {
    auto reason = std::exchange(reject_reason_, std::nullopt);
    throw Error(ErrorCode::CommitRejected, "firewall rejected the configuration", *reason);
  }
  staged_.validate();
  staged_.generation = committed_.generation + 1;
  committed_ = staged_;
  const auto effective = t + options_.activation_delay;
  activations_.emplace_back(effective, committed_);
  history_.emplace_back(committed_.generation, effective);
  promote_locked(t);
  return CommitReceipt{committed_.generation, effective, false};
}

void SimulatedFirewall::promote_locked(Timestamp at) {
  while (!activations_.empty() && activations_.front().first <= at) {
    enforced_ = std::move(activations_.front().second);
    activations_.pop_front();
  }
}

FirewallState SimulatedFirewall::snapshot() {
  std::shared_lock lock(mu_);
  require_reachable();
  return committed_;
}

Verdict SimulatedFirewall::evaluate_packet(std::string_view source, Ipv4Address /*destination*/) {
  std::unique_lock lock(mu_);
  promote_locked(now());
  return evaluate(enforced_, source);
}

FirewallState SimulatedFirewall::pending() {
  std::shared_lock lock(mu_);
  return staged_;
}

bool SimulatedFirewall::has_pending_changes() {
  std::shared_lock lock(mu_);
  return !(staged_.same_membership(committed_) && staged_.rules == committed_.rules);
}

std::vector<std::pair<std::uint64_t, Timestamp>> SimulatedFirewall::activation_history() {
  std::shared_lock lock(mu_);
  return history_;
}

void SimulatedFirewall::load(FirewallState state) {
  std::unique_lock lock(mu_);
  staged_ = state;
  committed_ = state;
  enforced_ = std::move(state);
  activations_.clear();
}

void SimulatedFirewall::set_reachable(bool reachable) {
  std::unique_lock lock(mu_);
  reachable_ = reachable;
}

bool SimulatedFirewall::reachable() const {
  std::shared_lock lock(mu_);
  return reachable_;
}

void SimulatedFirewall::reject_next_commit(std::string reason) {
  std::unique_lock lock(mu_);
  reject_reason_ = std::move(reason);
}

void SimulatedFirewall::set_activation_delay(std::chrono::microseconds delay) {
  std::unique_lock lock(mu_);
  options_.activation_delay = delay;
}

}  // namespace campusguard::firewall
