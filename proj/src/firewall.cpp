#include "campusguard/firewall.hpp"

#include <algorithm>

#include "campusguard/error.hpp"
#include "campusguard/json_util.hpp"

namespace campusguard::firewall {

using nlohmann::json;

std::string_view to_string(Verdict v) { return v == Verdict::Pass ? "pass" : "block"; }

std::string_view to_string(ConflictKind k) {
  switch (k) {
    case ConflictKind::DualMembership: return "DualMembership";
    case ConflictKind::MacMismatch: return "MacMismatch";
    case ConflictKind::IpCollision: return "IpCollision";
    case ConflictKind::UnknownRemoteEntry: return "UnknownRemoteEntry";
  }
  return "UnknownRemoteEntry";
}

FirewallState FirewallState::initial(std::string_view interface) {
  FirewallState s;
  s.aliases.emplace(std::string(kAllowedAlias),
                    Alias{std::string(kAllowedAlias), "host", {}, "Registered IoT devices"});
  s.aliases.emplace(std::string(kBlockedAlias),
                    Alias{std::string(kBlockedAlias), "host", {}, "Quarantined IoT devices"});
  s.rules = {
      {"block-iot-blocked", RuleAction::Block, std::string(kBlockedAlias), std::string(interface), 10},
      {"pass-iot-allowed", RuleAction::Pass, std::string(kAllowedAlias), std::string(interface), 20},
  };
  return s;
}

const Alias* FirewallState::alias(std::string_view name) const {
  auto it = aliases.find(name);
  return it == aliases.end() ? nullptr : &it->second;
}

void FirewallState::validate() const {
  for (auto reserved : {kAllowedAlias, kBlockedAlias})
    if (!alias(reserved)) throw Error(ErrorCode::SchemaViolation, "reserved alias missing", std::string(reserved));
  for (const auto& rule : rules)
    if (!alias(rule.source_alias))
      throw Error(ErrorCode::SchemaViolation, "rule references a missing alias", rule.source_alias);
  std::set<Ipv4Address> ips;
  for (const auto& [mac, m] : mappings) {
    if (m.mac != mac) throw Error(ErrorCode::SchemaViolation, "mapping keyed under the wrong MAC");
    if (!ips.insert(m.ip).second)
      throw Error(ErrorCode::SchemaViolation, "two mappings share an address", m.ip.to_string());
  }
}

bool FirewallState::same_membership(const FirewallState& other) const {
  if (aliases.size() != other.aliases.size() || mappings != other.mappings) return false;
  for (const auto& [name, a] : aliases) {
    const auto* b = other.alias(name);
    if (!b || a.addresses != b->addresses) return false;
  }
  return true;
}

Verdict evaluate(const FirewallState& state, std::string_view source) {
  const auto canonical = canonical_address(source);
  if (!canonical) return Verdict::Block;
  std::set<std::string> identities{*canonical};
  if (auto ip = Ipv4Address::parse(*canonical)) {
    for (const auto& [mac, m] : state.mappings)
      if (m.ip == *ip) identities.insert(mac.to_string());
  } else if (auto mac = MacAddress::parse(*canonical)) {
    if (auto it = state.mappings.find(*mac); it != state.mappings.end())
      identities.insert(it->second.ip.to_string());
  }

  auto rules = state.rules;
  std::stable_sort(rules.begin(), rules.end(),
                   [](const FilterRule& a, const FilterRule& b) { return a.position < b.position; });
  for (const auto& rule : rules) {
    const auto* alias = state.alias(rule.source_alias);
    if (!alias) continue;
    for (const auto& id : identities)
      if (alias->addresses.count(id)) return rule.action == RuleAction::Pass ? Verdict::Pass : Verdict::Block;
  }
  return Verdict::Block;
}

namespace {

const std::set<std::string>& addresses_of(const FirewallState& s, std::string_view alias) {
  static const std::set<std::string> kEmpty;
  const auto* a = s.alias(alias);
  return a ? a->addresses : kEmpty;
}

void report_dual_membership(const FirewallState& s, std::string_view side, std::vector<Conflict>& out) {
  const auto& allowed = addresses_of(s, kAllowedAlias);
  const auto& blocked = addresses_of(s, kBlockedAlias);
  for (const auto& addr : allowed)
    if (blocked.count(addr))
      out.push_back({ConflictKind::DualMembership, addr,
                     std::string(side) + " lists the address in both reserved aliases"});
}

}  // namespace

SyncPlan reconcile(const FirewallState& local, const FirewallState& remote, const ReconcileOptions& options) {
  SyncPlan plan;
  report_dual_membership(local, "local", plan.conflicts);
  report_dual_membership(remote, "remote", plan.conflicts);

  // Alias membership: local is authoritative for every alias it defines.
  for (const auto& [name, alias] : local.aliases) {
    // Creating aliases is outside the plan's scope; only reserved ones are
    // guaranteed to exist on the firewall.
    if (!remote.alias(name) && name != kAllowedAlias && name != kBlockedAlias) continue;
    const auto& want = alias.addresses;
    const auto& have = addresses_of(remote, name);
    AliasDelta delta{name, {}, {}};
    std::set_difference(want.begin(), want.end(), have.begin(), have.end(),
                        std::inserter(delta.adds, delta.adds.end()));
    std::set_difference(have.begin(), have.end(), want.begin(), want.end(),
                        std::inserter(delta.removes, delta.removes.end()));
    if (!delta.adds.empty() || !delta.removes.empty()) plan.alias_changes.push_back(std::move(delta));
  }
  for (const auto& [name, alias] : remote.aliases) {
    if (!local.alias(name))
      plan.conflicts.push_back({ConflictKind::UnknownRemoteEntry, name,
                                "alias exists only on the firewall (" + std::to_string(alias.addresses.size()) +
                                    " addresses)"});
  }

  std::set<MacAddress> managed;
  if (options.managed_macs) managed = *options.managed_macs;
  for (const auto& [mac, m] : local.mappings) managed.insert(mac);

  std::set<MacAddress> deletes;
  for (const auto& [mac, m] : remote.mappings) {
    if (local.mappings.count(mac)) continue;
    if (managed.count(mac)) {
      deletes.insert(mac);
    } else {
      plan.conflicts.push_back({ConflictKind::UnknownRemoteEntry, mac.to_string(),
                                "static mapping to " + m.ip.to_string() + " is not managed locally"});
    }
  }

  std::vector<DhcpStaticMapping> candidates;
  for (const auto& [mac, m] : local.mappings) {
    auto it = remote.mappings.find(mac);
    if (it == remote.mappings.end() || it->second != m) candidates.push_back(m);
  }

  // A candidate collides when some remote mapping will still hold its address
  // after the plan runs. Skipping a candidate leaves it at its remote address,
  // which can in turn block another, so iterate to a fixpoint.
  std::set<MacAddress> skipped;
  std::map<MacAddress, Conflict> skip_reason;
  for (bool changed = true; changed;) {
    changed = false;
    std::set<MacAddress> moving;
    for (const auto& c : candidates)
      if (!skipped.count(c.mac)) moving.insert(c.mac);
    std::map<Ipv4Address, const DhcpStaticMapping*> holders;
    for (const auto& [mac, m] : remote.mappings) {
      if (deletes.count(mac) || moving.count(mac)) continue;
      holders[m.ip] = &m;
    }
    for (const auto& c : candidates) {
      if (skipped.count(c.mac)) continue;
      auto h = holders.find(c.ip);
      if (h == holders.end() || h->second->mac == c.mac) continue;
      const auto& holder = *h->second;
      const bool same_host = !managed.count(holder.mac) && holder.hostname && c.hostname &&
                             *holder.hostname == *c.hostname;
      skip_reason[c.mac] = Conflict{
          same_host ? ConflictKind::MacMismatch : ConflictKind::IpCollision, c.ip.to_string(),
          "firewall binds " + c.ip.to_string() + " to " + holder.mac.to_string() + ", local binds it to " +
              c.mac.to_string()};
      skipped.insert(c.mac);
      changed = true;
    }
  }
  for (const auto& c : candidates)
    if (!skipped.count(c.mac)) plan.mapping_upserts.push_back(c);
  for (const auto& [mac, conflict] : skip_reason) plan.conflicts.push_back(conflict);
  plan.mapping_deletes.assign(deletes.begin(), deletes.end());
  return plan;
}

void apply_plan(FirewallState& state, const SyncPlan& plan) {
  for (const auto& delta : plan.alias_changes) {
    auto [it, inserted] = state.aliases.try_emplace(delta.alias, Alias{delta.alias, "host", {}, ""});
    for (const auto& a : delta.removes) it->second.addresses.erase(a);
    for (const auto& a : delta.adds) it->second.addresses.insert(a);
  }
  for (const auto& mac : plan.mapping_deletes) state.mappings.erase(mac);
  for (const auto& m : plan.mapping_upserts) state.mappings[m.mac] = m;
}

CommitReceipt apply_plan(Firewall& fw, const SyncPlan& plan) {
  for (const auto& delta : plan.alias_changes) {
    if (!delta.removes.empty()) fw.remove_addresses_from_alias(delta.alias, delta.removes);
    if (!delta.adds.empty()) fw.add_addresses_to_alias(delta.alias, delta.adds);
  }
  for (const auto& mac : plan.mapping_deletes) fw.delete_dhcp_mapping(mac);
  // Clear moving mappings first so address swaps never collide while staged.
  for (const auto& m : plan.mapping_upserts) fw.delete_dhcp_mapping(m.mac);
  for (const auto& m : plan.mapping_upserts) fw.upsert_dhcp_mapping(m.mac, m.ip, m.hostname);
  return fw.apply_changes();
}

void to_json(json& j, const Alias& a) {
  j = {{"name", a.name}, {"type", a.kind}, {"address", a.addresses}, {"descr", a.description}};
}

void from_json(const json& j, Alias& a) {
  a.name = j.at("name").get<std::string>();
  a.kind = j.value("type", "host");
  a.addresses.clear();
  for (const auto& addr : j.value("address", std::vector<std::string>{})) {
    auto c = canonical_address(addr);
    if (!c) throw Error(ErrorCode::InvalidAddress, "alias holds an invalid address", addr);
    a.addresses.insert(*c);
  }
  a.description = j.value("descr", "");
}

void to_json(json& j, const DhcpStaticMapping& m) {
  j = {{"mac", m.mac.to_string()}, {"ipaddr", m.ip.to_string()}, {"hostname", jsonio::opt(m.hostname)}};
}

void from_json(const json& j, DhcpStaticMapping& m) {
  m.mac = jsonio::mac(j.at("mac"));
  m.ip = jsonio::ip(j.at("ipaddr"));
  m.hostname = jsonio::opt_str(j, "hostname");
  if (m.hostname && m.hostname->empty()) m.hostname.reset();
}

void to_json(json& j, const FilterRule& r) {
  j = {{"id", r.rule_id},
       {"type", r.action == RuleAction::Pass ? "pass" : "block"},
       {"source", r.source_alias},
       {"interface", r.interface},
       {"position", r.position}};
}

void to_json(json& j, const FirewallState& s) {
  j = json::object();
  j["generation"] = s.generation;
  j["aliases"] = json::array();
  for (const auto& [name, a] : s.aliases) j["aliases"].push_back(a);
  j["rules"] = s.rules;
  j["mappings"] = json::array();
  for (const auto& [mac, m] : s.mappings) j["mappings"].push_back(m);
}

void to_json(json& j, const Conflict& c) {
  j = {{"kind", to_string(c.kind)}, {"subject", c.subject}, {"detail", c.detail}};
}

void to_json(json& j, const SyncPlan& p) {
  j = json::object();
  j["alias_changes"] = json::array();
  for (const auto& d : p.alias_changes)
    j["alias_changes"].push_back({{"alias", d.alias}, {"adds", d.adds}, {"removes", d.removes}});
  j["mapping_upserts"] = p.mapping_upserts;
  j["mapping_deletes"] = json::array();
  for (const auto& m : p.mapping_deletes) j["mapping_deletes"].push_back(m.to_string());
  j["conflicts"] = p.conflicts;
}

}  // namespace campusguard::firewall
