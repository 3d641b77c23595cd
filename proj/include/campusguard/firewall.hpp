#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "campusguard/types.hpp"
#include "json.hpp"

namespace campusguard::firewall {

inline constexpr std::string_view kAllowedAlias = "iot_allowed";
inline constexpr std::string_view kBlockedAlias = "iot_blocked";

struct Alias {
  std::string name;
  std::string kind = "host";
  std::set<std::string> addresses;  // canonical IPv4 or MAC text
  std::string description;

  friend bool operator==(const Alias&, const Alias&) = default;
};

enum class RuleAction { Pass, Block };

struct FilterRule {
  std::string rule_id;
  RuleAction action = RuleAction::Block;
  std::string source_alias;
  std::string interface = "lan";
  int position = 0;

  friend bool operator==(const FilterRule&, const FilterRule&) = default;
};

struct DhcpStaticMapping {
  MacAddress mac;
  Ipv4Address ip;
  std::optional<std::string> hostname;

  friend bool operator==(const DhcpStaticMapping&, const DhcpStaticMapping&) = default;
};

struct FirewallState {
  std::map<std::string, Alias, std::less<>> aliases;
  std::vector<FilterRule> rules;  // ascending position
  std::map<MacAddress, DhcpStaticMapping> mappings;
  std::uint64_t generation = 0;

  /// Reserved aliases plus the block-before-pass rule pair on `interface`.
  static FirewallState initial(std::string_view interface = "lan");

  /// Throws Error(SchemaViolation) when a rule names a missing alias, a
  /// reserved alias is absent, or mapping IPs repeat.
  void validate() const;

  const Alias* alias(std::string_view name) const;
  /// Aliases and mappings only; generation and rules are not compared.
  bool same_membership(const FirewallState& other) const;

  friend bool operator==(const FirewallState&, const FirewallState&) = default;
};

struct CommitReceipt {
  std::uint64_t generation = 0;
  Timestamp applied_at{};  // instant the generation takes effect in the filter
  bool noop = false;
};

enum class Verdict { Pass, Block };

std::string_view to_string(Verdict v);

/// First-match evaluation of `state`'s rules for a source IPv4 or MAC.
/// Sources matching no rule are blocked.
Verdict evaluate(const FirewallState& state, std::string_view source);

/// The firewall control-plane contract. Mutations are staged until
/// apply_changes(); reads observe the committed configuration.
class Firewall {
 public:
  virtual ~Firewall() = default;

  virtual Alias get_alias_by_name(std::string_view name) = 0;
  /// Union into the staged alias; returns its staged contents.
  virtual Alias add_addresses_to_alias(std::string_view name, const std::set<std::string>& addresses) = 0;
  virtual Alias remove_addresses_from_alias(std::string_view name, const std::set<std::string>& addresses) = 0;
  virtual DhcpStaticMapping upsert_dhcp_mapping(MacAddress mac, Ipv4Address ip,
                                                std::optional<std::string> hostname) = 0;
  /// Removing an unknown MAC is a no-op.
  virtual void delete_dhcp_mapping(MacAddress mac) = 0;
  virtual CommitReceipt apply_changes() = 0;
  /// Committed configuration.
  virtual FirewallState snapshot() = 0;
  virtual std::string describe() const = 0;
};

enum class ConflictKind { DualMembership, MacMismatch, IpCollision, UnknownRemoteEntry };

std::string_view to_string(ConflictKind k);

struct Conflict {
  ConflictKind kind = ConflictKind::UnknownRemoteEntry;
  std::string subject;
  std::string detail;

  friend bool operator==(const Conflict&, const Conflict&) = default;
};

struct AliasDelta {
  std::string alias;
  std::set<std::string> adds;
  std::set<std::string> removes;

  friend bool operator==(const AliasDelta&, const AliasDelta&) = default;
};

struct SyncPlan {
  std::vector<AliasDelta> alias_changes;
  std::vector<DhcpStaticMapping> mapping_upserts;
  std::vector<MacAddress> mapping_deletes;
  std::vector<Conflict> conflicts;

  bool empty() const {
    return alias_changes.empty() && mapping_upserts.empty() && mapping_deletes.empty() &&
           conflicts.empty();
  }
};

struct ReconcileOptions {
  /// MACs this orchestrator has ever registered. Remote mappings for these may
  /// be deleted; any other remote-only mapping is an UnknownRemoteEntry.
  /// Defaults to the MACs of the local mappings.
  std::optional<std::set<MacAddress>> managed_macs;
};

/// Plan that makes `remote` match `local` for the reserved aliases and the DHCP
/// mappings. Remote entries outside local authority are reported, never deleted.
SyncPlan reconcile(const FirewallState& local, const FirewallState& remote,
                   const ReconcileOptions& options = {});

/// Applies a plan to a state value (aliases missing from `state` are created).
void apply_plan(FirewallState& state, const SyncPlan& plan);

/// Stages a plan on a live firewall and commits it.
CommitReceipt apply_plan(Firewall& fw, const SyncPlan& plan);

void to_json(nlohmann::json& j, const Alias& a);
void from_json(const nlohmann::json& j, Alias& a);
void to_json(nlohmann::json& j, const DhcpStaticMapping& m);
void from_json(const nlohmann::json& j, DhcpStaticMapping& m);
void to_json(nlohmann::json& j, const FilterRule& r);
void to_json(nlohmann::json& j, const FirewallState& s);
void to_json(nlohmann::json& j, const Conflict& c);
void to_json(nlohmann::json& j, const SyncPlan& p);

}  // namespace campusguard::firewall
