#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "campusguard/types.hpp"
#include "json.hpp"

namespace campusguard {

enum class DeviceState { Pending, Approved, Active, Blocked, Revoked };
enum class LifecycleEvent { Approve, Activate, Block, Unblock, Revoke };
enum class RoleKind { Regular, Admin, Superuser, System };

inline constexpr DeviceState kAllStates[] = {DeviceState::Pending, DeviceState::Approved,
                                             DeviceState::Active, DeviceState::Blocked,
                                             DeviceState::Revoked};
inline constexpr LifecycleEvent kAllEvents[] = {LifecycleEvent::Approve, LifecycleEvent::Activate,
                                                LifecycleEvent::Block, LifecycleEvent::Unblock,
                                                LifecycleEvent::Revoke};

std::string_view to_string(DeviceState s);
std::string_view to_string(LifecycleEvent e);
std::string_view to_string(RoleKind r);
std::optional<DeviceState> parse_device_state(std::string_view text);
std::optional<LifecycleEvent> parse_lifecycle_event(std::string_view text);
std::optional<RoleKind> parse_role(std::string_view text);

/// An authenticated actor: a user with a role and institution scope, or the
/// automatic responder (RoleKind::System).
struct Principal {
  std::string subject;
  RoleKind role = RoleKind::Regular;
  std::set<std::string> institutions;

  bool in_scope(std::string_view institution_id) const;
  static Principal system();

  friend bool operator==(const Principal&, const Principal&) = default;
};

struct NetworkProfile {
  std::string endpoint;
  std::string credential_ref;
  std::string interface_name = "lan";

  friend bool operator==(const NetworkProfile&, const NetworkProfile&) = default;
};

struct Institution {
  std::string institution_id;
  std::string name;
  NetworkProfile network_profile;

  friend bool operator==(const Institution&, const Institution&) = default;
};

/// Block that was decided but not yet committed to the firewall.
struct PendingBlock {
  std::string actor;
  std::string reason;
  std::optional<std::string> incident_id;
  std::optional<Timestamp> t_notice;
  std::optional<Timestamp> t_attack_start;

  friend bool operator==(const PendingBlock&, const PendingBlock&) = default;
};

struct Device {
  std::string device_id;
  MacAddress mac;
  std::optional<Ipv4Address> ip;
  std::string owner_id;
  std::string institution_id;
  std::string name;
  DeviceState state = DeviceState::Pending;
  Timestamp created_at{};
  Timestamp updated_at{};
  // Firewall registration committed locally but not yet on the firewall.
  bool registration_pending = false;
  std::optional<PendingBlock> block_pending;

  friend bool operator==(const Device&, const Device&) = default;
};

struct AuditEntry {
  std::string audit_id;
  Timestamp at{};
  std::string actor;
  std::string action;
  std::string target;
  std::string detail;

  friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

struct TransitionResult {
  Device device;
  AuditEntry audit;
};

enum class Action {
  ReadDevice,
  WriteDevice,
  Approve,
  Block,
  Unblock,
  ReadIncidents,
  ManageInstitutions,
  ManageFirewall,
};

inline constexpr Action kAllActions[] = {Action::ReadDevice,    Action::WriteDevice,
                                         Action::Approve,       Action::Block,
                                         Action::Unblock,       Action::ReadIncidents,
                                         Action::ManageInstitutions, Action::ManageFirewall};

std::string_view to_string(Action a);

/// What an action is aimed at. owner_id is set for device resources.
struct ResourceRef {
  std::string institution_id;
  std::optional<std::string> owner_id;
};

enum class Decision { Allow, Deny };

/// Pure authorization predicate over (actor, action, target).
Decision authorize(const Principal& actor, Action action, const ResourceRef& target);

/// The action an actor must be allowed to perform to fire a lifecycle event.
Action required_action(LifecycleEvent event);

/// Target state for a legal (state, event) pair; nullopt when illegal.
std::optional<DeviceState> next_state(DeviceState from, LifecycleEvent event);

/// Applies a lifecycle event. Throws Error(Unauthorized) when the actor lacks
/// rights (checked first) and Error(IllegalTransition) when the event is not
/// legal from the current state. The input device is never modified.
TransitionResult transition_device(const Device& device, LifecycleEvent event,
                                   const Principal& actor, Timestamp at = now());

void to_json(nlohmann::json& j, const Principal& p);
void from_json(const nlohmann::json& j, Principal& p);
void to_json(nlohmann::json& j, const Institution& i);
void from_json(const nlohmann::json& j, Institution& i);
void to_json(nlohmann::json& j, const Device& d);
void from_json(const nlohmann::json& j, Device& d);
void to_json(nlohmann::json& j, const AuditEntry& a);
void from_json(const nlohmann::json& j, AuditEntry& a);

}  // namespace campusguard
