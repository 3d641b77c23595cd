#include "campusguard/domain.hpp"

#include <algorithm>

#include "campusguard/error.hpp"
#include "campusguard/json_util.hpp"

namespace campusguard {

std::string_view to_string(DeviceState s) {
  switch (s) {
    case DeviceState::Pending: return "pending";
    case DeviceState::Approved: return "approved";
    case DeviceState::Active: return "active";
    case DeviceState::Blocked: return "blocked";
    case DeviceState::Revoked: return "revoked";
  }
  return "pending";
}

std::string_view to_string(LifecycleEvent e) {
  switch (e) {
    case LifecycleEvent::Approve: return "approve";
    case LifecycleEvent::Activate: return "activate";
    case LifecycleEvent::Block: return "block";
    case LifecycleEvent::Unblock: return "unblock";
    case LifecycleEvent::Revoke: return "revoke";
  }
  return "approve";
}

std::string_view to_string(RoleKind r) {
  switch (r) {
    case RoleKind::Regular: return "regular";
    case RoleKind::Admin: return "admin";
    case RoleKind::Superuser: return "superuser";
    case RoleKind::System: return "system";
  }
  return "regular";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::ReadDevice: return "read_device";
    case Action::WriteDevice: return "write_device";
    case Action::Approve: return "approve";
    case Action::Block: return "block";
    case Action::Unblock: return "unblock";
    case Action::ReadIncidents: return "read_incidents";
    case Action::ManageInstitutions: return "manage_institutions";
    case Action::ManageFirewall: return "manage_firewall";
  }
  return "read_device";
}

std::optional<DeviceState> parse_device_state(std::string_view text) {
  for (auto s : kAllStates)
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::optional<LifecycleEvent> parse_lifecycle_event(std::string_view text) {
  for (auto e : kAllEvents)
    if (to_string(e) == text) return e;
  return std::nullopt;
}

std::optional<RoleKind> parse_role(std::string_view text) {
  for (auto r : {RoleKind::Regular, RoleKind::Admin, RoleKind::Superuser, RoleKind::System})
    if (to_string(r) == text) return r;
  return std::nullopt;
}

bool Principal::in_scope(std::string_view institution_id) const {
  return institutions.count(std::string(institution_id)) > 0;
}

Principal Principal::system() { return Principal{"system:responder", RoleKind::System, {}}; }

Decision authorize(const Principal& actor, Action action, const ResourceRef& target) {
  auto allow = [](bool ok) { return ok ? Decision::Allow : Decision::Deny; };
  switch (actor.role) {
    case RoleKind::System:
      // The automatic responder may only block; it spans every institution.
      return allow(action == Action::Block);
    case RoleKind::Regular:
      if (actor.institutions.size() != 1 || !actor.in_scope(target.institution_id)) return Decision::Deny;
      if (action != Action::ReadDevice && action != Action::WriteDevice) return Decision::Deny;
      return allow(target.owner_id && *target.owner_id == actor.subject);
    case RoleKind::Admin:
      if (actor.institutions.size() != 1 || !actor.in_scope(target.institution_id)) return Decision::Deny;
      return allow(action != Action::ManageInstitutions);
    case RoleKind::Superuser:
      return allow(!actor.institutions.empty() && actor.in_scope(target.institution_id));
  }
  return Decision::Deny;
}

Action required_action(LifecycleEvent event) {
  switch (event) {
    case LifecycleEvent::Approve:
    case LifecycleEvent::Activate:
    case LifecycleEvent::Revoke:  // admin removal, gated like approval
      return Action::Approve;
    case LifecycleEvent::Block: return Action::Block;
    case LifecycleEvent::Unblock: return Action::Unblock;
  }
  return Action::Approve;
}

std::optional<DeviceState> next_state(DeviceState from, LifecycleEvent event) {
  using S = DeviceState;
  using E = LifecycleEvent;
  if (event == E::Revoke) {
    if (from == S::Revoked) return std::nullopt;
    return S::Revoked;
  }
  if (from == S::Pending && event == E::Approve) return S::Approved;
  if (from == S::Approved && event == E::Activate) return S::Active;
  if (from == S::Active && event == E::Block) return S::Blocked;
  if (from == S::Blocked && event == E::Unblock) return S::Active;
  return std::nullopt;
}

TransitionResult transition_device(const Device& device, LifecycleEvent event,
                                   const Principal& actor, Timestamp at) {
  const ResourceRef target{device.institution_id, device.owner_id};
  if (authorize(actor, required_action(event), target) == Decision::Deny) {
    throw Error(ErrorCode::Unauthorized,
                std::string(to_string(actor.role)) + " may not " + std::string(to_string(event)),
                device.device_id);
  }
  const auto to = next_state(device.state, event);
  if (!to) {
    throw Error(ErrorCode::IllegalTransition,
                std::string(to_string(event)) + " is not legal from " +
                    std::string(to_string(device.state)),
                device.device_id);
  }
  if ((*to == DeviceState::Active || *to == DeviceState::Blocked) && !device.ip) {
    throw Error(ErrorCode::IllegalTransition, "device has no assigned address", device.device_id);
  }

  TransitionResult result{device, {}};
  result.device.state = *to;
  result.device.updated_at = std::max(at, device.updated_at);
  result.audit.at = result.device.updated_at;
  result.audit.actor = actor.subject;
  result.audit.action = std::string("device.") + std::string(to_string(event));
  result.audit.target = device.device_id;
  result.audit.detail =
      std::string(to_string(device.state)) + "->" + std::string(to_string(*to));
  return result;
}

void to_json(nlohmann::json& j, const Principal& p) {
  j = {{"subject", p.subject}, {"role", to_string(p.role)}, {"institutions", p.institutions}};
}

void from_json(const nlohmann::json& j, Principal& p) {
  p.subject = j.at("subject").get<std::string>();
  auto role = parse_role(j.at("role").get<std::string>());
  if (!role) throw Error(ErrorCode::SchemaViolation, "unknown role", j.at("role").dump());
  p.role = *role;
  p.institutions = j.value("institutions", std::set<std::string>{});
}

void to_json(nlohmann::json& j, const Institution& i) {
  j = {{"institution_id", i.institution_id},
       {"name", i.name},
       {"network_profile",
        {{"endpoint", i.network_profile.endpoint},
         {"credential_ref", i.network_profile.credential_ref},
         {"interface", i.network_profile.interface_name}}}};
}

void from_json(const nlohmann::json& j, Institution& i) {
  i.institution_id = j.at("institution_id").get<std::string>();
  i.name = j.value("name", i.institution_id);
  const auto& np = j.at("network_profile");
  i.network_profile.endpoint = np.at("endpoint").get<std::string>();
  i.network_profile.credential_ref = np.value("credential_ref", "");
  i.network_profile.interface_name = np.value("interface", "lan");
  if (i.institution_id.empty() || i.network_profile.endpoint.empty())
    throw Error(ErrorCode::SchemaViolation, "institution needs an id and a firewall endpoint");
}

void to_json(nlohmann::json& j, const Device& d) {
  j = {{"id", d.device_id},
       {"mac", d.mac.to_string()},
       {"ip", d.ip ? nlohmann::json(d.ip->to_string()) : nlohmann::json(nullptr)},
       {"owner_id", d.owner_id},
       {"institution_id", d.institution_id},
       {"name", d.name},
       {"state", to_string(d.state)},
       {"created_at", jsonio::ts(d.created_at)},
       {"updated_at", jsonio::ts(d.updated_at)},
       {"registration_pending", d.registration_pending}};
  if (d.block_pending) {
    const auto& b = *d.block_pending;
    j["block_pending"] = {{"actor", b.actor},
                          {"reason", b.reason},
                          {"incident_id", jsonio::opt(b.incident_id)},
                          {"t_notice", jsonio::opt_ts(b.t_notice)},
                          {"t_attack_start", jsonio::opt_ts(b.t_attack_start)}};
  } else {
    j["block_pending"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, Device& d) {
  d.device_id = j.at("id").get<std::string>();
  d.mac = jsonio::mac(j.at("mac"));
  d.ip = jsonio::opt_ip(j, "ip");
  d.owner_id = j.at("owner_id").get<std::string>();
  d.institution_id = j.at("institution_id").get<std::string>();
  d.name = j.value("name", "");
  auto state = parse_device_state(j.at("state").get<std::string>());
  if (!state) throw Error(ErrorCode::SchemaViolation, "unknown device state", j.at("state").dump());
  d.state = *state;
  d.created_at = jsonio::ts(j.at("created_at"));
  d.updated_at = jsonio::ts(j.at("updated_at"));
  d.registration_pending = j.value("registration_pending", false);
  d.block_pending.reset();
  if (auto it = j.find("block_pending"); it != j.end() && !it->is_null()) {
    PendingBlock b;
    b.actor = it->at("actor").get<std::string>();
    b.reason = it->value("reason", "");
    b.incident_id = jsonio::opt_str(*it, "incident_id");
    b.t_notice = jsonio::opt_ts(*it, "t_notice");
    b.t_attack_start = jsonio::opt_ts(*it, "t_attack_start");
    d.block_pending = std::move(b);
  }
}

void to_json(nlohmann::json& j, const AuditEntry& a) {
  j = {{"id", a.audit_id},    {"created_at", jsonio::ts(a.at)}, {"actor", a.actor},
       {"action", a.action}, {"target", a.target},            {"detail", a.detail}};
}

void from_json(const nlohmann::json& j, AuditEntry& a) {
  a.audit_id = j.value("id", "");
  a.at = jsonio::ts(j.at("created_at"));
  a.actor = j.at("actor").get<std::string>();
  a.action = j.at("action").get<std::string>();
  a.target = j.value("target", "");
  a.detail = j.value("detail", "");
}

}  // namespace campusguard
