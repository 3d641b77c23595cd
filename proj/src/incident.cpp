#include "campusguard/incident.hpp"

#include <fnmatch.h>

#include <fstream>
#include <set>
#include <sstream>

#include "campusguard/json_util.hpp"

namespace campusguard::incident {

using nlohmann::json;

namespace {

// Keep in sync with config/severity_policy.conf.
constexpr std::string_view kDefaultPolicy = R"(# Notice type -> severity. First matching pattern wins; shell globs allowed.
default low

HTTP::SQL_Injection_Attacker      critical
HTTP::SQL_Injection_Victim        high
SSH::Password_Guessing            high
Scan::Port_Scan                   medium
Scan::Address_Scan                medium
Scan::*                           medium
SSL::Invalid_Server_Cert          info
Weird::*                          info
)";

bool glob_match(const std::string& pattern, const std::string& text) {
  return ::fnmatch(pattern.c_str(), text.c_str(), 0) == 0;
}

}  // namespace

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Low: return "low";
    case Severity::Medium: return "medium";
    case Severity::High: return "high";
    case Severity::Critical: return "critical";
  }
  return "info";
}

std::optional<Severity> parse_severity(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto s : {Severity::Info, Severity::Low, Severity::Medium, Severity::High, Severity::Critical})
    if (to_string(s) == lower) return s;
  return std::nullopt;
}

std::string_view to_string(IncidentStatus s) {
  switch (s) {
    case IncidentStatus::New: return "new";
    case IncidentStatus::Validated: return "validated";
    case IncidentStatus::Actioned: return "actioned";
    case IncidentStatus::Dismissed: return "dismissed";
  }
  return "new";
}

std::optional<IncidentStatus> parse_status(std::string_view text) {
  for (auto s : {IncidentStatus::New, IncidentStatus::Validated, IncidentStatus::Actioned,
                 IncidentStatus::Dismissed})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

bool status_transition_allowed(IncidentStatus from, IncidentStatus to) {
  return (from == IncidentStatus::New && to == IncidentStatus::Validated) ||
         (from == IncidentStatus::Validated && to == IncidentStatus::Actioned) ||
         (from == IncidentStatus::New && to == IncidentStatus::Dismissed);
}

SeverityPolicy SeverityPolicy::parse(std::string_view text) {
  SeverityPolicy policy;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string pattern, severity, extra;
    if (!(fields >> pattern)) continue;
    if (!(fields >> severity) || (fields >> extra))
      throw Error(ErrorCode::InvalidConfig, "policy line " + std::to_string(line_no) + ": expected '<pattern> <severity>'");
    auto s = parse_severity(severity);
    if (!s) throw Error(ErrorCode::InvalidConfig, "policy line " + std::to_string(line_no) + ": unknown severity", severity);
    if (pattern == "default") policy.default_severity = *s;
    else policy.rules.push_back({pattern, *s});
  }
  return policy;
}

SeverityPolicy SeverityPolicy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigMissing, "severity policy not readable", path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

SeverityPolicy SeverityPolicy::defaults() { return parse(kDefaultPolicy); }

std::string SeverityPolicy::to_text() const {
  std::string out = "default " + std::string(to_string(default_severity)) + "\n";
  for (const auto& rule : rules) out += rule.pattern + " " + std::string(to_string(rule.severity)) + "\n";
  return out;
}

Severity classify_severity(const zeek::ZeekNotice& notice, const SeverityPolicy& policy) {
  for (const auto& rule : policy.rules)
    if (glob_match(rule.pattern, notice.note)) return rule.severity;
  return policy.default_severity;
}

std::optional<std::string> correlate(const zeek::ZeekNotice& notice, const LeaseSnapshot& leases) {
  const auto hits = leases.matching(notice.src_ip, notice.ts);
  if (hits.empty()) return std::nullopt;
  std::set<std::string> devices;
  for (const auto& h : hits) devices.insert(h.device_id);
  if (devices.size() > 1)
    throw Error(ErrorCode::AmbiguousLease, "several leases claim " + notice.src_ip.to_string(),
                format_iso8601(notice.ts));
  return hits.front().device_id;
}

ResponseAction decide_response(const IncidentRecord& incident, const DeviceStateLookup& devices) {
  if (incident.severity != Severity::Critical) return ResponseAction::none(std::string(kReasonBelowThreshold));
  if (!incident.device_id) return ResponseAction::none(std::string(kReasonNoDevice));
  const auto state = devices ? devices(*incident.device_id) : std::nullopt;
  if (state != DeviceState::Active) return ResponseAction::none(std::string(kReasonNotActive));
  return ResponseAction::block(*incident.device_id, "critical " + incident.note + " from " +
                                                        incident.src_ip.to_string());
}

void to_json(json& j, const IncidentRecord& r) {
  j = {{"id", r.incident_id},
       {"ts", jsonio::ts(r.ts)},
       {"uid", jsonio::opt(r.uid)},
       {"src_ip", r.src_ip.to_string()},
       {"dst_ip", r.dst_ip ? json(r.dst_ip->to_string()) : json(nullptr)},
       {"note", r.note},
       {"msg", r.msg},
       {"severity", to_string(r.severity)},
       {"device_id", jsonio::opt(r.device_id)},
       {"institution_id", jsonio::opt(r.institution_id)},
       {"status", to_string(r.status)},
       {"created_at", jsonio::ts(r.created_at)}};
}

void from_json(const json& j, IncidentRecord& r) {
  r.incident_id = j.value("id", "");
  r.ts = jsonio::ts(j.at("ts"));
  r.uid = jsonio::opt_str(j, "uid");
  r.src_ip = jsonio::ip(j.at("src_ip"));
  r.dst_ip = jsonio::opt_ip(j, "dst_ip");
  r.note = j.at("note").get<std::string>();
  if (r.note.empty()) throw Error(ErrorCode::SchemaViolation, "incident without note");
  r.msg = j.value("msg", "");
  auto sev = parse_severity(j.at("severity").get<std::string>());
  auto status = parse_status(j.at("status").get<std::string>());
  if (!sev || !status) throw Error(ErrorCode::SchemaViolation, "bad severity or status", j.dump());
  r.severity = *sev;
  r.status = *status;
  r.device_id = jsonio::opt_str(j, "device_id");
  r.institution_id = jsonio::opt_str(j, "institution_id");
  r.created_at = j.contains("created_at") ? jsonio::ts(j.at("created_at")) : Timestamp{};
}

BatchInterrupted::BatchInterrupted(const Error& cause, std::vector<ProcessedIncident> processed)
    : Error(cause.code(), cause.what(), cause.detail()), processed_(std::move(processed)) {}

IncidentService::IncidentService(persist::Store& store, SeverityPolicy policy, std::string institution_id,
                                 LeaseProvider leases, DeviceStateLookup devices, OpProfiler* profiler)
    : store_(store),
      policy_(std::move(policy)),
      institution_id_(std::move(institution_id)),
      leases_(std::move(leases)),
      devices_(std::move(devices)),
      profiler_(profiler) {}

std::optional<IncidentRecord> IncidentService::find_existing(const zeek::ZeekNotice& n) const {
  const auto uid = n.uid ? json(*n.uid) : json(nullptr);
  const auto ts = to_micros(n.ts);
  auto hits = store_.all(persist::kIncidents, [&](const json& r) {
    return r.value("ts", std::int64_t{0}) == ts && r.at("note") == n.note && r.at("uid") == uid;
  });
  if (hits.empty()) return std::nullopt;
  return hits.front().get<IncidentRecord>();
}

IncidentRecord IncidentService::save_incident(const zeek::ZeekNotice& notice, Severity severity,
                                              std::optional<std::string> device_id) {
  auto body = [&] {
    if (auto existing = find_existing(notice)) return *existing;
    IncidentRecord r;
    r.ts = notice.ts;
    r.uid = notice.uid;
    r.src_ip = notice.src_ip;
    r.dst_ip = notice.dst_ip;
    r.note = notice.note;
    r.msg = notice.msg;
    r.severity = severity;
    r.device_id = std::move(device_id);
    if (!institution_id_.empty()) r.institution_id = institution_id_;
    r.status = IncidentStatus::New;
    r.created_at = now();
    json record = r;
    record.erase("id");
    r.incident_id = store_.put(persist::kIncidents, std::move(record));
    return r;
  };
  if (profiler_) return profiler_->run(ops::kSaveIncident, body);
  return body();
}

IncidentRecord IncidentService::set_status(const std::string& incident_id, IncidentStatus status) {
  auto record = store_.get(persist::kIncidents, incident_id).get<IncidentRecord>();
  if (record.status == status) return record;
  if (!status_transition_allowed(record.status, status))
    throw Error(ErrorCode::IllegalTransition,
                "incident cannot go from " + std::string(to_string(record.status)) + " to " +
                    std::string(to_string(status)),
                incident_id);
  record.status = status;
  store_.put(persist::kIncidents, record);
  return record;
}

std::vector<ProcessedIncident> IncidentService::process_incidents(const std::vector<zeek::ZeekNotice>& batch) {
  auto body = [&] {
    for (const auto& n : batch) queue_.push_back(n);
    std::vector<ProcessedIncident> out;
    if (queue_.empty()) return out;

    LeaseSnapshot leases;
    try {
      if (leases_) leases = leases_();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::StorageUnavailable) throw BatchInterrupted(e, {});
      throw;
    }
    std::set<std::string> blocking;
    while (!queue_.empty()) {
      const auto& notice = queue_.front();
      try {
        const auto severity = classify_severity(notice, policy_);
        std::optional<std::string> device;
        try {
          device = correlate(notice, leases);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::AmbiguousLease) throw;
          quarantined_.push_back({0, notice.raw, std::string("ambiguous lease: ") + e.what()});
          queue_.pop_front();
          continue;
        }
        auto record = save_incident(notice, severity, device);
        auto action = decide_response(record, devices_);
        if (record.status == IncidentStatus::New && severity == Severity::Critical) {
          // Critical incidents are validated automatically.
          record = set_status(record.incident_id, IncidentStatus::Validated);
        }
        if (action.kind == ResponseKind::Block) {
          if (!blocking.insert(*action.device_id).second)
            action = ResponseAction::none(std::string(kReasonAlreadyBlocking));
        }
        out.push_back({std::move(record), std::move(action)});
        queue_.pop_front();
      } catch (const Error& e) {
        if (e.code() == ErrorCode::StorageUnavailable) throw BatchInterrupted(e, std::move(out));
        throw;
      }
    }
    return out;
  };
  if (profiler_) return profiler_->run(ops::kProcessIncidents, body);
  return body();
}

}  // namespace campusguard::incident
