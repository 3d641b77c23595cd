#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "campusguard/domain.hpp"
#include "campusguard/error.hpp"
#include "campusguard/lease.hpp"
#include "campusguard/profiler.hpp"
#include "campusguard/store.hpp"
#include "campusguard/zeek.hpp"
#include "json.hpp"

namespace campusguard::incident {

enum class Severity { Info, Low, Medium, High, Critical };

std::string_view to_string(Severity s);
std::optional<Severity> parse_severity(std::string_view text);

struct SeverityRule {
  std::string pattern;  // shell glob over the notice type, e.g. "Scan::*"
  Severity severity = Severity::Info;

  friend bool operator==(const SeverityRule&, const SeverityRule&) = default;
};

/// Ordered note-pattern rules; the first match wins, `default_severity` otherwise.
///
/// Text form, one entry per line, '#' comments allowed:
///
///     default low
///     HTTP::SQL_Injection_Attacker  critical
///     Scan::*                       medium
struct SeverityPolicy {
  std::vector<SeverityRule> rules;
  Severity default_severity = Severity::Low;

  static SeverityPolicy parse(std::string_view text);
  static SeverityPolicy load(const std::filesystem::path& path);
  /// Policy shipped in config/severity_policy.conf.
  static SeverityPolicy defaults();
  std::string to_text() const;

  friend bool operator==(const SeverityPolicy&, const SeverityPolicy&) = default;
};

enum class IncidentStatus { New, Validated, Actioned, Dismissed };

std::string_view to_string(IncidentStatus s);
std::optional<IncidentStatus> parse_status(std::string_view text);
/// New->Validated->Actioned and New->Dismissed.
bool status_transition_allowed(IncidentStatus from, IncidentStatus to);

/// A classified, device-correlated notice: one row of `zeek_incidents`.
struct IncidentRecord {
  std::string incident_id;
  Timestamp ts{};
  std::optional<std::string> uid;
  Ipv4Address src_ip;
  std::optional<Ipv4Address> dst_ip;
  std::string note;
  std::string msg;
  Severity severity = Severity::Info;
  std::optional<std::string> device_id;
  std::optional<std::string> institution_id;
  IncidentStatus status = IncidentStatus::New;
  Timestamp created_at{};

  friend bool operator==(const IncidentRecord&, const IncidentRecord&) = default;
};

void to_json(nlohmann::json& j, const IncidentRecord& r);
void from_json(const nlohmann::json& j, IncidentRecord& r);

enum class ResponseKind { None, Block };

struct ResponseAction {
  ResponseKind kind = ResponseKind::None;
  std::optional<std::string> device_id;
  std::string reason;

  static ResponseAction none(std::string reason) { return {ResponseKind::None, std::nullopt, std::move(reason)}; }
  static ResponseAction block(std::string device_id, std::string reason) {
    return {ResponseKind::Block, std::move(device_id), std::move(reason)};
  }

  friend bool operator==(const ResponseAction&, const ResponseAction&) = default;
};

inline constexpr std::string_view kReasonNoDevice = "no correlated device";
inline constexpr std::string_view kReasonBelowThreshold = "severity below critical";
inline constexpr std::string_view kReasonNotActive = "device not active";
inline constexpr std::string_view kReasonAlreadyBlocking = "already blocking";

Severity classify_severity(const zeek::ZeekNotice& notice, const SeverityPolicy& policy);

/// Device whose lease on notice.src_ip contains notice.ts. Throws
/// Error(AmbiguousLease) when more than one lease qualifies.
std::optional<std::string> correlate(const zeek::ZeekNotice& notice, const LeaseSnapshot& leases);

using DeviceStateLookup = std::function<std::optional<DeviceState>(const std::string& device_id)>;

/// Block iff Critical, correlated and the device is currently Active.
ResponseAction decide_response(const IncidentRecord& incident, const DeviceStateLookup& devices);

struct ProcessedIncident {
  IncidentRecord incident;
  ResponseAction action;
};

/// Thrown by process_incidents when storage fails mid-batch. `processed` is the
/// prefix that was persisted; the rest stays queued inside the service.
class BatchInterrupted : public Error {
 public:
  BatchInterrupted(const Error& cause, std::vector<ProcessedIncident> processed);
  const std::vector<ProcessedIncident>& processed() const noexcept { return processed_; }

 private:
  std::vector<ProcessedIncident> processed_;
};

/// Classification, correlation, persistence and response decision for the
/// notices of one institution's sensor. Single worker; not thread-safe.
class IncidentService {
 public:
  using LeaseProvider = std::function<LeaseSnapshot()>;

  IncidentService(persist::Store& store, SeverityPolicy policy, std::string institution_id,
                  LeaseProvider leases, DeviceStateLookup devices, OpProfiler* profiler = nullptr);

  /// Persists a New incident; replaying the same (uid, ts, note) returns the stored row.
  IncidentRecord save_incident(const zeek::ZeekNotice& notice, Severity severity,
                               std::optional<std::string> device_id);

  /// classify -> correlate -> save -> decide for each notice, in order. Notices
  /// left over from an earlier storage outage are processed first.
  std::vector<ProcessedIncident> process_incidents(const std::vector<zeek::ZeekNotice>& batch);

  IncidentRecord set_status(const std::string& incident_id, IncidentStatus status);

  const std::vector<zeek::ParseQuarantine>& quarantined() const noexcept { return quarantined_; }
  std::size_t queued() const noexcept { return queue_.size(); }
  const SeverityPolicy& policy() const noexcept { return policy_; }

 private:
  std::optional<IncidentRecord> find_existing(const zeek::ZeekNotice& notice) const;

  persist::Store& store_;
  SeverityPolicy policy_;
  std::string institution_id_;
  LeaseProvider leases_;
  DeviceStateLookup devices_;
  OpProfiler* profiler_;
  std::deque<zeek::ZeekNotice> queue_;
  std::vector<zeek::ParseQuarantine> quarantined_;
};

}  // namespace campusguard::incident
