#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "campusguard/domain.hpp"
#include "campusguard/error.hpp"
#include "campusguard/firewall.hpp"
#include "campusguard/zeek.hpp"
#include "json.hpp"

namespace campusguard::harness {

enum class AttackProfile { SqlInjection, PortScan, None };
enum class FirewallTransport { InProcess, Http };
enum class ReportFormat { Table, Records };

std::string_view to_string(AttackProfile p);
std::optional<AttackProfile> parse_attack_profile(std::string_view text);
std::optional<ReportFormat> parse_report_format(std::string_view text);

/// One scenario definition. Durations are in seconds.
struct ScenarioConfig {
  int device_count = 1;
  AttackProfile attack_profile = AttackProfile::SqlInjection;
  std::map<std::string, double> op_delays;  // keyed by the six pipeline operation names
  double probe_interval = 0.5;
  int repetitions = 1;
  std::uint64_t seed = 1;

  double detection_delay = 0;    // attack start to first notice
  double activation_delay = 0;   // firewall commit to enforcement
  int notices_per_attack = 1;
  double poll_interval = 0.01;   // pipeline tail poll
  double probe_horizon = 60;     // give up on loss of access after this long
  FirewallTransport firewall_transport = FirewallTransport::InProcess;

  /// Throws Error(InvalidConfig).
  void validate() const;
  static ScenarioConfig load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const ScenarioConfig& c);
void from_json(const nlohmann::json& j, ScenarioConfig& c);

struct AttackEvent {
  std::string device_id;
  Timestamp started_at{};
  AttackProfile profile = AttackProfile::None;
  int emitted_notices = 0;
  std::vector<zeek::ZeekNotice> notices;
};

/// Appends notices to a file in sensor log format. Thread-safe.
class NoticeLog {
 public:
  explicit NoticeLog(std::filesystem::path path);
  void write_header();
  void append(const zeek::ZeekNotice& notice);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  zeek::NoticeSchema schema_;
  std::mutex mu_;
};

/// Records the attack start, waits `detection_delay`, then writes
/// `notices` synthetic notices sourced at the device address.
/// Throws Error(DeviceNotActive) unless the device is Active.
AttackEvent inject_attack(const Device& device, AttackProfile profile, NoticeLog& sink,
                          std::chrono::microseconds detection_delay, int notices, std::mt19937_64& rng);

/// Samples `probe` every `interval` and returns when the first Block follows
/// a Pass. Throws Error(ProbeTimeout) after `horizon`, or when cancelled.
Timestamp probe_connectivity(const std::function<firewall::Verdict()>& probe, std::chrono::microseconds interval,
                             std::chrono::microseconds horizon, const std::atomic<bool>* cancel = nullptr);

inline constexpr const char* kMetricNames[] = {"ttd", "processing", "ttb", "loss", "total"};

struct Metrics {
  double ttd = 0;         // notice ts - attack start
  double processing = 0;  // block decision - notice ts
  double ttb = 0;         // firewall activation - decision
  double loss = 0;        // observed loss of access - activation
  double total = 0;       // observed loss of access - attack start

  double get(std::string_view name) const;
  double residual() const { return total - (ttd + processing + ttb + loss); }
};

struct RepetitionReport {
  int index = 0;
  std::optional<AttackEvent> attack;
  std::vector<std::string> blocked_devices;
  std::optional<Metrics> metrics;
  std::map<std::string, double> op_seconds;  // exclusive time per pipeline operation
  std::optional<std::string> feedback_id;
  bool safety_ok = true;
  std::string safety_detail;
  std::size_t active_devices = 0;  // Active at the end of the repetition
  double wall_seconds = 0;
  std::vector<std::string> events;  // phase log without timestamps
};

struct Stat {
  double mean = 0;
  double min = 0;
  double max = 0;
  std::size_t n = 0;

  friend bool operator==(const Stat&, const Stat&) = default;
};

struct LatencySummary {
  std::map<std::string, Stat> metrics;
  std::map<std::string, Stat> ops;
  double jitter_bound = 0;
  double max_residual = 0;
  double op_sum = 0;  // sum of mean per-operation times

  friend bool operator==(const LatencySummary&, const LatencySummary&) = default;
};

struct LatencyReport {
  ScenarioConfig config;
  std::vector<RepetitionReport> repetitions;
  /// Declared bound on |total - (ttd + processing + ttb + loss)|.
  double jitter_bound = 0;

  LatencySummary summary() const;
};

class ScenarioFailed : public Error {
 public:
  ScenarioFailed(std::string phase, std::string message, LatencyReport partial);
  const std::string& phase() const noexcept { return phase_; }
  const LatencyReport& partial() const noexcept { return partial_; }

 private:
  std::string phase_;
  LatencyReport partial_;
};

/// Runs every repetition: provision, attack, detect, respond, measure.
/// Throws ScenarioFailed naming the phase that failed.
LatencyReport run_scenario(const ScenarioConfig& config);

std::string render_report(const LatencyReport& report, ReportFormat format);
/// Inverse of the Records format.
LatencySummary parse_records(std::string_view text);

}  // namespace campusguard::harness
