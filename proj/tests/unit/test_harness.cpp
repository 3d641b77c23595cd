#include <atomic>
#include <random>
#include <thread>

#include "campusguard/error.hpp"
#include "campusguard/harness.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace campusguard;
using namespace campusguard::harness;

namespace {

ScenarioConfig fast(AttackProfile profile = AttackProfile::SqlInjection) {
  ScenarioConfig c;
  c.attack_profile = profile;
  c.probe_interval = 0.002;
  c.poll_interval = 0.002;
  c.probe_horizon = 5;
  c.seed = 7;
  return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("a zero-delay SQL injection run blocks the attacker and decomposes exactly") {
  auto cfg = fast();
  cfg.device_count = 3;
  const auto report = run_scenario(cfg);
  REQUIRE(report.repetitions.size() == 1);
  const auto& rep = report.repetitions[0];
  CHECK_MESSAGE(rep.safety_ok, rep.safety_detail);
  REQUIRE(rep.attack);
  CHECK(rep.blocked_devices == std::vector<std::string>{rep.attack->device_id});
  CHECK(rep.active_devices == 2);
  REQUIRE(rep.metrics);
  const auto& m = *rep.metrics;
  for (const char* name : kMetricNames) CHECK(m.get(name) >= 0);
  CHECK(std::abs(m.residual()) <= report.jitter_bound);
  CHECK(m.total < 1.0);
  // The prober samples every interval, so loss after activation is at most one interval late.
  CHECK(m.loss <= cfg.probe_interval + 0.05);
}

TEST_CASE("no attack means no blocks") {
  const auto report = run_scenario(fast(AttackProfile::None));
  const auto& rep = report.repetitions.at(0);
  CHECK(rep.blocked_devices.empty());
  CHECK(rep.safety_ok);
  CHECK_FALSE(rep.metrics);
  CHECK(rep.active_devices == 1);
}

TEST_CASE("a port scan is recorded but not blocked") {
  const auto report = run_scenario(fast(AttackProfile::PortScan));
  CHECK(report.repetitions.at(0).blocked_devices.empty());
  CHECK(report.repetitions.at(0).safety_ok);
}

TEST_CASE("several notices for one attack yield a single block") {
  auto cfg = fast();
  cfg.notices_per_attack = 3;
  const auto report = run_scenario(cfg);
  const auto& rep = report.repetitions.at(0);
  CHECK(rep.blocked_devices.size() == 1);
  CHECK_MESSAGE(rep.safety_ok, rep.safety_detail);
}

TEST_CASE("scenarios over the HTTP firewall transport agree with in-process ones") {
  auto cfg = fast();
  cfg.firewall_transport = FirewallTransport::Http;
  const auto rep = run_scenario(cfg).repetitions.at(0);
  CHECK_MESSAGE(rep.safety_ok, rep.safety_detail);
  CHECK(rep.blocked_devices.size() == 1);
}

TEST_CASE("the same seed replays the same event sequence") {
  auto cfg = fast();
  cfg.device_count = 4;
  cfg.repetitions = 2;
  const auto a = run_scenario(cfg);
  const auto b = run_scenario(cfg);
  REQUIRE(a.repetitions.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a.repetitions[i].events == b.repetitions[i].events);
  cfg.seed = 8;
  CHECK(run_scenario(cfg).repetitions[0].events != a.repetitions[0].events);
}

TEST_CASE("configured operation delays show up in the per-operation times") {
  auto cfg = fast();
  for (auto op : ops::kAll) cfg.op_delays[std::string(op)] = 0.02;
  const auto rep = run_scenario(cfg).repetitions.at(0);
  for (auto op : ops::kAll) {
    const auto t = rep.op_seconds.at(std::string(op));
    CHECK_MESSAGE(t >= 0.02, op);
    CHECK_MESSAGE(t < 0.02 + 0.05, op);
  }
}

TEST_CASE("probe returns within one interval of the flip") {
  std::atomic<bool> pass{true};
  const auto interval = std::chrono::milliseconds(10);
  std::thread flip([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(55));
    pass = false;
  });
  const auto flipped_by = now() + std::chrono::milliseconds(55);
  const auto at = probe_connectivity([&] { return pass ? firewall::Verdict::Pass : firewall::Verdict::Block; },
                                     interval, std::chrono::seconds(2));
  flip.join();
  CHECK(at >= flipped_by - std::chrono::milliseconds(1));
  CHECK(at - flipped_by <= interval + std::chrono::milliseconds(5));
}

TEST_CASE("probe times out when access is never lost") {
  CHECK(code_of([] {
          probe_connectivity([] { return firewall::Verdict::Pass; }, std::chrono::milliseconds(5),
                             std::chrono::milliseconds(50));
        }) == ErrorCode::ProbeTimeout);
  // A target that never passed cannot lose access either.
  CHECK(code_of([] {
          probe_connectivity([] { return firewall::Verdict::Block; }, std::chrono::milliseconds(5),
                             std::chrono::milliseconds(50));
        }) == ErrorCode::ProbeTimeout);
}

TEST_CASE("attacks require an active device") {
  const auto dir = fixtures::temp_dir("harness");
  NoticeLog log(dir / "notice.log");
  log.write_header();
  Device d;
  d.device_id = "dev-1";
  d.state = DeviceState::Approved;
  d.ip = Ipv4Address::parse("192.168.1.50");
  std::mt19937_64 rng(1);
  CHECK(code_of([&] { inject_attack(d, AttackProfile::SqlInjection, log, {}, 1, rng); }) == ErrorCode::DeviceNotActive);
  d.state = DeviceState::Active;
  const auto ev = inject_attack(d, AttackProfile::SqlInjection, log, {}, 2, rng);
  CHECK(ev.emitted_notices == 2);
  CHECK(ev.notices[0].note == "HTTP::SQL_Injection_Attacker");
  CHECK(ev.notices[0].ts >= ev.started_at);
  std::filesystem::remove_all(dir);
}

TEST_CASE("records output parses back to the same summary") {
  auto cfg = fast();
  cfg.repetitions = 2;
  const auto report = run_scenario(cfg);
  CHECK(parse_records(render_report(report, ReportFormat::Records)) == report.summary());
  const auto table = render_report(report, ReportFormat::Table);
  CHECK(table.find("Total response") != std::string::npos);
  CHECK(table.find("apply_changes_firewall") != std::string::npos);
}

TEST_CASE("an empty report renders headers only") {
  LatencyReport empty;
  empty.jitter_bound = 0.5;
  const auto records = render_report(empty, ReportFormat::Records);
  CHECK(std::count(records.begin(), records.end(), '\n') == 1);
  CHECK(parse_records(records) == empty.summary());
  const auto table = render_report(empty, ReportFormat::Table);
  CHECK(table.find("operation") != std::string::npos);
  CHECK(table.find("Total response") == std::string::npos);
  CHECK_THROWS_AS(parse_records("not json\n"), Error);
}

TEST_CASE("scenario configs validate and round-trip") {
  auto cfg = fast();
  cfg.op_delays["get_logs"] = 1.5;
  const nlohmann::json j = cfg;
  const auto back = j.get<ScenarioConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(code_of([] { nlohmann::json{{"bogus", 1}}.get<ScenarioConfig>(); }) == ErrorCode::InvalidConfig);
  auto bad = cfg;
  bad.op_delays["teleport"] = 1;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
  bad = cfg;
  bad.probe_interval = 0;
  CHECK(code_of([&] { run_scenario(bad); }) == ErrorCode::InvalidConfig);
  const auto shipped = ScenarioConfig::load(std::filesystem::path(CG_SOURCE_DIR) / "config" / "scenario_default.json");
  CHECK(shipped.op_delays.size() == 6);
  CHECK(shipped.detection_delay == doctest::Approx(12.1));
}
