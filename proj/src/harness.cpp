#include "campusguard/harness.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "campusguard/firewall_server.hpp"
#include "campusguard/incident.hpp"
#include "campusguard/pfsense_client.hpp"
#include "campusguard/pipeline.hpp"
#include "campusguard/profiler.hpp"
#include "campusguard/registry.hpp"
#include "campusguard/simulated_firewall.hpp"
#include "campusguard/store.hpp"

namespace campusguard::harness {

using nlohmann::json;
using std::chrono::duration_cast;
using std::chrono::microseconds;

namespace {

constexpr const char* kInstitution = "inst-lab";
constexpr const char* kProbeKey = "scenario-key";

microseconds secs(double s) { return microseconds(static_cast<std::int64_t>(std::llround(s * 1e6))); }

std::string_view transport_name(FirewallTransport t) { return t == FirewallTransport::Http ? "http" : "in_process"; }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace

std::string_view to_string(AttackProfile p) {
  switch (p) {
    case AttackProfile::SqlInjection: return "sql_injection";
    case AttackProfile::PortScan: return "port_scan";
    case AttackProfile::None: return "none";
  }
  return "none";
}

std::optional<AttackProfile> parse_attack_profile(std::string_view text) {
  for (auto p : {AttackProfile::SqlInjection, AttackProfile::PortScan, AttackProfile::None})
    if (to_string(p) == text) return p;
  return std::nullopt;
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  if (text == "table") return ReportFormat::Table;
  if (text == "records") return ReportFormat::Records;
  return std::nullopt;
}

// ---- configuration ----------------------------------------------------------

void ScenarioConfig::validate() const {
  auto bad = [](const std::string& what) { return Error(ErrorCode::InvalidConfig, "scenario: " + what); };
  if (device_count < 1 || device_count > 200) throw bad("device_count must be 1..200");
  if (repetitions < 1) throw bad("repetitions must be >= 1");
  if (!(probe_interval > 0)) throw bad("probe_interval must be > 0");
  if (!(poll_interval > 0)) throw bad("poll_interval must be > 0");
  if (!(probe_horizon > 0)) throw bad("probe_horizon must be > 0");
  if (detection_delay < 0 || activation_delay < 0) throw bad("delays must be >= 0");
  if (notices_per_attack < 1) throw bad("notices_per_attack must be >= 1");
  for (const auto& [op, d] : op_delays) {
    if (!ops::is_pipeline_op(op)) throw bad("unknown operation '" + op + "'");
    if (!(d >= 0)) throw bad("delay of '" + op + "' must be >= 0");
  }
}

void to_json(json& j, const ScenarioConfig& c) {
  j = {{"device_count", c.device_count},
       {"attack_profile", to_string(c.attack_profile)},
       {"op_delays", c.op_delays},
       {"probe_interval", c.probe_interval},
       {"repetitions", c.repetitions},
       {"seed", c.seed},
       {"detection_delay", c.detection_delay},
       {"activation_delay", c.activation_delay},
       {"notices_per_attack", c.notices_per_attack},
       {"poll_interval", c.poll_interval},
       {"probe_horizon", c.probe_horizon},
       {"firewall_transport", transport_name(c.firewall_transport)}};
}

void from_json(const json& j, ScenarioConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "scenario config must be an object");
  static const std::set<std::string> known = {
      "device_count",     "attack_profile",     "op_delays",     "probe_interval",
      "repetitions",      "seed",               "detection_delay", "activation_delay",
      "notices_per_attack", "poll_interval",    "probe_horizon", "firewall_transport"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw Error(ErrorCode::InvalidConfig, "scenario: unknown key '" + k + "'");
  try {
    ScenarioConfig d;
    c.device_count = j.value("device_count", d.device_count);
    const auto profile = j.value("attack_profile", std::string(to_string(d.attack_profile)));
    auto p = parse_attack_profile(profile);
    if (!p) throw Error(ErrorCode::InvalidConfig, "scenario: unknown attack_profile '" + profile + "'");
    c.attack_profile = *p;
    c.op_delays = j.value("op_delays", std::map<std::string, double>{});
    c.probe_interval = j.value("probe_interval", d.probe_interval);
    c.repetitions = j.value("repetitions", d.repetitions);
    c.seed = j.value("seed", d.seed);
    c.detection_delay = j.value("detection_delay", d.detection_delay);
    c.activation_delay = j.value("activation_delay", d.activation_delay);
    c.notices_per_attack = j.value("notices_per_attack", d.notices_per_attack);
    c.poll_interval = j.value("poll_interval", d.poll_interval);
    c.probe_horizon = j.value("probe_horizon", d.probe_horizon);
    const auto transport = j.value("firewall_transport", std::string("in_process"));
    if (transport == "in_process") c.firewall_transport = FirewallTransport::InProcess;
    else if (transport == "http") c.firewall_transport = FirewallTransport::Http;
    else throw Error(ErrorCode::InvalidConfig, "scenario: unknown firewall_transport '" + transport + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("scenario: ") + e.what());
  }
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigMissing, "cannot open scenario config", path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, "scenario config is not JSON", path.string());
  auto c = j.get<ScenarioConfig>();
  c.validate();
  return c;
}

// ---- attack synthesis and probing -------------------------------------------

NoticeLog::NoticeLog(std::filesystem::path path) : path_(std::move(path)), schema_(zeek::NoticeSchema::standard()) {}

void NoticeLog::write_header() {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::trunc);
  for (const auto& line : zeek::format_header(schema_)) out << line << '\n';
  if (!out) throw Error(ErrorCode::SourceUnavailable, "cannot write notice log", path_.string());
}

void NoticeLog::append(const zeek::ZeekNotice& notice) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << zeek::format_notice_line(notice, schema_) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::SourceUnavailable, "cannot append to notice log", path_.string());
}

AttackEvent inject_attack(const Device& device, AttackProfile profile, NoticeLog& sink, microseconds detection_delay,
                          int notices, std::mt19937_64& rng) {
  if (device.state != DeviceState::Active || !device.ip)
    throw Error(ErrorCode::DeviceNotActive, "attacker must be an active device", device.device_id);
  AttackEvent ev;
  ev.device_id = device.device_id;
  ev.profile = profile;
  ev.started_at = now();
  if (profile == AttackProfile::None) return ev;

  std::this_thread::sleep_for(detection_delay);
  const auto ts = now();
  for (int i = 0; i < notices; ++i) {
    zeek::ZeekNotice n;
    n.ts = ts;
    char uid[24];
    std::snprintf(uid, sizeof uid, "C%016llx", static_cast<unsigned long long>(rng()));
    n.uid = uid;
    n.src_ip = *device.ip;
    n.src_port = static_cast<std::uint16_t>(40000 + rng() % 20000);
    if (profile == AttackProfile::SqlInjection) {
      n.dst_ip = Ipv4Address::parse("10.10.0.80");
      n.dst_port = 80;
      n.note = "HTTP::SQL_Injection_Attacker";
      n.msg = "An SQL injection attacker was discovered!";
    } else {
      n.dst_ip = Ipv4Address::parse("10.10.0.1");
      n.note = "Scan::Port_Scan";
      n.msg = "scanned at least 15 unique ports of host 10.10.0.1";
    }
    sink.append(n);
    ev.notices.push_back(std::move(n));
  }
  ev.emitted_notices = notices;
  return ev;
}

Timestamp probe_connectivity(const std::function<firewall::Verdict()>& probe, microseconds interval,
                             microseconds horizon, const std::atomic<bool>* cancel) {
  if (interval.count() <= 0) throw Error(ErrorCode::InvalidRequest, "probe interval must be positive");
  const auto start = std::chrono::steady_clock::now();
  bool passed = false;
  for (std::int64_t k = 0;; ++k) {
    const auto tick = start + k * interval;
    if (tick - start > horizon) break;
    std::this_thread::sleep_until(tick);
    if (cancel && cancel->load()) break;
    const auto verdict = probe();
    const auto at = now();
    if (verdict == firewall::Verdict::Pass) passed = true;
    else if (passed) return at;
  }
  throw Error(ErrorCode::ProbeTimeout, "no loss of access observed", passed ? "target kept passing" : "never passed");
}

// ---- report -----------------------------------------------------------------

double Metrics::get(std::string_view name) const {
  if (name == "ttd") return ttd;
  if (name == "processing") return processing;
  if (name == "ttb") return ttb;
  if (name == "loss") return loss;
  if (name == "total") return total;
  throw Error(ErrorCode::InvalidRequest, "unknown metric", std::string(name));
}

namespace {

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0;
  s.min = xs.front();
  s.max = xs.front();
  for (double x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  return s;
}

}  // namespace

LatencySummary LatencyReport::summary() const {
  LatencySummary s;
  s.jitter_bound = jitter_bound;
  for (const char* name : kMetricNames) {
    std::vector<double> xs;
    for (const auto& r : repetitions)
      if (r.metrics) xs.push_back(r.metrics->get(name));
    s.metrics[name] = stat_of(xs);
  }
  for (auto op : ops::kAll) {
    std::vector<double> xs;
    for (const auto& r : repetitions) {
      if (!r.metrics) continue;
      auto it = r.op_seconds.find(std::string(op));
      xs.push_back(it == r.op_seconds.end() ? 0.0 : it->second);
    }
    s.ops[std::string(op)] = stat_of(xs);
    s.op_sum += s.ops[std::string(op)].mean;
  }
  for (const auto& r : repetitions)
    if (r.metrics) s.max_residual = std::max(s.max_residual, std::abs(r.metrics->residual()));
  return s;
}

ScenarioFailed::ScenarioFailed(std::string phase, std::string message, LatencyReport partial)
    : Error(ErrorCode::ScenarioFailed, message, phase), phase_(std::move(phase)), partial_(std::move(partial)) {}

std::string render_report(const LatencyReport& report, ReportFormat format) {
  const auto s = report.summary();
  std::ostringstream out;
  if (format == ReportFormat::Records) {
    out << json{{"kind", "summary"},
                {"repetitions", report.repetitions.size()},
                {"jitter_bound", s.jitter_bound},
                {"max_residual", s.max_residual},
                {"op_sum", s.op_sum}}
               .dump()
        << '\n';
    auto line = [&](const char* kind, const std::string& name, const Stat& st) {
      out << json{{"kind", kind}, {"name", name}, {"mean", st.mean}, {"min", st.min}, {"max", st.max}, {"n", st.n}}
                 .dump()
          << '\n';
    };
    if (s.metrics.at("total").n > 0) {
      for (const char* name : kMetricNames) line("metric", name, s.metrics.at(name));
      for (auto op : ops::kAll) line("op", std::string(op), s.ops.at(std::string(op)));
    }
    for (const auto& r : report.repetitions) {
      json j = {{"kind", "repetition"},
                {"index", r.index},
                {"blocked", r.blocked_devices},
                {"safety_ok", r.safety_ok},
                {"wall_seconds", r.wall_seconds}};
      if (r.metrics)
        for (const char* name : kMetricNames) j[name] = r.metrics->get(name);
      j["ops"] = r.op_seconds;
      out << j.dump() << '\n';
    }
    return out.str();
  }

  const std::size_t blocked = s.metrics.at("total").n;
  out << "Response time decomposition: " << report.repetitions.size() << " repetition(s), " << blocked
      << " with a block\n\n";
  out << pad_right("metric", 22) << pad_left("mean", 9) << pad_left("min", 9) << pad_left("max", 9) << '\n';
  static const std::pair<const char*, const char*> labels[] = {{"ttd", "TtD (detection)"},
                                                               {"processing", "API processing"},
                                                               {"ttb", "TtB (blocking)"},
                                                               {"loss", "Loss of access"},
                                                               {"total", "Total response"}};
  if (blocked > 0) {
    for (const auto& [key, label] : labels) {
      const auto& st = s.metrics.at(key);
      out << pad_right(label, 22) << pad_left(fmt("%.1f", st.mean), 9) << pad_left(fmt("%.1f", st.min), 9)
          << pad_left(fmt("%.1f", st.max), 9) << '\n';
    }
  }
  out << '\n' << pad_right("operation", 26) << pad_left("mean", 9) << pad_left("min", 9) << pad_left("max", 9) << '\n';
  if (blocked > 0) {
    for (auto op : ops::kAll) {
      const auto& st = s.ops.at(std::string(op));
      out << pad_right(std::string(op), 26) << pad_left(fmt("%.3f", st.mean), 9) << pad_left(fmt("%.3f", st.min), 9)
          << pad_left(fmt("%.3f", st.max), 9) << '\n';
    }
    out << pad_right("total", 26) << pad_left(fmt("%.3f", s.op_sum), 9) << '\n';
    out << "\nidentity residual |total - (TtD + processing + TtB + loss)|: max " << fmt("%.3f", s.max_residual)
        << " s, declared bound " << fmt("%.3f", s.jitter_bound) << " s\n";
    out << "processing outside the six operations (unattributed glue): "
        << fmt("%.3f", s.metrics.at("processing").mean - s.op_sum) << " s\n";
  }
  return out.str();
}

LatencySummary parse_records(std::string_view text) {
  LatencySummary s;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidRequest, "not a report record", line);
    const auto kind = j.value("kind", "");
    if (kind == "summary") {
      s.jitter_bound = j.at("jitter_bound").get<double>();
      s.max_residual = j.at("max_residual").get<double>();
      s.op_sum = j.at("op_sum").get<double>();
    } else if (kind == "metric" || kind == "op") {
      Stat st{j.at("mean").get<double>(), j.at("min").get<double>(), j.at("max").get<double>(),
              j.at("n").get<std::size_t>()};
      (kind == "metric" ? s.metrics : s.ops)[j.at("name").get<std::string>()] = st;
    }
  }
  // An empty report still names every row.
  for (const char* name : kMetricNames) s.metrics.try_emplace(name);
  for (auto op : ops::kAll) s.ops.try_emplace(std::string(op));
  return s;
}

// ---- scenario ---------------------------------------------------------------

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("campusguard-scenario-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

MacAddress random_mac(std::mt19937_64& rng) {
  // Locally administered, unicast.
  return MacAddress((rng() & 0xfcffffffffffULL) | 0x020000000000ULL);
}

RepetitionReport run_repetition(const ScenarioConfig& cfg, int index, std::mt19937_64& rng, std::string& phase) {
  RepetitionReport rep;
  rep.index = index;
  const auto wall_start = std::chrono::steady_clock::now();

  phase = "setup";
  TempDir dir;
  persist::Store store;
  OpProfiler profiler;
  for (const auto& [op, d] : cfg.op_delays) profiler.set_delay(op, d);

  firewall::SimulatedFirewallOptions fw_opts;
  fw_opts.subnet = firewall::Subnet::parse("192.168.1.0/24");
  fw_opts.activation_delay = secs(cfg.activation_delay);
  firewall::SimulatedFirewall sim(fw_opts);
  std::unique_ptr<firewall::FirewallHttpServer> server;
  std::unique_ptr<firewall::PfSenseClient> client;
  firewall::Firewall* fw = &sim;
  if (cfg.firewall_transport == FirewallTransport::Http) {
    server = std::make_unique<firewall::FirewallHttpServer>(sim, kProbeKey);
    server->start();
    client = std::make_unique<firewall::PfSenseClient>(firewall::PfSenseEndpoint{server->base_url(), kProbeKey});
    fw = client.get();
  }

  registry::Registry reg(store, &profiler);
  reg.add_institution(Institution{kInstitution, "Lab campus", {"simulated", "", "lan"}}, *fw,
                      registry::AddressPool::parse("192.168.1.50", "192.168.1.250"));

  NoticeLog log(dir.path / "notice.log");
  log.write_header();
  zeek::TailerOptions topts;
  topts.poll_interval = duration_cast<std::chrono::milliseconds>(secs(cfg.poll_interval));
  zeek::NoticeTailer tailer(std::make_unique<zeek::FileLineSource>(log.path()), topts);
  incident::IncidentService incidents(
      store, incident::SeverityPolicy::defaults(), kInstitution,
      [&] { return reg.lease_snapshot(kInstitution, now()); },
      [&](const std::string& id) { return reg.device_state(id); }, &profiler);
  ResponsePipeline pipeline(tailer, incidents, reg, &profiler);

  phase = "provision";
  const Principal owner{"user:lab", RoleKind::Regular, {kInstitution}};
  const Principal admin{"admin:lab", RoleKind::Admin, {kInstitution}};
  std::vector<Device> devices;
  for (int i = 0; i < cfg.device_count; ++i) {
    auto mac = random_mac(rng);
    while (std::any_of(devices.begin(), devices.end(), [&](const Device& d) { return d.mac == mac; }))
      mac = random_mac(rng);
    auto d = reg.request_access(owner, mac.to_string(), "iot-" + std::to_string(i));
    d = reg.approve_device(admin, d.device_id);
    rep.events.push_back("provision " + d.device_id + " " + d.mac.to_string() + " " + d.ip->to_string() + " " +
                         std::string(to_string(d.state)));
    devices.push_back(d);
  }
  const auto& target = devices[rng() % devices.size()];
  const bool expect_block = cfg.attack_profile == AttackProfile::SqlInjection;

  phase = "respond";
  std::mutex mu;
  std::condition_variable cv;
  std::vector<registry::BlockOutcome> outcomes;
  std::vector<std::string> seen;
  std::size_t processed = 0;
  std::atomic<bool> stop{false};
  std::atomic<bool> stop_probe{false};
  std::optional<Timestamp> loss;
  std::optional<Error> probe_error;
  std::atomic<bool> baseline{!expect_block};  // prober has seen the target pass

  profiler.reset();
  profiler.arm(true);
  std::thread worker([&] {
    while (!stop.load()) {
      auto step = pipeline.step();
      {
        std::lock_guard lock(mu);
        for (const auto& p : step.processed)
          seen.push_back("incident " + p.incident.note + " " + std::string(to_string(p.incident.severity)) + " " +
                         p.incident.device_id.value_or("-"));
        for (auto& b : step.blocks) outcomes.push_back(std::move(b));
        processed += step.processed.size();
      }
      cv.notify_all();
      std::this_thread::sleep_for(secs(cfg.poll_interval));
    }
  });
  std::thread prober;
  if (expect_block) {
    const auto ip = target.ip->to_string();
    prober = std::thread([&, ip] {
      try {
        loss = probe_connectivity(
            [&] {
              const auto v = sim.evaluate_packet(ip, Ipv4Address{});
              if (v == firewall::Verdict::Pass) baseline = true;
              return v;
            },
            secs(cfg.probe_interval),
                                  secs(cfg.probe_horizon + cfg.detection_delay + cfg.activation_delay), &stop_probe);
      } catch (const Error& e) {
        probe_error = e;
      }
    });
  }
  auto join_all = [&] {
    stop = true;
    stop_probe = true;
    if (worker.joinable()) worker.join();
    if (prober.joinable()) prober.join();
    profiler.arm(false);
  };

  try {
    // The attack must not start before access is known to work, or a fast
    // block could land before the prober's first sample.
    const auto baseline_deadline = std::chrono::steady_clock::now() + secs(cfg.probe_horizon);
    while (!baseline.load() && std::chrono::steady_clock::now() < baseline_deadline)
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    if (!baseline.load()) throw Error(ErrorCode::ProbeTimeout, "target never reachable before the attack", "attack");
    rep.attack = inject_attack(target, cfg.attack_profile, log, secs(cfg.detection_delay), cfg.notices_per_attack, rng);
    rep.events.push_back("attack " + target.device_id + " " + std::string(to_string(cfg.attack_profile)) +
                         " notices=" + std::to_string(rep.attack->emitted_notices));

    double budget = cfg.probe_horizon + cfg.activation_delay;
    for (const auto& [op, d] : cfg.op_delays) budget += d;
    std::unique_lock lock(mu);
    const bool settled = cv.wait_for(lock, secs(budget), [&] {
      return processed >= static_cast<std::size_t>(rep.attack->emitted_notices) &&
             (!expect_block || !outcomes.empty());
    });
    lock.unlock();
    if (!settled) throw Error(ErrorCode::ScenarioFailed, "pipeline did not respond in time", "respond");
    stop = true;
    if (worker.joinable()) worker.join();
    profiler.arm(false);
    if (prober.joinable()) prober.join();
  } catch (...) {
    join_all();
    throw;
  }
  join_all();
  rep.op_seconds = profiler.totals();
  for (auto op : ops::kAll) rep.op_seconds.try_emplace(std::string(op), 0.0);
  rep.events.insert(rep.events.end(), seen.begin(), seen.end());

  phase = "measure";
  for (const auto& b : outcomes) {
    rep.blocked_devices.push_back(b.device.device_id);
    rep.events.push_back("block " + b.device.device_id);
  }
  if (expect_block) {
    if (!loss) throw Error(ErrorCode::ProbeTimeout, probe_error ? probe_error->what() : "prober stopped", "measure");
    const auto& outcome = outcomes.front();
    rep.feedback_id = outcome.feedback_id;
    store.complete_blocking_feedback(outcome.feedback_id, persist::FeedbackField::AttackStart, rep.attack->started_at);
    store.complete_blocking_feedback(outcome.feedback_id, persist::FeedbackField::LossOfAccess, *loss);
    const auto fb = store.get(persist::kFeedback, outcome.feedback_id).get<persist::BlockingFeedback>();
    rep.events.push_back("loss " + target.device_id);

    Metrics m;
    m.ttd = seconds_between(*fb.t_attack_start, *fb.t_notice);
    m.processing = seconds_between(*fb.t_notice, *fb.t_decision);
    m.ttb = seconds_between(*fb.t_decision, *fb.t_commit);
    m.loss = seconds_between(*fb.t_commit, *fb.t_loss_of_access);
    m.total = seconds_between(*fb.t_attack_start, *fb.t_loss_of_access);
    rep.metrics = m;

    const auto final_target = reg.device(target.device_id);
    const auto committed = sim.snapshot();
    const auto ip = target.ip->to_string();
    std::vector<std::string> problems;
    if (final_target.state != DeviceState::Blocked) problems.push_back("device not blocked");
    if (committed.alias(firewall::kAllowedAlias)->addresses.count(ip)) problems.push_back("still allowed");
    if (!committed.alias(firewall::kBlockedAlias)->addresses.count(ip)) problems.push_back("not in blocked alias");
    if (!fb.monotone_complete() || *fb.t_attack_start > *fb.t_notice) problems.push_back("feedback incomplete");
    if (outcomes.size() != 1) problems.push_back(std::to_string(outcomes.size()) + " blocks issued");
    rep.safety_ok = problems.empty();
    for (const auto& p : problems) rep.safety_detail += (rep.safety_detail.empty() ? "" : "; ") + p;
  } else if (!outcomes.empty()) {
    rep.safety_ok = false;
    rep.safety_detail = "unexpected block";
  }

  for (const auto& d : reg.devices(kInstitution)) {
    if (d.state == DeviceState::Active) ++rep.active_devices;
    rep.events.push_back("final " + d.device_id + " " + std::string(to_string(d.state)));
  }
  if (server) server->stop();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return rep;
}

}  // namespace

LatencyReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  LatencyReport report;
  report.config = config;
  // Loss is sampled once per probe interval and the notice is picked up
  // within one poll; the decomposition is exact up to those two.
  report.jitter_bound = config.probe_interval + config.poll_interval;
  std::mt19937_64 rng(config.seed);
  for (int i = 0; i < config.repetitions; ++i) {
    std::string phase;
    try {
      report.repetitions.push_back(run_repetition(config, i, rng, phase));
    } catch (const ScenarioFailed&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioFailed(phase, std::string(e.what()) + (e.detail().empty() ? "" : " (" + e.detail() + ")"), report);
    } catch (const std::exception& e) {
      throw ScenarioFailed(phase, e.what(), report);
    }
  }
  return report;
}

}  // namespace campusguard::harness
