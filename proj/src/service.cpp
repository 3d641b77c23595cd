#include "campusguard/service.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include "campusguard/api.hpp"
#include "campusguard/error.hpp"
#include "campusguard/incident.hpp"
#include "campusguard/pipeline.hpp"
#include "campusguard/zeek.hpp"

namespace campusguard::service {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::chrono::microseconds secs(double s) {
  return std::chrono::microseconds(static_cast<std::int64_t>(s * 1e6));
}

}  // namespace

void ServiceConfig::apply_env(const Env& env) {
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = env.find(std::string(kEnvPrefix) + key);
    if (it == env.end() || it->second.empty()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("ENDPOINT")) endpoint = *v;
  if (auto v = get("TOKEN_FILE")) token_file = *v;
  if (auto v = get("STORAGE_PATH")) storage_path = *v;
  if (auto v = get("TOKEN_SECRET")) token_secret = *v;
}

ServiceConfig ServiceConfig::parse(const json& j, const std::filesystem::path& base) {
  ServiceConfig c;
  try {
    if (j.contains("listen")) {
      c.host = j["listen"].value("host", c.host);
      c.port = j["listen"].value("port", c.port);
    }
    if (j.contains("storage_path") && !j["storage_path"].is_null())
      c.storage_path = resolve(base, j["storage_path"].get<std::string>());
    c.token_secret = j.value("token_secret", std::string{});
    c.token_ttl_seconds = j.value("token_ttl_seconds", c.token_ttl_seconds);
    c.poll_interval = j.value("poll_interval", c.poll_interval);
    c.retry_interval = j.value("retry_interval", c.retry_interval);
    c.endpoint = j.value("endpoint", std::string{});
    if (j.contains("token_file") && !j["token_file"].is_null())
      c.token_file = resolve(base, j["token_file"].get<std::string>());
    for (const auto& u : j.value("users", json::array())) c.users.push_back(u.get<auth::UserRecord>());
    for (const auto& i : j.value("institutions", json::array())) {
      InstitutionConfig ic;
      ic.institution.institution_id = i.at("id").get<std::string>();
      ic.institution.name = i.value("name", ic.institution.institution_id);
      const auto fw = i.value("firewall", json::object());
      const auto mode = fw.value("mode", std::string("simulated"));
      if (mode == "simulated") ic.mode = FirewallMode::Simulated;
      else if (mode == "wire") ic.mode = FirewallMode::Wire;
      else throw Error(ErrorCode::InvalidConfig, "unknown firewall mode", mode);
      ic.institution.network_profile.interface_name = fw.value("interface", std::string("lan"));
      ic.institution.network_profile.endpoint = fw.value("endpoint", std::string{});
      ic.institution.network_profile.credential_ref = fw.value("api_key_env", std::string{});
      ic.endpoint.base_url = ic.institution.network_profile.endpoint;
      ic.endpoint.api_key = fw.value("api_key", std::string{});
      ic.endpoint.interface = ic.institution.network_profile.interface_name;
      if (fw.contains("subnet")) ic.subnet = fw["subnet"].get<std::string>();
      ic.activation_delay = fw.value("activation_delay", 0.0);
      const auto pool = i.at("pool");
      ic.pool = registry::AddressPool::parse(pool.at("first").get<std::string>(), pool.at("last").get<std::string>());
      if (i.contains("notice_log")) ic.notice_log = resolve(base, i["notice_log"].get<std::string>());
      if (i.contains("severity_policy")) ic.severity_policy = resolve(base, i["severity_policy"].get<std::string>());
      c.institutions.push_back(std::move(ic));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("service config: ") + e.what());
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigMissing, "cannot open config", path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidConfig, "config is not a JSON object", path.string());
  return parse(j, path.parent_path());
}

struct Service::Impl {
  ServiceConfig config;
  std::unique_ptr<persist::Store> store;
  std::unique_ptr<registry::Registry> registry;
  std::map<std::string, std::unique_ptr<firewall::SimulatedFirewall>, std::less<>> sims;
  std::vector<std::unique_ptr<firewall::PfSenseClient>> clients;

  struct Worker {
    std::unique_ptr<zeek::NoticeTailer> tailer;
    std::unique_ptr<incident::IncidentService> incidents;
    std::unique_ptr<ResponsePipeline> pipeline;
  };
  std::vector<std::unique_ptr<Worker>> workers;
  std::vector<std::thread> threads;
  std::atomic<bool> stopping{false};

  std::unique_ptr<api::ApiService> api;
  std::unique_ptr<api::ApiHttpServer> server;
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.config = std::move(config);
  if (m.config.token_secret.empty())
    throw Error(ErrorCode::ConfigMissing, "token_secret is required (config or CAMPUSGUARD_TOKEN_SECRET)");
  if (m.config.institutions.empty()) throw Error(ErrorCode::ConfigMissing, "no institutions configured");

  m.store = m.config.storage_path ? std::make_unique<persist::Store>(*m.config.storage_path)
                                  : std::make_unique<persist::Store>();
  m.registry = std::make_unique<registry::Registry>(*m.store);

  for (const auto& ic : m.config.institutions) {
    firewall::Firewall* fw = nullptr;
    if (ic.mode == FirewallMode::Simulated) {
      firewall::SimulatedFirewallOptions opts;
      opts.interface = ic.institution.network_profile.interface_name;
      if (ic.subnet) {
        opts.subnet = firewall::Subnet::parse(*ic.subnet);
        if (!opts.subnet) throw Error(ErrorCode::InvalidConfig, "bad subnet", *ic.subnet);
      }
      opts.activation_delay = secs(ic.activation_delay);
      auto sim = std::make_unique<firewall::SimulatedFirewall>(opts);
      fw = sim.get();
      m.sims[ic.institution.institution_id] = std::move(sim);
    } else {
      auto ep = ic.endpoint;
      if (ep.api_key.empty() && !ic.institution.network_profile.credential_ref.empty()) {
        if (const char* v = std::getenv(ic.institution.network_profile.credential_ref.c_str())) ep.api_key = v;
      }
      if (ep.base_url.empty() || ep.api_key.empty())
        throw Error(ErrorCode::ConfigMissing, "wire firewall needs endpoint and api key", ic.institution.institution_id);
      m.clients.push_back(std::make_unique<firewall::PfSenseClient>(ep));
      fw = m.clients.back().get();
    }
    m.registry->add_institution(ic.institution, *fw, ic.pool);

    if (ic.notice_log) {
      auto w = std::make_unique<Impl::Worker>();
      zeek::TailerOptions topts;
      topts.poll_interval = std::chrono::duration_cast<std::chrono::milliseconds>(secs(m.config.poll_interval));
      w->tailer = std::make_unique<zeek::NoticeTailer>(std::make_unique<zeek::FileLineSource>(*ic.notice_log), topts);
      auto policy = ic.severity_policy ? incident::SeverityPolicy::load(*ic.severity_policy)
                                       : incident::SeverityPolicy::defaults();
      const auto id = ic.institution.institution_id;
      auto* reg = m.registry.get();
      w->incidents = std::make_unique<incident::IncidentService>(
          *m.store, policy, id, [reg, id] { return reg->lease_snapshot(id, now()); },
          [reg](const std::string& d) { return reg->device_state(d); });
      w->pipeline = std::make_unique<ResponsePipeline>(*w->tailer, *w->incidents, *m.registry);
      m.workers.push_back(std::move(w));
    }
  }

  auth::UserDirectory users;
  for (const auto& u : m.config.users) users.add(u);
  m.api = std::make_unique<api::ApiService>(*m.registry, *m.store, std::move(users),
                                            auth::TokenIssuer(m.config.token_secret,
                                                              std::chrono::seconds(m.config.token_ttl_seconds)));
  m.server = std::make_unique<api::ApiHttpServer>(*m.api);
}

Service::~Service() { stop(); }

int Service::start() {
  auto& m = *impl_;
  // A simulated firewall starts empty; rebuild it from stored devices.
  for (const auto& [id, sim] : m.sims) m.registry->sync_firewall(id, true);
  const int port = m.server->start(m.config.host, m.config.port);
  for (auto& w : m.workers) {
    auto* pipeline = w->pipeline.get();
    m.threads.emplace_back([this, pipeline] {
      auto next_retry = std::chrono::steady_clock::now();
      while (!impl_->stopping.load()) {
        pipeline->step();
        if (std::chrono::steady_clock::now() >= next_retry) {
          impl_->registry->retry_pending();
          next_retry = std::chrono::steady_clock::now() + secs(impl_->config.retry_interval);
        }
        std::this_thread::sleep_for(secs(impl_->config.poll_interval));
      }
    });
  }
  return port;
}

void Service::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
  impl_->threads.clear();
  if (impl_->server) impl_->server->stop();
}

std::string Service::base_url() const { return impl_->server->base_url(); }
persist::Store& Service::store() { return *impl_->store; }
registry::Registry& Service::registry() { return *impl_->registry; }

firewall::SimulatedFirewall* Service::simulated(std::string_view id) {
  auto it = impl_->sims.find(id);
  return it == impl_->sims.end() ? nullptr : it->second.get();
}

}  // namespace campusguard::service
