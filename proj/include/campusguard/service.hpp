#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "campusguard/auth.hpp"
#include "campusguard/domain.hpp"
#include "campusguard/pfsense_client.hpp"
#include "campusguard/registry.hpp"
#include "campusguard/simulated_firewall.hpp"
#include "campusguard/store.hpp"
#include "json.hpp"

namespace campusguard::service {

using Env = std::map<std::string, std::string>;

inline constexpr const char* kEnvPrefix = "CAMPUSGUARD_";

enum class FirewallMode { Simulated, Wire };

struct InstitutionConfig {
  Institution institution;
  FirewallMode mode = FirewallMode::Simulated;
  firewall::PfSenseEndpoint endpoint;     // wire mode
  std::optional<std::string> subnet;      // simulated mode
  double activation_delay = 0;            // simulated mode, seconds
  registry::AddressPool pool;
  std::optional<std::filesystem::path> notice_log;
  std::optional<std::filesystem::path> severity_policy;
};

/// Settings shared by `serve` and the client verbs. Relative paths resolve
/// against the directory of the file they were loaded from.
struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> storage_path;  // in-memory when absent
  std::string token_secret;
  int token_ttl_seconds = 3600;
  std::vector<auth::UserRecord> users;
  std::vector<InstitutionConfig> institutions;
  double poll_interval = 0.2;
  double retry_interval = 5;

  // Client side.
  std::string endpoint;
  std::optional<std::filesystem::path> token_file;

  /// Applies CAMPUSGUARD_{ENDPOINT,TOKEN_FILE,STORAGE_PATH,TOKEN_SECRET}.
  void apply_env(const Env& env);
  static ServiceConfig load(const std::filesystem::path& path);
  static ServiceConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// API server, per-institution firewalls and response pipelines in one process.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Starts serving and the pipeline workers; returns the bound port.
  int start();
  void stop();
  std::string base_url() const;

  persist::Store& store();
  registry::Registry& registry();
  /// The in-process firewall of a simulated institution, else nullptr.
  firewall::SimulatedFirewall* simulated(std::string_view institution_id);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace campusguard::service
