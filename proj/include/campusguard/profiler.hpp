#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace campusguard {

/// Names of the six response-pipeline operations that carry injectable delay.
namespace ops {
inline constexpr std::string_view kGetLogs = "get_logs";
inline constexpr std::string_view kSaveIncident = "save_incident";
inline constexpr std::string_view kProcessIncidents = "process_incidents";
inline constexpr std::string_view kGetAliasByName = "get_alias_by_name";
inline constexpr std::string_view kAddAddressesToAlias = "add_addresses_to_alias";
inline constexpr std::string_view kApplyChanges = "apply_changes_firewall";
inline constexpr std::string_view kAll[] = {kGetLogs,        kSaveIncident,        kProcessIncidents,
                                            kGetAliasByName, kAddAddressesToAlias, kApplyChanges};
bool is_pipeline_op(std::string_view name);
}  // namespace ops

/// Times named operations and, while armed, sleeps a configured delay at the
/// start of each one. Reported times are exclusive of nested operations.
class OpProfiler {
 public:
  struct Sample {
    std::string op;
    double seconds = 0;  // exclusive
  };

  void set_delay(std::string_view op, double seconds);
  double delay(std::string_view op) const;
  void arm(bool on);
  bool armed() const;
  void reset();

  /// Exclusive seconds per operation, summed over calls since the last reset.
  std::map<std::string, double> totals() const;
  std::vector<Sample> samples() const;

  template <class F>
  decltype(auto) run(std::string_view op, F&& fn) {
    if (!armed()) return std::forward<F>(fn)();
    Scope scope(*this, op);
    return std::forward<F>(fn)();
  }

 private:
  class Scope {
   public:
    Scope(OpProfiler& owner, std::string_view op);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    OpProfiler& owner_;
    std::string op_;
    std::chrono::steady_clock::time_point start_;
    double child_seconds_ = 0;
    Scope* parent_;
  };

  void record(std::string op, double seconds);

  mutable std::mutex mu_;
  std::map<std::string, double, std::less<>> delays_;
  std::vector<Sample> samples_;
  bool armed_ = false;
};

}  // namespace campusguard
