#include "campusguard/profiler.hpp"

#include <algorithm>
#include <thread>

namespace campusguard {

namespace ops {
bool is_pipeline_op(std::string_view name) {
  return std::find(std::begin(kAll), std::end(kAll), name) != std::end(kAll);
}
}  // namespace ops

namespace {
thread_local void* current_scope = nullptr;
}

void OpProfiler::set_delay(std::string_view op, double seconds) {
  std::lock_guard lock(mu_);
  delays_[std::string(op)] = std::max(0.0, seconds);
}

double OpProfiler::delay(std::string_view op) const {
  std::lock_guard lock(mu_);
  auto it = delays_.find(op);
  return it == delays_.end() ? 0.0 : it->second;
}

void OpProfiler::arm(bool on) {
  std::lock_guard lock(mu_);
  armed_ = on;
}

bool OpProfiler::armed() const {
  std::lock_guard lock(mu_);
  return armed_;
}

void OpProfiler::reset() {
  std::lock_guard lock(mu_);
  samples_.clear();
}

std::map<std::string, double> OpProfiler::totals() const {
  std::lock_guard lock(mu_);
  std::map<std::string, double> out;
  for (const auto& s : samples_) out[s.op] += s.seconds;
  return out;
}

std::vector<OpProfiler::Sample> OpProfiler::samples() const {
  std::lock_guard lock(mu_);
  return samples_;
}

void OpProfiler::record(std::string op, double seconds) {
  std::lock_guard lock(mu_);
  samples_.push_back({std::move(op), seconds});
}

OpProfiler::Scope::Scope(OpProfiler& owner, std::string_view op)
    : owner_(owner),
      op_(op),
      start_(std::chrono::steady_clock::now()),
      parent_(static_cast<Scope*>(current_scope)) {
  current_scope = this;
  const double d = owner_.delay(op_);
  if (d > 0) std::this_thread::sleep_for(std::chrono::duration<double>(d));
}

OpProfiler::Scope::~Scope() {
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  current_scope = parent_;
  if (parent_) parent_->child_seconds_ += elapsed;
  owner_.record(std::move(op_), std::max(0.0, elapsed - child_seconds_));
}

}  // namespace campusguard
