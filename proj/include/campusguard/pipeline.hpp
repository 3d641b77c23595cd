#pragma once

#include <optional>
#include <vector>

#include "campusguard/error.hpp"
#include "campusguard/incident.hpp"
#include "campusguard/profiler.hpp"
#include "campusguard/registry.hpp"
#include "campusguard/zeek.hpp"

namespace campusguard {

struct PipelineStep {
  std::size_t notices = 0;
  std::vector<zeek::ParseQuarantine> quarantined;
  std::vector<incident::ProcessedIncident> processed;
  std::vector<registry::BlockOutcome> blocks;
  std::vector<Error> failures;  // blocks that were parked for retry
  bool interrupted = false;      // storage failed mid-batch; the rest stays queued
};

/// One institution's detect-and-respond loop: tail the sensor log, turn
/// notices into incidents, and block the devices the engine selects.
class ResponsePipeline {
 public:
  ResponsePipeline(zeek::NoticeTailer& tailer, incident::IncidentService& incidents, registry::Registry& registry,
                   OpProfiler* profiler = nullptr);

  /// Polls once and acts on whatever arrived. Never throws for source,
  /// storage or firewall outages; those are reported in the step.
  PipelineStep step();

 private:
  zeek::NoticeTailer& tailer_;
  incident::IncidentService& incidents_;
  registry::Registry& registry_;
  OpProfiler* profiler_;
};

}  // namespace campusguard
