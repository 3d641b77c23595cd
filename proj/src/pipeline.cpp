#include "campusguard/pipeline.hpp"

namespace campusguard {

ResponsePipeline::ResponsePipeline(zeek::NoticeTailer& tailer, incident::IncidentService& incidents,
                                   registry::Registry& registry, OpProfiler* profiler)
    : tailer_(tailer), incidents_(incidents), registry_(registry), profiler_(profiler) {}

PipelineStep ResponsePipeline::step() {
  PipelineStep out;
  std::vector<zeek::TailRecord> records;
  try {
    records = tailer_.poll();
  } catch (const Error& e) {
    out.failures.push_back(e);
  }

  std::vector<zeek::ZeekNotice> notices;
  if (!records.empty()) {
    auto collect = [&] {
      for (auto& r : records) {
        if (auto* n = std::get_if<zeek::ZeekNotice>(&r.item)) notices.push_back(std::move(*n));
        else out.quarantined.push_back(std::get<zeek::ParseQuarantine>(r.item));
      }
    };
    if (profiler_) profiler_->run(ops::kGetLogs, collect);
    else collect();
  }
  out.notices = notices.size();
  if (notices.empty() && incidents_.queued() == 0) return out;

  try {
    out.processed = incidents_.process_incidents(notices);
  } catch (const incident::BatchInterrupted& e) {
    out.processed = e.processed();
    out.interrupted = true;
    out.failures.push_back(e);
  } catch (const Error& e) {
    out.failures.push_back(e);
    return out;
  }

  for (const auto& p : out.processed) {
    if (p.action.kind != incident::ResponseKind::Block) continue;
    try {
      registry::BlockRequest req{p.incident.note, p.incident.incident_id, p.incident.ts, std::nullopt};
      out.blocks.push_back(registry_.block_device(Principal::system(), *p.action.device_id, req));
      incidents_.set_status(p.incident.incident_id, incident::IncidentStatus::Actioned);
    } catch (const Error& e) {
      out.failures.push_back(e);
    }
  }
  return out;
}

}  // namespace campusguard
