#include "dolma/prefetch/prefetcher.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dolma/error.hpp"
#include "json.hpp"

namespace dolma {

IterationPlan IterationPlan::load(const std::string& path,
                                  const std::map<std::string, std::uint64_t>& tag_to_object) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open plan file " + path);
  nlohmann::json j;
  in >> j;
  IterationPlan plan;
  for (const auto& iter : j) {
    std::vector<PlanEntry> entries;
    for (const auto& e : iter) {
      const std::string tag = e.at("object_tag").get<std::string>();
      auto it = tag_to_object.find(tag);
      if (it == tag_to_object.end())
        throw Error(ErrorCode::ConfigInvalid, "plan references unknown object tag " + tag);
      entries.push_back({it->second, e.at("offset").get<std::uint64_t>(),
                         e.at("length").get<std::uint64_t>()});
    }
    plan.iterations.push_back(std::move(entries));
  }
  return plan;
}

Prefetcher::Prefetcher(Runtime& rt, std::vector<ChannelId> channels)
    : rt_(rt), channels_(std::move(channels)) {
  if (channels_.empty()) channels_.push_back(rt_.default_channel());
}

void Prefetcher::register_plan(IterationPlan plan) {
  if (plan.depth == 0) throw Error(ErrorCode::ConfigInvalid, "prefetch depth must be positive");
  plan_ = std::move(plan);
  enabled_ = !plan_.empty();
  expected_next_ = 0;
  in_flight_.clear();
  idle_ready_ = false;
}

void Prefetcher::issue_for(std::uint64_t first_iteration) {
  // Fetch the next `depth` iterations' read sets into the idle half, capped
  // at one buffer half; excess truncates to the largest fitting prefix.
  std::uint64_t budget = rt_.buffer_half_bytes();
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;  // (object, offset) dedup
  for (unsigned d = 0; d < plan_.depth; ++d) {
    const std::uint64_t target = first_iteration + d;
    if (target >= plan_.iterations.size()) break;
    for (const PlanEntry& entry : plan_.iterations[target]) {
      if (!seen.insert({entry.object_id, entry.offset}).second) continue;
      const std::uint64_t want = std::min(entry.length, budget);
      if (want == 0) {
        warnings_.push_back("plan for iteration " + std::to_string(target) +
                            " exceeds one buffer half; truncated");
        return;
      }
      try {
        PrefetchTicket t =
            rt_.prefetch_into_idle(entry.object_id, entry.offset, want, next_channel());
        if (!t.noop) {
          budget -= t.length;
          in_flight_.push_back(t);
          if (t.length < entry.length)
            warnings_.push_back("prefetch of object " + std::to_string(entry.object_id) +
                                " truncated to " + std::to_string(t.length) + " bytes");
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::OutOfRange) throw;
        warnings_.push_back(std::string("plan entry skipped: ") + e.what());
      }
    }
  }
}

void Prefetcher::begin_iteration(std::uint64_t i) {
  rt_.set_iteration(i);
  if (!enabled_) return;
  if (i != expected_next_)
    throw Error(ErrorCode::ConfigInvalid,
                "begin_iteration must be called with consecutive indices");
  expected_next_ = i + 1;

  if (i == 0) {
    // Cold start: pull iteration 0's working set on demand into the active
    // half so the kernel computes against warm cache.
    if (!plan_.iterations.empty()) {
      for (const PlanEntry& entry : plan_.iterations[0]) {
        if (scratch_.size() < entry.length) scratch_.resize(entry.length);
        try {
          const MetadataEntry& meta = rt_.entry(entry.object_id);
          ExecContext ctx;
          ctx.thread_id = meta.partition_hint;
          ctx.partition = meta.partition_hint;
          ExecScope scope(ctx);
          FetchTicket t = rt_.read(ObjectHandle::remote(entry.object_id), entry.offset,
                                   entry.length, {scratch_.data(), scratch_.size()});
          rt_.acquire(t);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::OutOfRange) throw;
          warnings_.push_back(std::string("cold-start entry skipped: ") + e.what());
        }
      }
    }
  } else {
    for (const PrefetchTicket& t : in_flight_) rt_.acquire_prefetch(t);
    rt_.swap_buffers(in_flight_);
    in_flight_.clear();
  }

  idle_ready_ = false;
  issue_for(i + 1);
  idle_ready_ = in_flight_.empty();
}

StallReport Prefetcher::stall_report() const {
  StallReport report;
  const RuntimeStats& stats = rt_.stats();
  report.total_us = stats.stall_us;
  if (!stats.stall_by_iteration.empty()) {
    const std::uint64_t last = stats.stall_by_iteration.rbegin()->first;
    report.per_iteration.assign(last + 1, 0.0);
    for (const auto& [iter, stall] : stats.stall_by_iteration)
      report.per_iteration[iter] = stall;
  }
  return report;
}

DualBufferState Prefetcher::state() const {
  return DualBufferState{rt_.active_buffer(), idle_ready_, in_flight_.size()};
}

}  // namespace dolma
