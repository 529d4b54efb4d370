#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dolma/prefetch/plan.hpp"
#include "dolma/runtime/runtime.hpp"

namespace dolma {

struct StallReport {
  double total_us = 0.0;
  std::vector<double> per_iteration;
};

struct DualBufferState {
  int active = 0;
  bool idle_ready = false;
  std::size_t idle_tickets = 0;
};

// Dual-buffer iterative prefetcher. Each begin_iteration(i) waits for the
// fetches staged for iteration i (accumulating stall), swaps the buffer
// halves, and issues the next iterations' plan into the fresh idle half.
// Iteration 0 is the cold start: its working set is fetched on demand into
// the active half before compute begins.
class Prefetcher {
 public:
  explicit Prefetcher(Runtime& rt, std::vector<ChannelId> channels = {});

  void register_plan(IterationPlan plan);
  void begin_iteration(std::uint64_t i);

  StallReport stall_report() const;
  DualBufferState state() const;
  bool enabled() const { return enabled_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  void issue_for(std::uint64_t first_iteration);
  ChannelId next_channel() { return channels_[rr_++ % channels_.size()]; }

  Runtime& rt_;
  std::vector<ChannelId> channels_;
  IterationPlan plan_;
  bool enabled_ = false;
  std::uint64_t expected_next_ = 0;
  std::vector<PrefetchTicket> in_flight_;  // published at the next swap
  bool idle_ready_ = false;
  std::size_t rr_ = 0;
  std::vector<std::string> warnings_;
  std::vector<std::uint8_t> scratch_;
};

}  // namespace dolma
