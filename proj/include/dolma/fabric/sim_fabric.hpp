#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <queue>
#include <vector>

#include "dolma/fabric/fabric.hpp"
#include "dolma/mem/region_state.hpp"

namespace dolma {

// Deterministic virtual-clock fabric. Each channel is an independent FIFO
// server: an op starts at max(now, channel busy-until) and completes after
// its modeled latency. Byte effects apply at completion time in completion
// order, so unfenced cross-channel reads can observe stale data, exactly as
// on the real thing.
class SimFabric : public Fabric {
 public:
  SimFabric(std::uint64_t capacity, LatencyModel model);

  ChannelId open_channel() override;
  OpId submit(ChannelId channel, const FabricOp& op) override;
  std::vector<Completion> poll(ChannelId channel, std::size_t max) override;
  Completion wait(ChannelId channel, OpId op) override;
  void fence(ChannelId channel) override;
  RemoteAddr remote_alloc(std::uint64_t size) override;
  void remote_free(RemoteAddr addr) override;
  std::uint64_t atomic_cas(RemoteAddr addr, std::uint64_t expected,
                           std::uint64_t desired) override;
  std::uint64_t atomic_fadd(RemoteAddr addr, std::uint64_t delta) override;
  const LatencyModel& model() const override { return model_; }
  std::uint64_t capacity() const override { return region_.capacity(); }
  double now_us() override;
  void advance_us(double us) override;

  // Test seam: force RemoteError completions for ops this predicate accepts.
  void set_error_injector(std::function<bool(const FabricOp&)> fn);

  // Direct view of the remote region for differential checks.
  std::vector<std::uint8_t> region_snapshot();

 private:
  struct Pending {
    double done_at;
    std::uint64_t seq;
    ChannelId channel;
    OpId op_id;
    FabricOp op;
    bool failed;
  };
  struct PendingOrder {
    bool operator()(const Pending& a, const Pending& b) const {
      return a.done_at > b.done_at || (a.done_at == b.done_at && a.seq > b.seq);
    }
  };
  struct Channel {
    double busy_until = 0.0;
    OpId next_op = 1;
    std::deque<Completion> ready;
  };

  void apply_effects_locked(double up_to);
  void advance_to_locked(double t);

  LatencyModel model_;
  RegionState region_;
  std::vector<Channel> channels_;
  std::priority_queue<Pending, std::vector<Pending>, PendingOrder> pending_;
  std::function<bool(const FabricOp&)> error_injector_;
  double now_ = 0.0;
  std::uint64_t seq_ = 0;
  std::mutex mu_;
};

}  // namespace dolma
