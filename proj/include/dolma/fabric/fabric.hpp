#pragma once

#include <cstdint>
#include <vector>

#include "dolma/fabric/latency_model.hpp"
#include "dolma/fabric/types.hpp"

namespace dolma {

// One-sided remote-memory fabric: per-channel work queues with completion
// delivery, fences, remote allocation, and word atomics.
//
// Channel discipline: distinct channels are independently usable from
// distinct threads; a single channel is driven by at most one thread at a
// time. Ops submitted on one channel start in submission order, and an op
// begins only after the previous op on the channel completed, so a fence
// costs nothing beyond draining outstanding completions.
class Fabric {
 public:
  virtual ~Fabric() = default;

  virtual ChannelId open_channel() = 0;

  // Validates bounds and max transfer size, queues the op, returns without
  // waiting. Throws OutOfBounds / Oversized.
  virtual OpId submit(ChannelId channel, const FabricOp& op) = 0;

  // Up to `max` completions not yet retrieved, in completion order.
  virtual std::vector<Completion> poll(ChannelId channel, std::size_t max) = 0;

  // Blocks until the given op completes; returns its completion.
  virtual Completion wait(ChannelId channel, OpId op) = 0;

  // All ops submitted on the channel before the fence are complete and
  // remotely visible when this returns.
  virtual void fence(ChannelId channel) = 0;

  virtual RemoteAddr remote_alloc(std::uint64_t size) = 0;  // throws RemoteOom
  virtual void remote_free(RemoteAddr addr) = 0;            // throws DoubleFree

  // Linearizable word atomics against the remote region; return the
  // previously stored value. Throw Misaligned.
  virtual std::uint64_t atomic_cas(RemoteAddr addr, std::uint64_t expected,
                                   std::uint64_t desired) = 0;
  virtual std::uint64_t atomic_fadd(RemoteAddr addr, std::uint64_t delta) = 0;

  virtual const LatencyModel& model() const = 0;
  virtual std::uint64_t capacity() const = 0;

  // Fabric clock in microseconds: virtual on the simulator, wall elsewhere.
  virtual double now_us() = 0;
  // Charge compute time against the clock (simulator) or actually spend it.
  virtual void advance_us(double us) = 0;

  std::uint64_t max_transfer_bytes() const { return model().max_transfer_bytes(); }

  double estimate_latency_us(OpKind kind, Pattern pattern, std::uint64_t size) const {
    return model().estimate_us(kind, pattern, size);
  }
};

// Shared submit-side validation.
void validate_op(const FabricOp& op, std::uint64_t region_capacity,
                 std::uint64_t max_transfer_bytes);

}  // namespace dolma
