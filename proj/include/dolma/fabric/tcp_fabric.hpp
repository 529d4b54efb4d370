#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dolma/fabric/fabric.hpp"

namespace dolma {

// Fabric backend speaking the memory-node wire protocol. One TCP connection
// per channel, so per-connection FIFO on the server gives channel ordering
// (and thereby fence semantics) for free. Allocation and the synchronous
// atomics run on a dedicated control connection.
class TcpFabric : public Fabric {
 public:
  TcpFabric(const std::string& host, std::uint16_t port, LatencyModel model);
  ~TcpFabric() override;

  TcpFabric(const TcpFabric&) = delete;
  TcpFabric& operator=(const TcpFabric&) = delete;

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
  std::uint64_t capacity() const override { return capacity_; }
  double now_us() override;
  void advance_us(double us) override;  // spends the time for real

 private:
  struct Outstanding {
    OpId op_id;
    std::uint64_t request_id;
    OpKind kind;
    std::uint8_t* dst;
    std::uint64_t length;
    bool signaled;
  };
  struct Channel {
    int fd = -1;
    std::uint64_t next_request = 1;
    OpId next_op = 1;
    std::vector<std::uint8_t> rx;
    std::deque<Outstanding> outstanding;
    std::deque<Completion> ready;
  };

  // Reads responses off the channel socket. Blocking mode waits for at least
  // one frame; returns false on nothing-available (non-blocking) or EOF.
  bool drain(Channel& ch, bool blocking);
  Channel& channel_at(ChannelId id);

  LatencyModel model_;
  std::string host_;
  std::uint16_t port_;
  std::uint64_t capacity_ = 0;
  int control_fd_ = -1;
  std::uint64_t control_next_request_ = 1;
  std::mutex control_mu_;
  std::vector<std::unique_ptr<Channel>> channels_;
  std::mutex channels_mu_;
  std::chrono::steady_clock::time_point epoch_;
};

}  // namespace dolma
