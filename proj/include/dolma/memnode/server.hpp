#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dolma/mem/region_state.hpp"

namespace dolma {

// Shared/exclusive byte-range locks. Disjoint ranges proceed concurrently;
// allocator mutations and snapshots take the whole region exclusively.
class RangeLock {
 public:
  class Guard {
   public:
    Guard() = default;
    Guard(RangeLock* owner, std::uint64_t id) : owner_(owner), id_(id) {}
    Guard(Guard&& other) noexcept : owner_(other.owner_), id_(other.id_) {
      other.owner_ = nullptr;
    }
    Guard& operator=(Guard&& other) noexcept;
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
    ~Guard() { release(); }
    void release();

   private:
    RangeLock* owner_ = nullptr;
    std::uint64_t id_ = 0;
  };

  Guard lock_shared(std::uint64_t begin, std::uint64_t end) { return lock(begin, end, false); }
  Guard lock_exclusive(std::uint64_t begin, std::uint64_t end) { return lock(begin, end, true); }
  Guard lock_all() { return lock(0, UINT64_MAX, true); }

 private:
  struct Held {
    std::uint64_t begin, end;
    bool exclusive;
    std::uint64_t id;
  };

  Guard lock(std::uint64_t begin, std::uint64_t end, bool exclusive);
  bool conflicts(std::uint64_t begin, std::uint64_t end, bool exclusive) const;
  void unlock(std::uint64_t id);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Held> held_;
  std::uint64_t next_id_ = 1;
};

struct MemNodeConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  std::uint64_t capacity_bytes = 0;
  std::string snapshot_dir;   // relative snapshot paths resolve here
  std::string restore_path;   // optional region snapshot loaded at startup
};

// Passive TCP memory node. One service thread per connection; frames are
// processed strictly in per-connection arrival order, which is the ordering
// substrate the fabric's fence relies on. A malformed frame closes the
// connection, discarding whatever was in flight on it.
class MemNodeServer {
 public:
  explicit MemNodeServer(MemNodeConfig config);
  ~MemNodeServer();

  MemNodeServer(const MemNodeServer&) = delete;
  MemNodeServer& operator=(const MemNodeServer&) = delete;

  void start();  // binds and spawns the accept loop; throws IoError
  void stop();

  std::uint16_t port() const { return port_; }
  std::uint64_t requests_served() const { return requests_served_.load(); }

  // Direct region access for differential tests (callers quiesce first).
  std::vector<std::uint8_t> region_snapshot();

 private:
  void accept_loop();
  void connection_loop(int fd);

  MemNodeConfig config_;
  RegionState region_;
  RangeLock locks_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::vector<std::thread> conn_threads_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> requests_served_{0};
};

}  // namespace dolma
