#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "dolma/fabric/types.hpp"
#include "dolma/runtime/runtime.hpp"

namespace dolma {

// T workers organized into clusters of C threads; each cluster owns one
// fabric channel and coordinates through a shared scheduling queue. The
// cache buffer halves are equally partitioned among workers (remainder to
// the last), so private-object admissions never collide.
struct ThreadPoolConfig {
  unsigned workers = 1;       // T
  unsigned cluster_size = 4;  // C, clamped to T

  unsigned effective_cluster_size() const {
    return cluster_size < workers ? cluster_size : workers;
  }
  unsigned clusters() const {
    const unsigned c = effective_cluster_size();
    return (workers + c - 1) / c;
  }
  void validate() const {
    if (workers == 0 || cluster_size == 0)
      throw Error(ErrorCode::ConfigInvalid, "workers and cluster size must be positive");
  }
};

class ThreadPool {
 public:
  ThreadPool(const ThreadPoolConfig& config, Runtime& rt);

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  unsigned workers() const { return config_.workers; }
  unsigned clusters() const { return config_.clusters(); }
  unsigned cluster_of(unsigned thread_id) const {
    return thread_id / config_.effective_cluster_size();
  }
  ChannelId cluster_channel(unsigned cluster) const { return clusters_[cluster]->channel; }
  std::vector<ChannelId> cluster_channels() const;
  ExecContext context(unsigned thread_id) const;

  // Runs body(tid) on T real threads (first exception rethrown), or on the
  // calling thread in ascending tid order for deterministic simulation.
  void run_parallel(const std::function<void(unsigned)>& body);
  void run_sequential(const std::function<void(unsigned)>& body);

  // Two-level scheduling: ops funnel through the thread's cluster queue onto
  // the cluster channel, preserving per-thread submission order.
  OpId submit_via_cluster(unsigned thread_id, const FabricOp& op);
  Completion wait_op(unsigned thread_id, OpId op);
  std::vector<Completion> poll_completions(unsigned thread_id, std::size_t max);
  void fence_cluster(unsigned thread_id);

  // Per-object locks for shared objects, held in local memory. Non-reentrant.
  void register_shared(std::uint64_t object_id);
  void shared_lock(std::uint64_t object_id);
  void shared_unlock(std::uint64_t object_id);

 private:
  struct QueuedOp {
    unsigned thread_id;
    FabricOp op;
  };
  struct Cluster {
    ChannelId channel = 0;
    std::mutex mu;  // single-dispatcher token for the scheduling queue
    std::deque<QueuedOp> queue;
    std::map<OpId, unsigned> owner;
    std::map<unsigned, std::deque<Completion>> mailbox;
    std::deque<OpId> outstanding;
  };
  struct SharedLock {
    std::mutex mu;
    std::thread::id owner;
  };

  Cluster& cluster_for(unsigned thread_id);
  void drain_locked(Cluster& c);  // queue -> channel while holding c.mu

  ThreadPoolConfig config_;
  Runtime& rt_;
  Fabric& fabric_;
  std::vector<std::unique_ptr<Cluster>> clusters_;
  std::mutex shared_mu_;
  std::map<std::uint64_t, std::unique_ptr<SharedLock>> shared_;
};

}  // namespace dolma
