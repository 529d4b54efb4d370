#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "dolma/fabric/fabric.hpp"
#include "dolma/mem/first_fit.hpp"
#include "dolma/placement/placement.hpp"
#include "dolma/runtime/layout.hpp"
#include "dolma/runtime/metadata.hpp"
#include "dolma/runtime/ticket.hpp"

namespace dolma {

// Per-thread execution binding: which cache partition admissions land in and
// which fabric channel carries this thread's ops. The thread pool installs
// one per worker; unbound threads use partition 0 and the runtime's default
// channel.
struct ExecContext {
  unsigned thread_id = 0;
  unsigned partition = 0;
  ChannelId channel = 0;
  bool has_channel = false;
};

class ExecScope {
 public:
  explicit ExecScope(const ExecContext& ctx);
  ~ExecScope();
  ExecScope(const ExecScope&) = delete;
  ExecScope& operator=(const ExecScope&) = delete;

 private:
  ExecContext prev_;
};

const ExecContext& current_exec_context();

enum class LockMode : std::uint8_t { Shared, Exclusive };

struct RuntimeOptions {
  std::uint64_t page_size = kDefaultPageSize;
  // 0 derives min(64 MiB, metadata_bytes / 2); accounted inside metadata_bytes.
  std::uint64_t staging_bytes = 0;
  std::uint64_t metadata_entry_cost = 64;  // accounting bytes per live object
  bool async_write = true;   // off: demotion waits for write completions
  bool debug_poison = false; // 0xDB-fill destinations of unsatisfied tickets
  unsigned lock_spin_attempts = 100000;
  static RuntimeOptions from_env();  // honors DOLMA_DEBUG_POISON
};

struct RuntimeStats {
  std::uint64_t read_calls = 0, write_calls = 0;
  std::uint64_t fabric_reads = 0, fabric_writes = 0, fabric_atomics = 0;
  std::uint64_t fabric_read_bytes = 0, fabric_write_bytes = 0;
  std::uint64_t demotions = 0, evictions = 0;
  std::uint64_t write_allocates = 0, write_throughs = 0;
  std::uint64_t fetch_chunks = 0;
  std::uint64_t min_chunk_bytes = 0, max_chunk_bytes = 0;
  std::uint64_t bypass_fetches = 0;  // no cache space at all: direct reads
  std::uint64_t prefetch_fetches = 0;
  double stall_us = 0.0;
  std::map<std::uint64_t, double> stall_by_iteration;
  std::uint64_t peak_local_bytes = 0;
  std::uint64_t live_small_payload = 0, live_large_payload = 0;
  std::uint64_t peak_small_payload = 0, peak_large_payload = 0;
  std::uint64_t peak_payload_bytes = 0;  // max of live small+large together
};

// The compute-node memory manager: allocation decision tree, on-demand
// fetch with deferred barriers, dirty tracking, asynchronous demotion
// through a bounded staging pool, dual-buffer bookkeeping, and the remote
// object lock. Shareable across worker threads; a single internal lock
// guards the table (the fabric performs its own waiting).
class Runtime {
 public:
  Runtime(const RegionLayout& layout, Fabric& fabric, RuntimeOptions options = {});
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  // --- allocation ---------------------------------------------------------
  ObjectHandle alloc(std::uint64_t size, std::string_view tag = {});
  void free(ObjectHandle handle);

  // --- data path ----------------------------------------------------------
  FetchTicket read(ObjectHandle handle, std::uint64_t offset, std::uint64_t length,
                   std::span<std::uint8_t> dst, Pattern hint = Pattern::Seq);
  // Blocks until every op behind the ticket completed; afterwards dst holds
  // the satisfied range. Returns {offset, length} of that range.
  std::pair<std::uint64_t, std::uint64_t> acquire(const FetchTicket& ticket);
  void write(ObjectHandle handle, std::uint64_t offset, std::span<const std::uint8_t> src,
             Pattern hint = Pattern::Seq);
  void demote(ObjectHandle handle);
  void flush();  // demote all dirty state and wait until the fabric is quiet

  // A[B[index]]: fetches the 64-bit index from B, then issues the element
  // read from A. Costs one remote access per uncached side.
  FetchTicket resolve_indirect(ObjectHandle a, ObjectHandle b, std::uint64_t index,
                               std::uint64_t elem_size, std::span<std::uint8_t> dst);

  // --- cross-node object lock (CAS word ahead of the object's home) --------
  void lock_remote(ObjectHandle handle, LockMode mode);
  void unlock_remote(ObjectHandle handle);

  // --- iteration & dual-buffer integration --------------------------------
  void set_iteration(std::uint64_t i);
  std::uint64_t iteration() const { return iteration_; }
  int active_buffer() const { return active_; }
  std::uint64_t buffer_half_bytes() const { return layout_.buffer_half_bytes(); }
  std::uint64_t idle_partition_capacity(unsigned partition) const;

  PrefetchTicket prefetch_into_idle(std::uint64_t object_id, std::uint64_t offset,
                                    std::uint64_t length, ChannelId channel,
                                    Pattern hint = Pattern::Seq);
  void acquire_prefetch(const PrefetchTicket& ticket);
  void cancel_prefetch(const PrefetchTicket& ticket);
  // Swaps active/idle, invalidating entries left in the new idle half
  // (dirty intervals are patched into published extents and demoted
  // asynchronously) and publishing the given prefetched extents.
  void swap_buffers(const std::vector<PrefetchTicket>& publish);

  // --- placement feeds ----------------------------------------------------
  std::vector<ObjectDescriptor> local_resident_descriptors() const;
  ObjectDescriptor descriptor(std::uint64_t object_id) const;
  void seed_access_profile(const std::map<std::string, AccessProfileEntry>& profile);

  // --- thread-pool integration ---------------------------------------------
  void configure_partitions(unsigned count);  // cache must be empty
  unsigned partitions() const { return partition_count_; }
  std::uint64_t partition_bytes(unsigned partition) const {
    return part_size_[std::min<std::size_t>(partition, part_size_.size() - 1)];
  }

  // --- checkpoint integration ----------------------------------------------
  std::uint64_t checkpoint_epoch() const { return checkpoint_epoch_; }
  std::uint64_t advance_checkpoint_epoch() { return ++checkpoint_epoch_; }
  void set_checkpoint_epoch(std::uint64_t e) { checkpoint_epoch_ = e; }
  void quiesce_writes();  // fence pending demotions into remote homes
  std::vector<std::uint8_t> capture_object_bytes(std::uint64_t object_id);
  void restore_object(std::uint64_t object_id, std::uint64_t size, const std::string& tag,
                      bool place_local, const ObjectDescriptor& counters,
                      std::uint64_t last_write_epoch,
                      std::span<const std::uint8_t> bytes);

  // --- introspection --------------------------------------------------------
  const std::map<std::uint64_t, MetadataEntry>& metadata() const { return table_; }
  const MetadataEntry& entry(std::uint64_t object_id) const;
  const RegionLayout& layout() const { return layout_; }
  const RuntimeStats& stats() const { return stats_; }
  Fabric& fabric() { return fabric_; }
  std::uint64_t local_usage_bytes() const;
  std::uint64_t staging_capacity() const { return staging_alloc_.capacity(); }
  ChannelId default_channel() const { return default_channel_; }
  std::uint64_t live_objects() const { return table_.size(); }

 private:
  struct TicketState {
    std::uint64_t object_id = 0;
    std::vector<std::pair<ChannelId, OpId>> ops;
    std::uint64_t offset = 0, length = 0;
    std::span<std::uint8_t> dst;
    std::uint64_t cache_abs = 0;  // copy source when from_cache
    bool from_cache = false;
    bool bypass = false;
    bool acquired = false;
    bool prefilled = false;  // dst already holds the bytes (settled early)
    bool prefetch = false;
    // prefetch bookkeeping
    int buffer = 0;
    unsigned partition = 0;
    std::uint64_t part_offset = 0;
  };
  struct StagedChunk {
    std::uint64_t offset;  // staging arena offset
    ChannelId channel;
    OpId op;
  };

  MetadataEntry& entry_mut(std::uint64_t object_id);
  ChannelId op_channel() const;
  std::uint8_t* cache_ptr(std::uint64_t abs_offset) { return cache_mem_.data() + abs_offset; }
  std::uint64_t partition_base(int buffer, unsigned partition) const;
  FirstFitAllocator& partition_alloc(int buffer, unsigned partition);

  // Completion bookkeeping: at most two waiters care about any op (a ticket
  // or object pending list, plus the staging pool); the ledger memoizes the
  // first wait so the second does not re-consume the fabric completion.
  CompletionStatus wait_op(ChannelId ch, OpId op);

  void check_capacity();
  void ensure_home(MetadataEntry& e);
  void wait_pending_writes(MetadataEntry& e);
  void settle_open_tickets(MetadataEntry& e);
  void drop_cached(MetadataEntry& e);  // entry must be clean
  void demote_entry(MetadataEntry& e);
  void evict_for_space(int buffer, unsigned partition, std::uint64_t want,
                       std::uint64_t admitting_id);
  std::uint64_t stage_and_write(MetadataEntry& e, const std::uint8_t* src,
                                std::uint64_t home_offset, std::uint64_t length, Pattern hint);
  void reclaim_staging_until(std::uint64_t need);
  void record_chunk(std::uint64_t bytes);
  double stalled_wait(const std::vector<std::pair<ChannelId, OpId>>& ops,
                      std::uint64_t object_id);

  RegionLayout layout_;
  Fabric& fabric_;
  RuntimeOptions options_;

  std::vector<std::uint8_t> local_mem_;
  FirstFitAllocator local_alloc_;
  std::vector<std::uint8_t> cache_mem_;
  unsigned partition_count_ = 1;
  std::vector<std::uint64_t> part_base_;  // per partition, offset inside a half
  std::vector<std::uint64_t> part_size_;
  std::vector<FirstFitAllocator> cache_alloc_[2];  // [buffer][partition]
  std::vector<std::vector<std::set<std::uint64_t>>> residents_;  // [buffer][partition]
  int active_ = 0;

  std::vector<std::uint8_t> staging_mem_;
  FirstFitAllocator staging_alloc_;
  std::deque<StagedChunk> staged_;  // oldest first

  std::map<std::uint64_t, MetadataEntry> table_;
  std::map<std::uint64_t, TicketState> tickets_;
  std::map<std::pair<ChannelId, OpId>, CompletionStatus> completed_ops_;
  std::map<std::string, AccessProfileEntry> access_profile_;

  std::uint64_t next_object_id_ = 1;
  std::uint64_t next_ticket_id_ = 1;
  std::uint64_t iteration_ = 0;
  std::uint64_t checkpoint_epoch_ = 0;
  ChannelId default_channel_ = 0;

  RuntimeStats stats_;
  mutable std::recursive_mutex mu_;
};

}  // namespace dolma
