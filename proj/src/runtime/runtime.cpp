#include "dolma/runtime/runtime.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <thread>
#include <tuple>

#include "dolma/util/bytes.hpp"

namespace dolma {

namespace {

thread_local ExecContext g_exec_context{};

constexpr std::uint64_t kExclusiveBit = 1ull << 63;

}  // namespace

ExecScope::ExecScope(const ExecContext& ctx) : prev_(g_exec_context) { g_exec_context = ctx; }
ExecScope::~ExecScope() { g_exec_context = prev_; }
const ExecContext& current_exec_context() { return g_exec_context; }

RuntimeOptions RuntimeOptions::from_env() {
  RuntimeOptions o;
  const char* poison = std::getenv("DOLMA_DEBUG_POISON");
  o.debug_poison = poison != nullptr && poison[0] == '1';
  return o;
}

Runtime::Runtime(const RegionLayout& layout, Fabric& fabric, RuntimeOptions options)
    : layout_(layout), fabric_(fabric), options_(options) {
  layout_.validate();
  local_mem_.resize(layout_.local_object_bytes);
  local_alloc_.reset(layout_.local_object_bytes);
  cache_mem_.resize(layout_.remote_cache_bytes);

  std::uint64_t staging = options_.staging_bytes;
  if (staging == 0) staging = std::min<std::uint64_t>(64 * MiB, layout_.metadata_bytes / 2);
  if (staging > layout_.metadata_bytes)
    throw Error(ErrorCode::ConfigInvalid, "staging pool must fit inside the metadata region");
  staging_mem_.resize(staging);
  staging_alloc_.reset(staging);

  configure_partitions(1);
  default_channel_ = fabric_.open_channel();
}

Runtime::~Runtime() = default;

void Runtime::configure_partitions(unsigned count) {
  std::lock_guard lock(mu_);
  if (count == 0) throw Error(ErrorCode::ConfigInvalid, "partition count must be positive");
  for (int b = 0; b < 2; ++b)
    for (auto& alloc : cache_alloc_[b])
      if (alloc.used() != 0)
        throw Error(ErrorCode::ConfigInvalid, "cannot repartition a non-empty cache");

  const std::uint64_t half = layout_.buffer_half_bytes();
  partition_count_ = count;
  part_base_.assign(count, 0);
  part_size_.assign(count, 0);
  const std::uint64_t slice = half / count;
  for (unsigned p = 0; p < count; ++p) {
    part_base_[p] = p * slice;
    part_size_[p] = (p + 1 == count) ? half - p * slice : slice;  // remainder to the last
  }
  for (int b = 0; b < 2; ++b) {
    cache_alloc_[b].assign(count, FirstFitAllocator());
    for (unsigned p = 0; p < count; ++p) cache_alloc_[b][p].reset(part_size_[p]);
  }
  residents_.assign(2, std::vector<std::set<std::uint64_t>>(count));
}

std::uint64_t Runtime::partition_base(int buffer, unsigned partition) const {
  return static_cast<std::uint64_t>(buffer) * layout_.buffer_half_bytes() + part_base_[partition];
}

FirstFitAllocator& Runtime::partition_alloc(int buffer, unsigned partition) {
  return cache_alloc_[buffer][partition];
}

ChannelId Runtime::op_channel() const {
  const ExecContext& ctx = current_exec_context();
  return ctx.has_channel ? ctx.channel : default_channel_;
}

MetadataEntry& Runtime::entry_mut(std::uint64_t object_id) {
  auto it = table_.find(object_id);
  if (it == table_.end())
    throw Error(ErrorCode::OutOfRange, "unknown object " + std::to_string(object_id));
  return it->second;
}

const MetadataEntry& Runtime::entry(std::uint64_t object_id) const {
  std::lock_guard lock(mu_);
  auto it = table_.find(object_id);
  if (it == table_.end())
    throw Error(ErrorCode::OutOfRange, "unknown object " + std::to_string(object_id));
  return it->second;
}

std::uint64_t Runtime::local_usage_bytes() const {
  std::uint64_t used = local_alloc_.used() + staging_alloc_.used() +
                       table_.size() * options_.metadata_entry_cost;
  for (int b = 0; b < 2; ++b)
    for (const auto& alloc : cache_alloc_[b]) used += alloc.used();
  return used;
}

void Runtime::check_capacity() {
  const std::uint64_t used = local_usage_bytes();
  if (used > stats_.peak_local_bytes) stats_.peak_local_bytes = used;
  if (used > layout_.budget())
    throw Error(ErrorCode::ConfigInvalid, "local budget exceeded: " + std::to_string(used) +
                                              " > " + std::to_string(layout_.budget()));
}

CompletionStatus Runtime::wait_op(ChannelId ch, OpId op) {
  const auto key = std::make_pair(ch, op);
  auto it = completed_ops_.find(key);
  if (it != completed_ops_.end()) {
    const CompletionStatus s = it->second;
    completed_ops_.erase(it);  // at most two waiters per op
    return s;
  }
  const Completion c = fabric_.wait(ch, op);
  completed_ops_.emplace(key, c.status);
  return c.status;
}

double Runtime::stalled_wait(const std::vector<std::pair<ChannelId, OpId>>& ops,
                             std::uint64_t object_id) {
  if (ops.empty()) return 0.0;
  const double t0 = fabric_.now_us();
  for (const auto& [ch, op] : ops) {
    if (wait_op(ch, op) != CompletionStatus::Ok)
      throw Error(ErrorCode::RemoteError,
                  "fabric op failed for object " + std::to_string(object_id));
  }
  const double stall = fabric_.now_us() - t0;
  stats_.stall_us += stall;
  stats_.stall_by_iteration[iteration_] += stall;
  return stall;
}

void Runtime::ensure_home(MetadataEntry& e) {
  if (e.home) return;
  // Lock word rides the 8 bytes ahead of the payload.
  const RemoteAddr base = fabric_.remote_alloc(e.size + 8);
  e.home = RemoteAddr{base.node_id, base.offset + 8};
}

void Runtime::wait_pending_writes(MetadataEntry& e) {
  if (e.pending_write_ops.empty()) return;
  auto ops = std::move(e.pending_write_ops);
  e.pending_write_ops.clear();
  stalled_wait(ops, e.object_id);
}

void Runtime::settle_open_tickets(MetadataEntry& e) {
  if (e.open_tickets.empty()) return;
  auto ids = std::move(e.open_tickets);
  e.open_tickets.clear();
  for (std::uint64_t tid : ids) {
    auto it = tickets_.find(tid);
    if (it == tickets_.end()) continue;
    TicketState& st = it->second;
    stalled_wait(st.ops, st.object_id);
    st.ops.clear();
    if (st.from_cache && !st.dst.empty() && !st.prefilled)
      std::memcpy(st.dst.data(), cache_ptr(st.cache_abs), st.length);
    st.prefilled = true;
  }
}

void Runtime::drop_cached(MetadataEntry& e) {
  const CacheExtent ext = *e.cached;
  partition_alloc(ext.buffer, ext.partition)
      .free(ext.cache_offset - partition_base(ext.buffer, ext.partition));
  residents_[ext.buffer][ext.partition].erase(e.object_id);
  e.cached.reset();
  e.dirty = false;
  if (e.location == Location::RemoteCached) e.location = Location::Remote;
}

std::uint64_t Runtime::stage_and_write(MetadataEntry& e, const std::uint8_t* src,
                                       std::uint64_t home_offset, std::uint64_t length,
                                       Pattern hint) {
  const std::uint64_t max_transfer = fabric_.max_transfer_bytes();
  std::uint64_t done = 0;
  while (done < length) {
    std::uint64_t chunk = std::min(max_transfer, length - done);
    const bool synchronous = !options_.async_write || staging_alloc_.capacity() == 0;
    FabricOp op;
    op.kind = OpKind::Write;
    op.length = chunk;
    op.pattern = hint;
    if (synchronous) {
      op.remote = RemoteAddr{e.home->node_id, home_offset + done};
      op.local_src = src + done;
      const ChannelId ch = op_channel();
      const OpId id = fabric_.submit(ch, op);
      if (fabric_.wait(ch, id).status != CompletionStatus::Ok)
        throw Error(ErrorCode::RemoteError,
                    "write-back failed for object " + std::to_string(e.object_id));
    } else {
      chunk = std::min(chunk, staging_alloc_.capacity() & ~std::uint64_t{7});
      op.length = chunk;
      reclaim_staging_until(chunk);
      const auto staged_slot = staging_alloc_.alloc(chunk);
      if (!staged_slot)
        throw Error(ErrorCode::ConfigInvalid, "staging pool exhausted after reclaim");
      const std::uint64_t soff = *staged_slot;
      std::memcpy(staging_mem_.data() + soff, src + done, chunk);
      op.remote = RemoteAddr{e.home->node_id, home_offset + done};
      op.local_src = staging_mem_.data() + soff;
      const ChannelId ch = op_channel();
      const OpId id = fabric_.submit(ch, op);
      staged_.push_back({soff, ch, id});
      e.pending_write_ops.emplace_back(ch, id);
    }
    stats_.fabric_writes++;
    stats_.fabric_write_bytes += chunk;
    done += chunk;
  }
  return done;
}

void Runtime::reclaim_staging_until(std::uint64_t need) {
  need = std::min(need, staging_alloc_.capacity());
  while (staging_alloc_.largest_free_run() < need && !staged_.empty()) {
    const StagedChunk chunk = staged_.front();
    staged_.pop_front();
    wait_op(chunk.channel, chunk.op);  // pool full: block on the oldest write
    staging_alloc_.free(chunk.offset);
  }
}

void Runtime::demote_entry(MetadataEntry& e) {
  if (e.location == Location::Local) {
    ensure_home(e);
    stage_and_write(e, local_mem_.data() + *e.local_offset, e.home->offset, e.size, Pattern::Seq);
    local_alloc_.free(*e.local_offset);
    e.local_offset.reset();
    e.location = Location::Remote;
  } else if (e.cached) {
    settle_open_tickets(e);
    if (e.dirty) {
      ensure_home(e);
      const CacheExtent ext = *e.cached;
      const std::uint8_t* src = cache_ptr(ext.cache_offset + (e.dirty_begin - ext.object_offset));
      stage_and_write(e, src, e.home->offset + e.dirty_begin, e.dirty_end - e.dirty_begin,
                      Pattern::Seq);
      e.dirty = false;
    }
    drop_cached(e);
  } else {
    return;  // already remote-only
  }
  stats_.demotions++;
  if (!options_.async_write) wait_pending_writes(e);
}

void Runtime::evict_for_space(int buffer, unsigned partition, std::uint64_t want,
                              std::uint64_t admitting_id) {
  FirstFitAllocator& alloc = partition_alloc(buffer, partition);
  want = std::min(want, part_size_[partition]);
  while (alloc.largest_free_run() < want) {
    // Clean entries first, then the least recently touched iteration.
    const MetadataEntry* victim = nullptr;
    auto key = [](const MetadataEntry& m) {
      return std::make_tuple(m.dirty, m.last_touch_iteration, m.object_id);
    };
    for (std::uint64_t id : residents_[buffer][partition]) {
      if (id == admitting_id) continue;
      const MetadataEntry& e = table_.at(id);
      if (!victim || key(e) < key(*victim)) victim = &e;
    }
    if (!victim) break;
    MetadataEntry& v = entry_mut(victim->object_id);
    stats_.evictions++;
    settle_open_tickets(v);
    if (v.dirty)
      demote_entry(v);
    else
      drop_cached(v);
  }
}

void Runtime::record_chunk(std::uint64_t bytes) {
  stats_.fetch_chunks++;
  if (stats_.min_chunk_bytes == 0 || bytes < stats_.min_chunk_bytes)
    stats_.min_chunk_bytes = bytes;
  if (bytes > stats_.max_chunk_bytes) stats_.max_chunk_bytes = bytes;
}

void Runtime::seed_access_profile(const std::map<std::string, AccessProfileEntry>& profile) {
  std::lock_guard lock(mu_);
  access_profile_ = profile;
}

ObjectHandle Runtime::alloc(std::uint64_t size, std::string_view tag) {
  std::lock_guard lock(mu_);
  if (size == 0) throw Error(ErrorCode::OutOfRange, "zero-size allocation");
  const std::uint64_t id = next_object_id_++;

  MetadataEntry e;
  e.object_id = id;
  e.size = size;
  e.tag.assign(tag.begin(), tag.end());
  e.alloc_iteration = iteration_;
  e.last_touch_iteration = iteration_;
  e.partition_hint = std::min<unsigned>(current_exec_context().partition, partition_count_ - 1);
  if (!e.tag.empty()) {
    auto it = access_profile_.find(e.tag);
    if (it != access_profile_.end()) {
      e.read_count = it->second.expected_reads;
      e.write_count = it->second.expected_writes;
    }
  }

  ObjectHandle handle;
  auto place_remote = [&] {
    ensure_home(e);  // RemoteOom propagates
    e.location = Location::Remote;
    handle = ObjectHandle::remote(id);
  };

  auto place_local = [&](std::uint64_t off) {
    e.local_offset = off;
    e.location = Location::Local;
    // Fresh allocations read zero even when the arena block is recycled.
    std::memset(local_mem_.data() + off, 0, size);
    handle = ObjectHandle::local(id);
  };

  if (size > layout_.local_object_bytes) {
    handle = ObjectHandle();
    place_remote();
  } else if (auto off = local_alloc_.alloc(size)) {
    place_local(*off);
  } else {
    // Demote ranked victims until the allocation fits; fall through to a
    // remote placement when the resident set cannot cover it.
    const std::uint64_t free_now = local_alloc_.free_bytes();
    const std::uint64_t needed = size > free_now ? size - free_now : 0;
    const auto resident = local_resident_descriptors();
    const VictimSelection selection = select_victims(resident, needed);
    bool placed = false;
    if (!selection.insufficient) {
      for (const ObjectDescriptor& d : rank_for_remote(resident)) {
        demote_entry(entry_mut(d.object_id));
        if (auto off2 = local_alloc_.alloc(size)) {
          place_local(*off2);
          placed = true;
          break;
        }
      }
    }
    if (!placed) place_remote();
  }

  if (size > options_.page_size) {
    stats_.live_large_payload += size;
    stats_.peak_large_payload = std::max(stats_.peak_large_payload, stats_.live_large_payload);
  } else {
    stats_.live_small_payload += size;
    stats_.peak_small_payload = std::max(stats_.peak_small_payload, stats_.live_small_payload);
  }
  stats_.peak_payload_bytes = std::max(stats_.peak_payload_bytes,
                                       stats_.live_small_payload + stats_.live_large_payload);

  table_.emplace(id, std::move(e));
  check_capacity();
  return handle;
}

void Runtime::free(ObjectHandle handle) {
  std::lock_guard lock(mu_);
  MetadataEntry& e = entry_mut(handle.object_id());

  // Cancel prefetches staged for this object.
  for (auto it = tickets_.begin(); it != tickets_.end();) {
    if (it->second.prefetch && it->second.object_id == e.object_id) {
      TicketState& st = it->second;
      stalled_wait(st.ops, st.object_id);
      partition_alloc(st.buffer, st.partition).free(st.part_offset);
      it = tickets_.erase(it);
    } else {
      ++it;
    }
  }

  settle_open_tickets(e);
  wait_pending_writes(e);
  if (e.cached) {
    e.dirty = false;  // the bytes die with the object
    drop_cached(e);
  }
  if (e.local_offset) local_alloc_.free(*e.local_offset);
  if (e.home) fabric_.remote_free(RemoteAddr{e.home->node_id, e.home->offset - 8});

  if (e.size > options_.page_size)
    stats_.live_large_payload -= e.size;
  else
    stats_.live_small_payload -= e.size;

  table_.erase(e.object_id);
}

FetchTicket Runtime::read(ObjectHandle handle, std::uint64_t offset, std::uint64_t length,
                          std::span<std::uint8_t> dst, Pattern hint) {
  std::lock_guard lock(mu_);
  MetadataEntry& e = entry_mut(handle.object_id());
  if (length == 0 || offset > e.size || length > e.size - offset)
    throw Error(ErrorCode::OutOfRange, "read past object end");
  if (dst.size() < length) throw Error(ErrorCode::OutOfRange, "destination smaller than request");

  e.read_count++;
  e.last_touch_iteration = iteration_;
  stats_.read_calls++;

  FetchTicket ticket;
  ticket.ticket_id = next_ticket_id_++;
  ticket.object_id = e.object_id;
  TicketState st;
  st.object_id = e.object_id;

  auto finish_immediate = [&](const std::uint8_t* src) {
    std::memcpy(dst.data(), src, length);
    ticket.offset = offset;
    ticket.length = length;
    ticket.immediate = true;
    st.offset = offset;
    st.length = length;
    st.prefilled = true;
    tickets_.emplace(ticket.ticket_id, std::move(st));
  };

  if (e.location == Location::Local) {
    finish_immediate(local_mem_.data() + *e.local_offset + offset);
    return ticket;
  }
  if (e.cached && e.cached->covers(offset, length)) {
    finish_immediate(cache_ptr(e.cached->cache_offset + (offset - e.cached->object_offset)));
    return ticket;
  }

  // Word-sized remote objects are served through atomics.
  if (e.size <= 8 && !e.cached) {
    wait_pending_writes(e);
    ensure_home(e);
    const std::uint64_t word = fabric_.atomic_cas(*e.home, 0, 0);
    stats_.fabric_atomics++;
    std::uint8_t bytes[8];
    store_le64(bytes, word);
    finish_immediate(bytes + offset);
    return ticket;
  }

  // Miss: make the home authoritative for the range, then fetch.
  wait_pending_writes(e);
  if (e.cached) {
    settle_open_tickets(e);
    if (e.dirty) {
      demote_entry(e);
      wait_pending_writes(e);  // the fetch must observe the write-back
    } else {
      drop_cached(e);
    }
  }
  ensure_home(e);

  const unsigned part = std::min<unsigned>(current_exec_context().partition, partition_count_ - 1);
  evict_for_space(active_, part, length, e.object_id);
  FirstFitAllocator& alloc = partition_alloc(active_, part);
  const std::uint64_t fetch_len = std::min(length, alloc.largest_free_run());
  const std::uint64_t max_transfer = fabric_.max_transfer_bytes();

  if (fetch_len == 0) {
    // No cache space at all: fetch straight into the destination.
    std::uint64_t done = 0;
    while (done < length) {
      const std::uint64_t chunk = std::min(max_transfer, length - done);
      FabricOp op;
      op.kind = OpKind::Read;
      op.remote = RemoteAddr{e.home->node_id, e.home->offset + offset + done};
      op.length = chunk;
      op.local_dst = dst.data() + done;
      op.pattern = hint;
      const ChannelId ch = op_channel();
      st.ops.emplace_back(ch, fabric_.submit(ch, op));
      stats_.fabric_reads++;
      stats_.fabric_read_bytes += chunk;
      record_chunk(chunk);
      done += chunk;
    }
    stats_.bypass_fetches++;
    st.bypass = true;
    st.offset = offset;
    st.length = length;
    st.dst = dst.first(length);
    if (options_.debug_poison) std::memset(dst.data(), 0xDB, length);
    ticket.offset = offset;
    ticket.length = length;
    e.open_tickets.push_back(ticket.ticket_id);
    tickets_.emplace(ticket.ticket_id, std::move(st));
    return ticket;
  }

  const auto maybe_slot = alloc.alloc(fetch_len);
  if (!maybe_slot)
    throw Error(ErrorCode::ConfigInvalid, "cache admission failed despite free-run check");
  const std::uint64_t part_off = *maybe_slot;
  const std::uint64_t abs = partition_base(active_, part) + part_off;
  std::uint64_t done = 0;
  while (done < fetch_len) {
    const std::uint64_t chunk = std::min(max_transfer, fetch_len - done);
    FabricOp op;
    op.kind = OpKind::Read;
    op.remote = RemoteAddr{e.home->node_id, e.home->offset + offset + done};
    op.length = chunk;
    op.local_dst = cache_ptr(abs) + done;
    op.pattern = hint;
    const ChannelId ch = op_channel();
    st.ops.emplace_back(ch, fabric_.submit(ch, op));
    stats_.fabric_reads++;
    stats_.fabric_read_bytes += chunk;
    record_chunk(chunk);
    done += chunk;
  }

  e.cached = CacheExtent{active_, part, abs, offset, fetch_len};
  e.dirty = false;
  e.location = Location::RemoteCached;
  residents_[active_][part].insert(e.object_id);
  e.open_tickets.push_back(ticket.ticket_id);

  st.from_cache = true;
  st.cache_abs = abs;
  st.offset = offset;
  st.length = fetch_len;
  st.dst = dst.first(fetch_len);
  if (options_.debug_poison) std::memset(dst.data(), 0xDB, fetch_len);

  ticket.offset = offset;
  ticket.length = fetch_len;
  tickets_.emplace(ticket.ticket_id, std::move(st));
  check_capacity();
  return ticket;
}

std::pair<std::uint64_t, std::uint64_t> Runtime::acquire(const FetchTicket& ticket) {
  std::lock_guard lock(mu_);
  auto it = tickets_.find(ticket.ticket_id);
  if (it == tickets_.end() || it->second.prefetch)
    throw Error(ErrorCode::TicketReused,
                "ticket " + std::to_string(ticket.ticket_id) + " unknown or already acquired");
  TicketState& st = it->second;
  stalled_wait(st.ops, st.object_id);
  if (st.from_cache && !st.prefilled && !st.dst.empty())
    std::memcpy(st.dst.data(), cache_ptr(st.cache_abs), st.length);

  auto te = table_.find(st.object_id);
  if (te != table_.end()) {
    auto& open = te->second.open_tickets;
    open.erase(std::remove(open.begin(), open.end(), ticket.ticket_id), open.end());
  }
  const std::pair<std::uint64_t, std::uint64_t> range{st.offset, st.length};
  tickets_.erase(it);
  return range;
}

void Runtime::write(ObjectHandle handle, std::uint64_t offset,
                    std::span<const std::uint8_t> src, Pattern hint) {
  std::lock_guard lock(mu_);
  MetadataEntry& e = entry_mut(handle.object_id());
  const std::uint64_t length = src.size();
  if (length == 0 || offset > e.size || length > e.size - offset)
    throw Error(ErrorCode::OutOfRange, "write past object end");

  e.write_count++;
  e.last_touch_iteration = iteration_;
  e.last_write_epoch = checkpoint_epoch_;
  stats_.write_calls++;

  if (e.location == Location::Local) {
    std::memcpy(local_mem_.data() + *e.local_offset + offset, src.data(), length);
    return;
  }

  // Word-sized remote objects: linearizable read-modify-write on the home.
  if (e.size <= 8 && !e.cached) {
    wait_pending_writes(e);
    ensure_home(e);
    for (;;) {
      const std::uint64_t current = fabric_.atomic_cas(*e.home, 0, 0);
      std::uint8_t bytes[8];
      store_le64(bytes, current);
      std::memcpy(bytes + offset, src.data(), length);
      const std::uint64_t desired = load_le64(bytes);
      stats_.fabric_atomics += 2;
      if (fabric_.atomic_cas(*e.home, current, desired) == current) break;
    }
    return;
  }

  if (e.cached && e.cached->covers(offset, length)) {
    std::memcpy(cache_ptr(e.cached->cache_offset + (offset - e.cached->object_offset)),
                src.data(), length);
    if (e.dirty) {
      e.dirty_begin = std::min(e.dirty_begin, offset);
      e.dirty_end = std::max(e.dirty_end, offset + length);
    } else {
      e.dirty = true;
      e.dirty_begin = offset;
      e.dirty_end = offset + length;
    }
    e.location = Location::RemoteCached;
    return;
  }

  if (e.cached) {
    settle_open_tickets(e);
    if (e.dirty)
      demote_entry(e);
    else
      drop_cached(e);
  }
  wait_pending_writes(e);  // order behind earlier write-backs to this object

  // Write-allocate when the range fits the partition; stream through
  // in transfer-sized chunks otherwise.
  const unsigned part = std::min<unsigned>(current_exec_context().partition, partition_count_ - 1);
  evict_for_space(active_, part, length, e.object_id);
  FirstFitAllocator& alloc = partition_alloc(active_, part);
  if (auto slot = alloc.largest_free_run() >= length ? alloc.alloc(length) : std::nullopt) {
    const std::uint64_t part_off = *slot;
    const std::uint64_t abs = partition_base(active_, part) + part_off;
    std::memcpy(cache_ptr(abs), src.data(), length);
    e.cached = CacheExtent{active_, part, abs, offset, length};
    e.dirty = true;
    e.dirty_begin = offset;
    e.dirty_end = offset + length;
    e.location = Location::RemoteCached;
    residents_[active_][part].insert(e.object_id);
    stats_.write_allocates++;
    check_capacity();
    return;
  }

  ensure_home(e);
  stage_and_write(e, src.data(), e.home->offset + offset, length, hint);
  stats_.write_throughs++;
  check_capacity();
}

void Runtime::demote(ObjectHandle handle) {
  std::lock_guard lock(mu_);
  demote_entry(entry_mut(handle.object_id()));
  check_capacity();
}

void Runtime::flush() {
  std::lock_guard lock(mu_);
  for (auto& [id, e] : table_) {
    settle_open_tickets(e);
    if (e.cached && e.dirty) demote_entry(e);
  }
  for (auto& [id, e] : table_) wait_pending_writes(e);
  while (!staged_.empty()) {
    const StagedChunk chunk = staged_.front();
    staged_.pop_front();
    wait_op(chunk.channel, chunk.op);
    staging_alloc_.free(chunk.offset);
  }
  completed_ops_.clear();
}

FetchTicket Runtime::resolve_indirect(ObjectHandle a, ObjectHandle b, std::uint64_t index,
                                      std::uint64_t elem_size, std::span<std::uint8_t> dst) {
  std::lock_guard lock(mu_);
  const std::uint64_t a_size = entry_mut(a.object_id()).size;
  std::uint8_t raw[8];
  FetchTicket lookup = read(b, index * 8, 8, {raw, 8}, Pattern::Rand);
  acquire(lookup);
  const std::uint64_t element = load_le64(raw);
  if (elem_size == 0 || (element + 1) * elem_size > a_size)
    throw Error(ErrorCode::OutOfRange,
                "indirect index " + std::to_string(element) + " outside target object");
  return read(a, element * elem_size, elem_size, dst, Pattern::Rand);
}

void Runtime::lock_remote(ObjectHandle handle, LockMode mode) {
  std::unique_lock lock(mu_);
  MetadataEntry& e = entry_mut(handle.object_id());
  ensure_home(e);
  const RemoteAddr word{e.home->node_id, e.home->offset - 8};
  lock.unlock();  // spin outside the table lock

  for (unsigned attempt = 0; attempt < options_.lock_spin_attempts; ++attempt) {
    if (mode == LockMode::Exclusive) {
      if (fabric_.atomic_cas(word, 0, kExclusiveBit) == 0) {
        std::lock_guard relock(mu_);
        entry_mut(handle.object_id()).held_lock = 2;
        stats_.fabric_atomics++;
        return;
      }
    } else {
      const std::uint64_t current = fabric_.atomic_cas(word, 0, 0);
      if (!(current & kExclusiveBit) &&
          fabric_.atomic_cas(word, current, current + 1) == current) {
        std::lock_guard relock(mu_);
        entry_mut(handle.object_id()).held_lock = 1;
        stats_.fabric_atomics += 2;
        return;
      }
    }
    std::this_thread::yield();
  }
  throw Error(ErrorCode::LockTimeout,
              "object " + std::to_string(handle.object_id()) + " lock not acquired after " +
                  std::to_string(options_.lock_spin_attempts) + " attempts");
}

void Runtime::unlock_remote(ObjectHandle handle) {
  std::unique_lock lock(mu_);
  MetadataEntry& e = entry_mut(handle.object_id());
  if (!e.home || e.held_lock == 0)
    throw Error(ErrorCode::ConfigInvalid,
                "unlock of object " + std::to_string(e.object_id) + " that is not locked");
  const RemoteAddr word{e.home->node_id, e.home->offset - 8};
  const int held = e.held_lock;
  if (held == 2) e.held_lock = 0;
  lock.unlock();

  if (held == 2) {
    fabric_.atomic_cas(word, kExclusiveBit, 0);
    return;
  }
  for (;;) {
    const std::uint64_t current = fabric_.atomic_cas(word, 0, 0);
    if (fabric_.atomic_cas(word, current, current - 1) == current) break;
    std::this_thread::yield();
  }
}

void Runtime::set_iteration(std::uint64_t i) {
  std::lock_guard lock(mu_);
  iteration_ = i;
}

std::uint64_t Runtime::idle_partition_capacity(unsigned partition) const {
  std::lock_guard lock(mu_);
  const unsigned part = std::min<unsigned>(partition, partition_count_ - 1);
  return cache_alloc_[1 - active_][part].largest_free_run();
}

PrefetchTicket Runtime::prefetch_into_idle(std::uint64_t object_id, std::uint64_t offset,
                                           std::uint64_t length, ChannelId channel,
                                           Pattern hint) {
  std::lock_guard lock(mu_);
  MetadataEntry& e = entry_mut(object_id);
  PrefetchTicket ticket;
  ticket.ticket_id = next_ticket_id_++;
  ticket.object_id = object_id;
  ticket.offset = offset;
  ticket.noop = true;

  if (length == 0 || offset > e.size || length > e.size - offset)
    throw Error(ErrorCode::OutOfRange, "prefetch past object end");
  if (e.location == Location::Local) return ticket;
  if (!e.home) return ticket;  // write-allocated, never demoted: cache copy is the only truth

  const int idle = 1 - active_;
  const unsigned part = std::min<unsigned>(e.partition_hint, partition_count_ - 1);
  FirstFitAllocator& alloc = partition_alloc(idle, part);
  const std::uint64_t fetch_len = std::min(length, alloc.largest_free_run());
  if (fetch_len == 0) return ticket;

  // Ride behind pending write-backs on their channel; wait out any strays.
  ChannelId ch = channel;
  if (!e.pending_write_ops.empty()) {
    const ChannelId wch = e.pending_write_ops.back().first;
    const bool single = std::all_of(e.pending_write_ops.begin(), e.pending_write_ops.end(),
                                    [wch](const auto& p) { return p.first == wch; });
    if (single)
      ch = wch;
    else
      wait_pending_writes(e);
  }

  const auto maybe_slot = alloc.alloc(fetch_len);
  if (!maybe_slot) return ticket;
  const std::uint64_t part_off = *maybe_slot;
  const std::uint64_t abs = partition_base(idle, part) + part_off;
  TicketState st;
  st.object_id = object_id;
  st.prefetch = true;
  st.from_cache = true;
  st.cache_abs = abs;
  st.offset = offset;
  st.length = fetch_len;
  st.buffer = idle;
  st.partition = part;
  st.part_offset = part_off;

  const std::uint64_t max_transfer = fabric_.max_transfer_bytes();
  std::uint64_t done = 0;
  while (done < fetch_len) {
    const std::uint64_t chunk = std::min(max_transfer, fetch_len - done);
    FabricOp op;
    op.kind = OpKind::Read;
    op.remote = RemoteAddr{e.home->node_id, e.home->offset + offset + done};
    op.length = chunk;
    op.local_dst = cache_ptr(abs) + done;
    op.pattern = hint;
    st.ops.emplace_back(ch, fabric_.submit(ch, op));
    stats_.fabric_reads++;
    stats_.fabric_read_bytes += chunk;
    stats_.prefetch_fetches++;
    record_chunk(chunk);
    done += chunk;
  }

  ticket.length = fetch_len;
  ticket.noop = false;
  tickets_.emplace(ticket.ticket_id, std::move(st));
  check_capacity();
  return ticket;
}

void Runtime::acquire_prefetch(const PrefetchTicket& ticket) {
  std::lock_guard lock(mu_);
  if (ticket.noop) return;
  auto it = tickets_.find(ticket.ticket_id);
  if (it == tickets_.end() || !it->second.prefetch)
    throw Error(ErrorCode::TicketReused, "unknown prefetch ticket");
  TicketState& st = it->second;
  stalled_wait(st.ops, st.object_id);
  st.ops.clear();
  st.prefilled = true;
}

void Runtime::cancel_prefetch(const PrefetchTicket& ticket) {
  std::lock_guard lock(mu_);
  if (ticket.noop) return;
  auto it = tickets_.find(ticket.ticket_id);
  if (it == tickets_.end()) return;
  TicketState& st = it->second;
  stalled_wait(st.ops, st.object_id);
  partition_alloc(st.buffer, st.partition).free(st.part_offset);
  tickets_.erase(it);
}

void Runtime::swap_buffers(const std::vector<PrefetchTicket>& publish) {
  std::lock_guard lock(mu_);
  const int outgoing = active_;
  const int incoming = 1 - active_;

  std::map<std::uint64_t, TicketState*> incoming_by_object;
  for (const PrefetchTicket& t : publish) {
    if (t.noop) continue;
    auto it = tickets_.find(t.ticket_id);
    if (it == tickets_.end() || !it->second.prefetch)
      throw Error(ErrorCode::TicketReused, "publish of unknown prefetch ticket");
    incoming_by_object[it->second.object_id] = &it->second;
  }

  // Invalidate everything left in the outgoing half. Dirty intervals are
  // patched into the incoming copy (fetched from a then-stale home) and
  // written back asynchronously.
  for (unsigned p = 0; p < partition_count_; ++p) {
    const auto ids = residents_[outgoing][p];  // copy: demotion mutates the set
    for (std::uint64_t id : ids) {
      MetadataEntry& e = entry_mut(id);
      settle_open_tickets(e);
      if (e.dirty) {
        auto pub = incoming_by_object.find(id);
        if (pub != incoming_by_object.end()) {
          TicketState& st = *pub->second;
          const std::uint64_t lo = std::max(e.dirty_begin, st.offset);
          const std::uint64_t hi = std::min(e.dirty_end, st.offset + st.length);
          if (lo < hi) {
            if (!st.prefilled) {
              stalled_wait(st.ops, st.object_id);
              st.ops.clear();
              st.prefilled = true;
            }
            const CacheExtent& ext = *e.cached;
            std::memcpy(cache_ptr(st.cache_abs + (lo - st.offset)),
                        cache_ptr(ext.cache_offset + (lo - ext.object_offset)), hi - lo);
          }
        }
        demote_entry(e);
      } else {
        drop_cached(e);
      }
    }
  }

  active_ = incoming;

  for (const PrefetchTicket& t : publish) {
    if (t.noop) continue;
    auto it = tickets_.find(t.ticket_id);
    TicketState& st = it->second;
    if (!st.prefilled) {
      stalled_wait(st.ops, st.object_id);
      st.ops.clear();
      st.prefilled = true;
    }
    auto te = table_.find(st.object_id);
    if (te == table_.end()) {
      partition_alloc(st.buffer, st.partition).free(st.part_offset);  // freed mid-iteration
      tickets_.erase(it);
      continue;
    }
    MetadataEntry& e = te->second;
    if (e.cached) drop_cached(e);  // single residency
    e.cached = CacheExtent{st.buffer, st.partition, st.cache_abs, st.offset, st.length};
    e.dirty = false;
    e.location = Location::RemoteCached;
    residents_[st.buffer][st.partition].insert(e.object_id);
    tickets_.erase(it);
  }
  check_capacity();
}

std::vector<ObjectDescriptor> Runtime::local_resident_descriptors() const {
  std::vector<ObjectDescriptor> out;
  for (const auto& [id, e] : table_) {
    if (e.location == Location::Local && e.size > options_.page_size)
      out.push_back(e.descriptor());
  }
  return out;
}

ObjectDescriptor Runtime::descriptor(std::uint64_t object_id) const {
  std::lock_guard lock(mu_);
  auto it = table_.find(object_id);
  if (it == table_.end())
    throw Error(ErrorCode::OutOfRange, "unknown object " + std::to_string(object_id));
  return it->second.descriptor();
}

void Runtime::quiesce_writes() {
  std::lock_guard lock(mu_);
  for (auto& [id, e] : table_) wait_pending_writes(e);
  while (!staged_.empty()) {
    const StagedChunk chunk = staged_.front();
    staged_.pop_front();
    wait_op(chunk.channel, chunk.op);
    staging_alloc_.free(chunk.offset);
  }
}

std::vector<std::uint8_t> Runtime::capture_object_bytes(std::uint64_t object_id) {
  std::lock_guard lock(mu_);
  MetadataEntry& e = entry_mut(object_id);
  wait_pending_writes(e);
  std::vector<std::uint8_t> out(e.size, 0);

  if (e.location == Location::Local) {
    std::memcpy(out.data(), local_mem_.data() + *e.local_offset, e.size);
    return out;
  }
  if (e.home) {
    const std::uint64_t max_transfer = fabric_.max_transfer_bytes();
    std::uint64_t done = 0;
    while (done < e.size) {
      const std::uint64_t chunk = std::min(max_transfer, e.size - done);
      FabricOp op;
      op.kind = OpKind::Read;
      op.remote = RemoteAddr{e.home->node_id, e.home->offset + done};
      op.length = chunk;
      op.local_dst = out.data() + done;
      const ChannelId ch = op_channel();
      const OpId id = fabric_.submit(ch, op);
      if (fabric_.wait(ch, id).status != CompletionStatus::Ok)
        throw Error(ErrorCode::RemoteError, "capture read failed");
      done += chunk;
    }
  }
  if (e.cached) {
    const CacheExtent& ext = *e.cached;
    std::memcpy(out.data() + ext.object_offset, cache_ptr(ext.cache_offset), ext.length);
  }
  return out;
}

void Runtime::restore_object(std::uint64_t object_id, std::uint64_t size, const std::string& tag,
                             bool place_local, const ObjectDescriptor& counters,
                             std::uint64_t last_write_epoch,
                             std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  if (table_.count(object_id)) throw Error(ErrorCode::ConfigInvalid, "restore of existing object");
  MetadataEntry e;
  e.object_id = object_id;
  e.size = size;
  e.tag = tag;
  e.read_count = counters.read_count;
  e.write_count = counters.write_count;
  e.alloc_iteration = counters.alloc_iteration;
  e.free_iteration = counters.free_iteration;
  e.last_write_epoch = last_write_epoch;

  if (place_local) {
    auto off = local_alloc_.alloc(size);
    if (!off) throw Error(ErrorCode::ConfigInvalid, "local region too small to restore object");
    e.local_offset = off;
    e.location = Location::Local;
    std::memcpy(local_mem_.data() + *off, bytes.data(), size);
  } else {
    ensure_home(e);  // RemoteOom propagates when the node is too small
    const std::uint64_t max_transfer = fabric_.max_transfer_bytes();
    std::uint64_t done = 0;
    while (done < size) {
      const std::uint64_t chunk = std::min(max_transfer, size - done);
      FabricOp op;
      op.kind = OpKind::Write;
      op.remote = RemoteAddr{e.home->node_id, e.home->offset + done};
      op.length = chunk;
      op.local_src = bytes.data() + done;
      const ChannelId ch = op_channel();
      const OpId id = fabric_.submit(ch, op);
      if (fabric_.wait(ch, id).status != CompletionStatus::Ok)
        throw Error(ErrorCode::RemoteError, "restore write failed");
      done += chunk;
    }
    e.location = Location::Remote;
  }

  if (size > options_.page_size) {
    stats_.live_large_payload += size;
    stats_.peak_large_payload = std::max(stats_.peak_large_payload, stats_.live_large_payload);
  } else {
    stats_.live_small_payload += size;
    stats_.peak_small_payload = std::max(stats_.peak_small_payload, stats_.live_small_payload);
  }
  stats_.peak_payload_bytes = std::max(stats_.peak_payload_bytes,
                                       stats_.live_small_payload + stats_.live_large_payload);
  next_object_id_ = std::max(next_object_id_, object_id + 1);
  table_.emplace(object_id, std::move(e));
  check_capacity();
}

}  // namespace dolma
