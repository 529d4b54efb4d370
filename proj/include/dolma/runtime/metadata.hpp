#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dolma/fabric/types.hpp"
#include "dolma/placement/placement.hpp"

namespace dolma {

// Where an object's bytes sit inside the dual-buffer cache.
struct CacheExtent {
  int buffer = 0;           // half index, A = 0 / B = 1
  unsigned partition = 0;   // per-thread partition within the half
  std::uint64_t cache_offset = 0;   // absolute offset into the cache arena
  std::uint64_t object_offset = 0;  // first object byte held
  std::uint64_t length = 0;

  bool covers(std::uint64_t off, std::uint64_t len) const {
    return off >= object_offset && off + len <= object_offset + length;
  }
};

// One metadata-table entry. Exactly one authority holds the object's bytes:
// the local region for Location::Local, otherwise the remote home (with the
// cached extent carrying any dirty interval not yet written back).
struct MetadataEntry {
  std::uint64_t object_id = 0;
  std::uint64_t size = 0;
  std::string tag;
  Location location = Location::Local;

  std::optional<std::uint64_t> local_offset;  // local-region placement
  std::optional<RemoteAddr> home;  // payload address; lock word at offset-8
  std::optional<CacheExtent> cached;

  bool dirty = false;
  std::uint64_t dirty_begin = 0, dirty_end = 0;  // object-relative, inside cached

  std::uint64_t last_touch_iteration = 0;
  std::uint64_t alloc_iteration = 0;
  std::optional<std::uint64_t> free_iteration;
  std::uint64_t read_count = 0;
  std::uint64_t write_count = 0;
  std::uint64_t last_write_epoch = 0;  // checkpoint selective update
  unsigned partition_hint = 0;         // thread partition that allocated it

  std::vector<std::pair<ChannelId, OpId>> pending_write_ops;
  std::vector<std::uint64_t> open_tickets;  // unacquired fetches into `cached`
  int held_lock = 0;  // 0 none, 1 shared, 2 exclusive (advisory; word is truth)

  ObjectDescriptor descriptor() const {
    return ObjectDescriptor{object_id, size,          read_count,    write_count,
                            alloc_iteration, free_iteration, location};
  }
};

}  // namespace dolma
