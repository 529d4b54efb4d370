#pragma once

#include <cstdint>

namespace dolma {

// Deferred read barrier: read() returns immediately with one of these; the
// caller acquires it just before the bytes are consumed. Each ticket may be
// acquired exactly once.
struct FetchTicket {
  std::uint64_t ticket_id = 0;
  std::uint64_t object_id = 0;
  std::uint64_t offset = 0;  // satisfied sub-range of the request
  std::uint64_t length = 0;
  bool immediate = false;  // served from cache or local region, zero fabric ops
};

// Ticket for a fetch staged into the idle buffer half; published into the
// metadata table only when the buffers swap.
struct PrefetchTicket {
  std::uint64_t ticket_id = 0;
  std::uint64_t object_id = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  bool noop = false;  // nothing to fetch (local object, no space, ...)
};

}  // namespace dolma
