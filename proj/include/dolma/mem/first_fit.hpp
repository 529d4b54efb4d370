#pragma once

#include <cstdint>
#include <map>
#include <optional>

namespace dolma {

// First-fit allocator over an ordered free list with coalescing on free.
// Requests are rounded up to 8 bytes so every block is word-aligned.
// Deterministic: identical call sequences return identical offsets.
class FirstFitAllocator {
 public:
  FirstFitAllocator() = default;
  explicit FirstFitAllocator(std::uint64_t capacity) { reset(capacity); }

  void reset(std::uint64_t capacity);

  std::optional<std::uint64_t> alloc(std::uint64_t size);
  bool free(std::uint64_t offset);  // false when offset is not an allocated block
  bool alloc_at(std::uint64_t offset, std::uint64_t size);  // restore path

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t used() const { return used_; }
  std::uint64_t free_bytes() const { return capacity_ - used_; }
  std::uint64_t largest_free_run() const;
  std::optional<std::uint64_t> block_size(std::uint64_t offset) const;

  const std::map<std::uint64_t, std::uint64_t>& allocated() const { return allocated_; }
  const std::map<std::uint64_t, std::uint64_t>& free_ranges() const { return free_; }

 private:
  void insert_free(std::uint64_t offset, std::uint64_t length);

  std::uint64_t capacity_ = 0;
  std::uint64_t used_ = 0;
  std::map<std::uint64_t, std::uint64_t> free_;       // offset -> length, coalesced
  std::map<std::uint64_t, std::uint64_t> allocated_;  // offset -> length
};

}  // namespace dolma
