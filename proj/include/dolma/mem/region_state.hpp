#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dolma/mem/first_fit.hpp"

namespace dolma {

// The remote memory region: zero-initialized backing bytes plus the
// allocator that hands out object homes. Shared by the simulator backend and
// the TCP memory node so both sides place and mutate bytes identically.
class RegionState {
 public:
  explicit RegionState(std::uint64_t capacity);

  std::uint64_t capacity() const { return capacity_; }
  const FirstFitAllocator& allocator() const { return alloc_; }

  std::uint64_t alloc(std::uint64_t size);  // throws RemoteOom
  void free(std::uint64_t offset);          // throws DoubleFree

  bool in_bounds(std::uint64_t offset, std::uint64_t length) const {
    return length <= capacity_ && offset <= capacity_ - length;
  }

  void read(std::uint64_t offset, std::span<std::uint8_t> dst) const;   // throws OutOfBounds
  void write(std::uint64_t offset, std::span<const std::uint8_t> src);  // throws OutOfBounds

  // Word values live in region memory little-endian. Offsets must be 8-byte
  // aligned (throws Misaligned). Callers serialize; these are not re-entrant.
  std::uint64_t cas(std::uint64_t offset, std::uint64_t expected, std::uint64_t desired);
  std::uint64_t fadd(std::uint64_t offset, std::uint64_t delta);

  // Snapshot file: full backing bytes plus the allocation map, CRC-trailed.
  // load() reproduces a byte-identical RegionState.
  void save(const std::string& path) const;  // throws IoError
  void load(const std::string& path);        // throws IoError/ChecksumMismatch

  std::span<const std::uint8_t> bytes() const { return {backing_.data(), backing_.size()}; }

 private:
  std::uint64_t capacity_;
  std::vector<std::uint8_t> backing_;
  FirstFitAllocator alloc_;
};

}  // namespace dolma
