#pragma once

#include <cstdint>

#include "dolma/error.hpp"

namespace dolma {

// Split of the compute node's local budget: the local data-object region,
// the remote data-object region (a software-managed cache in two equal
// halves), and the metadata region (table entries plus the demotion
// staging pool).
struct RegionLayout {
  std::uint64_t local_object_bytes = 0;
  std::uint64_t remote_cache_bytes = 0;  // even; halves of remote_cache_bytes/2
  std::uint64_t metadata_bytes = 0;

  std::uint64_t budget() const {
    return local_object_bytes + remote_cache_bytes + metadata_bytes;
  }
  std::uint64_t buffer_half_bytes() const { return remote_cache_bytes / 2; }

  void validate() const {
    if (remote_cache_bytes % 2 != 0)
      throw Error(ErrorCode::ConfigInvalid, "remote cache bytes must split into two equal halves");
  }
};

// Tagged object address. Bit 63 marks handles whose object was placed in
// remote memory at allocation time and therefore always redirects through
// the metadata table; the table stays authoritative for every object either
// way, since local residents may be demoted mid-lifetime.
class ObjectHandle {
 public:
  ObjectHandle() = default;

  static ObjectHandle local(std::uint64_t object_id) { return ObjectHandle(object_id); }
  static ObjectHandle remote(std::uint64_t object_id) {
    return ObjectHandle(object_id | kRemoteTag);
  }

  std::uint64_t object_id() const { return bits_ & ~kRemoteTag; }
  bool remote_tagged() const { return bits_ & kRemoteTag; }
  bool valid() const { return bits_ != 0; }

  friend bool operator==(ObjectHandle a, ObjectHandle b) { return a.bits_ == b.bits_; }

 private:
  explicit ObjectHandle(std::uint64_t bits) : bits_(bits) {}
  static constexpr std::uint64_t kRemoteTag = 1ull << 63;
  std::uint64_t bits_ = 0;
};

}  // namespace dolma
