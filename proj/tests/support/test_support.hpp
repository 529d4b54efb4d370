#pragma once

// Shared helpers for the unit and acceptance suites: a sequential in-memory
// oracle for differential tests, a randomized runtime workload driver, and
// an in-process memory node + TCP fabric bundle.

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include "dolma/fabric/sim_fabric.hpp"
#include "dolma/fabric/tcp_fabric.hpp"
#include "dolma/memnode/server.hpp"
#include "dolma/runtime/runtime.hpp"

namespace dolma::test {

// The oracle: object bytes as plain vectors, writes applied immediately.
class OracleMap {
 public:
  void alloc(std::uint64_t id, std::uint64_t size) { objects_[id].assign(size, 0); }
  void free(std::uint64_t id) { objects_.erase(id); }
  void write(std::uint64_t id, std::uint64_t offset, std::span<const std::uint8_t> src) {
    auto& bytes = objects_.at(id);
    std::copy(src.begin(), src.end(), bytes.begin() + static_cast<std::ptrdiff_t>(offset));
  }
  std::vector<std::uint8_t> read(std::uint64_t id, std::uint64_t offset,
                                 std::uint64_t length) const {
    const auto& bytes = objects_.at(id);
    return {bytes.begin() + static_cast<std::ptrdiff_t>(offset),
            bytes.begin() + static_cast<std::ptrdiff_t>(offset + length)};
  }
  const std::map<std::uint64_t, std::vector<std::uint8_t>>& objects() const { return objects_; }

 private:
  std::map<std::uint64_t, std::vector<std::uint8_t>> objects_;
};

struct FuzzConfig {
  std::uint64_t seed = 1;
  unsigned ops = 10000;
  unsigned max_objects = 24;
  std::uint64_t max_object_bytes = 96 * 1024;
  RegionLayout layout{64 * 1024, 128 * 1024, 8 * 1024 * 1024};
};

// Randomized alloc/read+acquire/write/demote/flush sequence driven against
// both the runtime and the oracle; verifies every read's bytes match and
// returns the op count executed.
unsigned run_differential_fuzz(Runtime& rt, const FuzzConfig& config);

// In-process memory node with a connected TCP fabric.
struct TcpHarness {
  std::unique_ptr<MemNodeServer> server;
  std::unique_ptr<TcpFabric> fabric;
};
TcpHarness make_tcp_harness(std::uint64_t capacity, LatencyModel model);

inline std::vector<std::uint8_t> pattern_bytes(std::uint64_t seed, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ull + 1;
  for (std::size_t i = 0; i < n; ++i) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    out[i] = static_cast<std::uint8_t>(x);
  }
  return out;
}

}  // namespace dolma::test
