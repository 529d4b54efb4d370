#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dolma/fabric/types.hpp"

namespace dolma {

// Calibrated (kind, pattern, size) -> microseconds table.
//
// Between calibration points the latency is linear in log(size). Below the
// smallest point the first segment is extended downward and clamped at the
// fixed per-op overhead floor. Above the largest point the transfer is
// bandwidth-bound: latency scales linearly with size from the last point.
class LatencyModel {
 public:
  struct Point {
    std::uint64_t size_bytes;
    double latency_us;
  };

  LatencyModel() = default;

  void add_point(OpKind kind, Pattern pattern, std::uint64_t size_bytes, double latency_us);
  void set_fixed_overhead_us(double us) { fixed_overhead_us_ = us; }
  void set_max_transfer_bytes(std::uint64_t b) { max_transfer_bytes_ = b; }

  double fixed_overhead_us() const { return fixed_overhead_us_; }
  std::uint64_t max_transfer_bytes() const { return max_transfer_bytes_; }
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  // Exact at calibration points; always >= fixed overhead; strictly positive.
  double estimate_us(OpKind kind, Pattern pattern, std::uint64_t size_bytes) const;

  // Built-in calibration profiles.
  static LatencyModel infiniband_remote();
  static LatencyModel ethernet_remote();  // approximate: InfiniBand scaled 4x
  static LatencyModel local_baseline();

  // JSON document: {"name", "fixed_overhead_us", "max_transfer_bytes",
  //                 "entries": [{"kind","pattern","size_bytes","latency_us"}]}
  static LatencyModel from_json_text(const std::string& text);
  std::string to_json_text() const;

  const std::vector<Point>& series(OpKind kind, Pattern pattern) const;

 private:
  std::map<std::pair<int, int>, std::vector<Point>> table_;
  double fixed_overhead_us_ = 2.0;
  std::uint64_t max_transfer_bytes_ = 1ull << 30;
  std::string name_;
};

// The pair of models a deployment calibrates: the remote fabric and the
// local-memory baseline the microbenchmarks normalize against.
struct CalibrationProfile {
  LatencyModel remote;
  LatencyModel local;

  static CalibrationProfile builtin(const std::string& name);  // "infiniband" | "ethernet"
  static CalibrationProfile load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace dolma
