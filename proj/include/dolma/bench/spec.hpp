#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dolma/util/bytes.hpp"

namespace dolma::bench {

enum class AccessPattern : std::uint8_t { SeqStride, Random, ChainedDependent };
enum class Lifetime : std::uint8_t { Persistent, Iteration, InitPhase };

const char* to_string(AccessPattern p);
const char* to_string(Lifetime l);

struct ObjectGroup {
  std::string tag;
  unsigned count = 1;
  std::uint64_t size_bytes = 0;
  Lifetime lifetime = Lifetime::Persistent;
  bool accessed = true;  // takes part in the per-iteration access schedule
};

// Synthetic iterative kernel description. Per iteration the kernel touches
// `slices_per_iteration` slices of `slice_bytes` across the accessed
// objects, mixing reads and writes by the read:write ratio, then charges
// `compute_us` of model compute (divided across threads when scalable).
struct WorkloadSpec {
  std::string name = "custom";
  unsigned iterations = 10;
  double compute_us = 0.0;
  bool compute_scalable = true;
  std::vector<ObjectGroup> groups;
  AccessPattern pattern = AccessPattern::SeqStride;
  unsigned read_parts = 1;
  unsigned write_parts = 1;
  std::uint64_t slice_bytes = 2 * MiB;
  unsigned slices_per_iteration = 6;
  unsigned threads = 1;
  unsigned cluster_size = 4;
  std::uint64_t seed = 42;
  std::string access_profile_path;  // optional expected-access seeding
  std::string plan_path;            // optional explicit prefetch plan

  std::uint64_t total_payload() const;
  void validate() const;

  // Scales sizes, slice granularity, and compute together: the knob for
  // input-size sweeps.
  WorkloadSpec scaled(double factor) const;

  static WorkloadSpec preset(const std::string& name);
  static const std::vector<std::string>& preset_names();
  static WorkloadSpec load(const std::string& path);
  std::string to_json_text() const;
};

}  // namespace dolma::bench
