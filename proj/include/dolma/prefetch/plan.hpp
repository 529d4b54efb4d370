#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dolma {

struct PlanEntry {
  std::uint64_t object_id = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

// Declared per-iteration read sets driving the dual-buffer prefetcher.
struct IterationPlan {
  std::vector<std::vector<PlanEntry>> iterations;
  unsigned depth = 1;  // how many iterations ahead to fetch

  bool empty() const { return iterations.empty(); }

  // Plan file: JSON list of iterations, each a list of
  // {"object_tag", "offset", "length"}; tags resolve through the given map.
  static IterationPlan load(const std::string& path,
                            const std::map<std::string, std::uint64_t>& tag_to_object);
};

// Derives a plan by observing iteration 0's reads and assuming the loop
// repeats them. The minimal mechanism for callers without explicit plans.
class PlanRecorder {
 public:
  void observe(std::uint64_t object_id, std::uint64_t offset, std::uint64_t length) {
    observed_.push_back({object_id, offset, length});
  }
  IterationPlan replicate(std::size_t iterations, unsigned depth = 1) const {
    IterationPlan plan;
    plan.depth = depth;
    plan.iterations.assign(iterations, observed_);
    return plan;
  }
  const std::vector<PlanEntry>& observed() const { return observed_; }

 private:
  std::vector<PlanEntry> observed_;
};

}  // namespace dolma
