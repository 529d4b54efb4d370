#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dolma {

enum class Location : std::uint8_t { Local, Remote, RemoteCached };
enum class SizeClass : std::uint8_t { Small, Large };

// Per-object statistics driving placement decisions. Counts are maintained
// online by the runtime and may be seeded from an access profile.
struct ObjectDescriptor {
  std::uint64_t object_id = 0;
  std::uint64_t size = 0;
  std::uint64_t read_count = 0;
  std::uint64_t write_count = 0;
  std::uint64_t alloc_iteration = 0;
  std::optional<std::uint64_t> free_iteration;
  Location location = Location::Local;
};

inline constexpr std::uint64_t kDefaultPageSize = 4096;

// LARGE iff strictly larger than a page.
SizeClass classify(const ObjectDescriptor& desc, std::uint64_t page_size = kDefaultPageSize);

// Remote-placement priority: larger first; among equal sizes, fewer total
// accesses first; among those, more writes first; object id breaks the rest.
// Total and antisymmetric, so the ranking is unique.
bool remote_priority_less(const ObjectDescriptor& a, const ObjectDescriptor& b);

std::vector<ObjectDescriptor> rank_for_remote(std::vector<ObjectDescriptor> objects);

struct VictimSelection {
  std::vector<ObjectDescriptor> victims;
  std::uint64_t covered_bytes = 0;
  bool insufficient = false;  // resident total smaller than the request
};

// Shortest rank_for_remote prefix whose sizes sum to at least `needed`.
VictimSelection select_victims(const std::vector<ObjectDescriptor>& resident,
                               std::uint64_t needed);

// Optional profile seeding expected access counts by object tag:
// JSON list of {"object_tag", "expected_reads", "expected_writes"}.
struct AccessProfileEntry {
  std::uint64_t expected_reads = 0;
  std::uint64_t expected_writes = 0;
};
std::map<std::string, AccessProfileEntry> load_access_profile(const std::string& path);

}  // namespace dolma
