#include "dolma/placement/placement.hpp"

#include <algorithm>
#include <fstream>

#include "dolma/error.hpp"
#include "json.hpp"

namespace dolma {

SizeClass classify(const ObjectDescriptor& desc, std::uint64_t page_size) {
  return desc.size > page_size ? SizeClass::Large : SizeClass::Small;
}

bool remote_priority_less(const ObjectDescriptor& a, const ObjectDescriptor& b) {
  if (a.size != b.size) return a.size > b.size;
  const std::uint64_t a_total = a.read_count + a.write_count;
  const std::uint64_t b_total = b.read_count + b.write_count;
  if (a_total != b_total) return a_total < b_total;
  if (a.write_count != b.write_count) return a.write_count > b.write_count;
  return a.object_id < b.object_id;
}

std::vector<ObjectDescriptor> rank_for_remote(std::vector<ObjectDescriptor> objects) {
  std::sort(objects.begin(), objects.end(), remote_priority_less);
  return objects;
}

VictimSelection select_victims(const std::vector<ObjectDescriptor>& resident,
                               std::uint64_t needed) {
  VictimSelection out;
  if (needed == 0) return out;
  std::vector<ObjectDescriptor> ranked = rank_for_remote(resident);
  for (const ObjectDescriptor& desc : ranked) {
    out.victims.push_back(desc);
    out.covered_bytes += desc.size;
    if (out.covered_bytes >= needed) return out;
  }
  out.insufficient = true;
  return out;
}

std::map<std::string, AccessProfileEntry> load_access_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open access profile " + path);
  nlohmann::json j;
  in >> j;
  std::map<std::string, AccessProfileEntry> out;
  for (const auto& e : j) {
    AccessProfileEntry entry;
    entry.expected_reads = e.value("expected_reads", 0ull);
    entry.expected_writes = e.value("expected_writes", 0ull);
    out[e.at("object_tag").get<std::string>()] = entry;
  }
  return out;
}

}  // namespace dolma
