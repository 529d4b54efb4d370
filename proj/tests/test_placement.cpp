#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "dolma/placement/placement.hpp"

using namespace dolma;

namespace {

ObjectDescriptor desc(std::uint64_t id, std::uint64_t size, std::uint64_t reads = 0,
                      std::uint64_t writes = 0) {
  ObjectDescriptor d;
  d.object_id = id;
  d.size = size;
  d.read_count = reads;
  d.write_count = writes;
  return d;
}

// Independent oracle: insertion sort with the four keys spelled out.
std::vector<ObjectDescriptor> oracle_rank(std::vector<ObjectDescriptor> v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    ObjectDescriptor key = v[i];
    std::size_t j = i;
    auto before = [](const ObjectDescriptor& a, const ObjectDescriptor& b) {
      if (a.size != b.size) return a.size > b.size;
      const auto at = a.read_count + a.write_count;
      const auto bt = b.read_count + b.write_count;
      if (at != bt) return at < bt;
      if (a.write_count != b.write_count) return a.write_count > b.write_count;
      return a.object_id < b.object_id;
    };
    while (j > 0 && before(key, v[j - 1])) {
      v[j] = v[j - 1];
      --j;
    }
    v[j] = key;
  }
  return v;
}

}  // namespace

TEST_CASE("classify: strictly larger than one page is LARGE") {
  CHECK(classify(desc(1, 4096)) == SizeClass::Small);
  CHECK(classify(desc(1, 4097)) == SizeClass::Large);
  CHECK(classify(desc(1, 1)) == SizeClass::Small);
  CHECK(classify(desc(1, 8192), 16384) == SizeClass::Small);  // custom page size
}

TEST_CASE("ranking principles on the spec'd examples") {
  // Size rules first.
  auto ranked = rank_for_remote({desc(1, 8 << 10), desc(2, 16 << 10)});
  CHECK(ranked[0].object_id == 2);
  CHECK(ranked[1].object_id == 1);

  // Equal sizes: fewest accesses first.
  ranked = rank_for_remote({desc(1, 8 << 10, 10, 0), desc(2, 8 << 10, 2, 0)});
  CHECK(ranked[0].object_id == 2);

  // Equal sizes and totals: more writes first.
  ranked = rank_for_remote({desc(1, 8 << 10, 5, 5), desc(2, 8 << 10, 8, 2)});
  CHECK(ranked[0].object_id == 1);
  CHECK(ranked[1].object_id == 2);
}

TEST_CASE("comparator is total and antisymmetric; ranking matches the oracle") {
  std::mt19937_64 rng(123);
  for (int round = 0; round < 200; ++round) {
    std::vector<ObjectDescriptor> objs;
    const int n = 2 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      // Narrow ranges force plenty of ties across all three principles.
      objs.push_back(desc(i + 1, (1 + rng() % 3) * 8192, rng() % 4, rng() % 4));
    }
    for (const auto& a : objs) {
      for (const auto& b : objs) {
        if (a.object_id == b.object_id) {
          CHECK_FALSE(remote_priority_less(a, b));
        } else {
          CHECK(remote_priority_less(a, b) != remote_priority_less(b, a));
        }
      }
    }
    const auto got = rank_for_remote(objs);
    const auto want = oracle_rank(objs);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].object_id == want[i].object_id);
  }
}

TEST_CASE("victim selection: shortest ranked prefix covering the need") {
  const std::vector<ObjectDescriptor> resident{desc(1, 16 << 10), desc(2, 8 << 10)};
  auto sel = select_victims(resident, 10 << 10);
  REQUIRE(sel.victims.size() == 1);
  CHECK(sel.victims[0].object_id == 1);
  CHECK_FALSE(sel.insufficient);

  CHECK(select_victims(resident, 0).victims.empty());

  sel = select_victims(resident, 100 << 10);
  CHECK(sel.victims.size() == 2);
  CHECK(sel.insufficient);
}

TEST_CASE("victim minimality: dropping the last victim undershoots") {
  std::mt19937_64 rng(77);
  for (int round = 0; round < 300; ++round) {
    std::vector<ObjectDescriptor> resident;
    const int n = 1 + static_cast<int>(rng() % 10);
    std::uint64_t total = 0;
    for (int i = 0; i < n; ++i) {
      resident.push_back(desc(i + 1, 4096 + rng() % 65536, rng() % 10, rng() % 10));
      total += resident.back().size;
    }
    const std::uint64_t needed = 1 + rng() % (total + 1024);
    const auto sel = select_victims(resident, needed);
    if (sel.insufficient) {
      CHECK(total < needed);
      continue;
    }
    CHECK(sel.covered_bytes >= needed);
    std::uint64_t without_last = sel.covered_bytes - sel.victims.back().size;
    CHECK(without_last < needed);
  }
}

TEST_CASE("access profile file seeds expected counters") {
  const auto dir = std::filesystem::temp_directory_path() / "dolma_placement_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "profile.json").string();
  {
    std::ofstream out(path);
    out << R"([{"object_tag":"a","expected_reads":10,"expected_writes":4},)"
        << R"({"object_tag":"u","expected_reads":1}])";
  }
  const auto profile = load_access_profile(path);
  REQUIRE(profile.size() == 2);
  CHECK(profile.at("a").expected_reads == 10);
  CHECK(profile.at("a").expected_writes == 4);
  CHECK(profile.at("u").expected_writes == 0);
  std::filesystem::remove_all(dir);
}
