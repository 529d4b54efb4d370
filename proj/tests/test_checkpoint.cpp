#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "dolma/checkpoint/checkpoint.hpp"
#include "dolma/fabric/sim_fabric.hpp"
#include "dolma/util/bytes.hpp"
#include "support/test_support.hpp"

using namespace dolma;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<std::uint8_t> read_object(Runtime& rt, ObjectHandle h, std::uint64_t size) {
  std::vector<std::uint8_t> out(size);
  std::uint64_t done = 0;
  while (done < size) {
    FetchTicket t = rt.read(h, done, size - done, {out.data() + done, size - done});
    done += rt.acquire(t).second;
  }
  return out;
}

}  // namespace

TEST_CASE("checkpoint/recover round trip preserves bytes and authority") {
  TempDir dir("dolma_ckpt_roundtrip");
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{1 * MiB, 4 * MiB, 8 * MiB}, fab);
  CheckpointManager manager(rt);

  ObjectHandle local_obj = rt.alloc(64 * KiB, "local");
  ObjectHandle remote_obj = rt.alloc(2 * MiB, "remote");
  const auto local_bytes = test::pattern_bytes(1, 64 * KiB);
  const auto remote_bytes = test::pattern_bytes(2, 2 * MiB);
  rt.write(local_obj, 0, {local_bytes.data(), local_bytes.size()});
  rt.write(remote_obj, 0, {remote_bytes.data(), remote_bytes.size()});

  CheckpointTicket ticket = manager.checkpoint_async(dir.file("c1.dlck"));
  ticket.wait();

  SimFabric fab2(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt2(RegionLayout{1 * MiB, 4 * MiB, 8 * MiB}, fab2);
  recover(dir.file("c1.dlck"), rt2);

  const MetadataEntry& e_local = rt2.entry(local_obj.object_id());
  CHECK(e_local.location == Location::Local);
  CHECK(e_local.tag == "local");
  const MetadataEntry& e_remote = rt2.entry(remote_obj.object_id());
  CHECK(e_remote.location == Location::Remote);
  CHECK(e_remote.home.has_value());

  CHECK(read_object(rt2, local_obj, 64 * KiB) == local_bytes);
  CHECK(read_object(rt2, remote_obj, 2 * MiB) == remote_bytes);
}

TEST_CASE("selective update writes exactly the dirty set") {
  TempDir dir("dolma_ckpt_selective");
  SimFabric fab(128 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 4 * MiB, 8 * MiB}, fab);
  CheckpointManager manager(rt);

  std::vector<ObjectHandle> objs;
  for (int i = 0; i < 10; ++i) {
    objs.push_back(rt.alloc(256 * KiB, "obj" + std::to_string(i)));
    const auto bytes = test::pattern_bytes(i, 256 * KiB);
    rt.write(objs.back(), 0, {bytes.data(), bytes.size()});
  }

  // First checkpoint captures everything.
  manager.checkpoint_async(dir.file("c1.dlck")).wait();
  ParsedCheckpoint first = read_checkpoint(dir.file("c1.dlck"));
  CHECK(std::count_if(first.objects.begin(), first.objects.end(),
                      [](const CheckpointObject& o) { return o.fresh; }) == 10);

  // Dirty exactly one object; the second checkpoint carries 9 by reference.
  const auto delta = test::pattern_bytes(99, 4096);
  rt.write(objs[3], 512, {delta.data(), delta.size()});
  manager.checkpoint_async(dir.file("c2.dlck")).wait();

  ParsedCheckpoint second = read_checkpoint(dir.file("c2.dlck"));
  CHECK(second.epoch > first.epoch);
  unsigned fresh = 0, carried = 0;
  for (const auto& o : second.objects) {
    if (o.fresh) {
      fresh++;
      CHECK(o.object_id == objs[3].object_id());
    } else {
      carried++;
      CHECK(o.ref.path == dir.file("c1.dlck"));
    }
  }
  CHECK(fresh == 1);
  CHECK(carried == 9);

  // Recovery through the chain still reproduces every byte.
  SimFabric fab2(128 * MiB, LatencyModel::infiniband_remote());
  Runtime rt2(RegionLayout{0, 4 * MiB, 8 * MiB}, fab2);
  recover(dir.file("c2.dlck"), rt2);
  for (int i = 0; i < 10; ++i) {
    auto expect = test::pattern_bytes(i, 256 * KiB);
    if (i == 3)
      std::copy(delta.begin(), delta.end(), expect.begin() + 512);
    CHECK(read_object(rt2, objs[i], 256 * KiB) == expect);
  }
}

TEST_CASE("randomized quiesced states round trip") {
  TempDir dir("dolma_ckpt_random");
  std::mt19937_64 rng(5);
  for (int round = 0; round < 5; ++round) {
    SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
    Runtime rt(RegionLayout{128 * KiB, 1 * MiB, 8 * MiB}, fab);
    CheckpointManager manager(rt);

    std::map<std::uint64_t, std::vector<std::uint8_t>> expect;
    std::vector<ObjectHandle> handles;
    const int objects = 3 + static_cast<int>(rng() % 6);
    for (int i = 0; i < objects; ++i) {
      const std::uint64_t size = 64 + rng() % (256 * KiB);
      ObjectHandle h = rt.alloc(size);
      auto bytes = test::pattern_bytes(rng(), size);
      rt.write(h, 0, {bytes.data(), bytes.size()});
      expect[h.object_id()] = std::move(bytes);
      handles.push_back(h);
    }
    const std::string path = dir.file("r" + std::to_string(round) + ".dlck");
    manager.checkpoint_async(path).wait();

    SimFabric fab2(64 * MiB, LatencyModel::infiniband_remote());
    Runtime rt2(RegionLayout{128 * KiB, 1 * MiB, 8 * MiB}, fab2);
    recover(path, rt2);
    CHECK(rt2.live_objects() == expect.size());
    for (ObjectHandle h : handles) {
      const auto& want = expect.at(h.object_id());
      CHECK(read_object(rt2, h, want.size()) == want);
      CHECK((rt2.entry(h.object_id()).location == Location::Local) ==
            (rt.entry(h.object_id()).location == Location::Local));
    }
  }
}

TEST_CASE("pending demotions are fenced into the snapshot") {
  TempDir dir("dolma_ckpt_fence");
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
  CheckpointManager manager(rt);

  ObjectHandle h = rt.alloc(2 * MiB);
  const auto bytes = test::pattern_bytes(8, 2 * MiB);
  rt.write(h, 0, {bytes.data(), bytes.size()});
  rt.demote(h);  // async write-back in flight
  manager.checkpoint_async(dir.file("c.dlck")).wait();

  SimFabric fab2(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt2(RegionLayout{0, 8 * MiB, 8 * MiB}, fab2);
  recover(dir.file("c.dlck"), rt2);
  CHECK(read_object(rt2, h, 2 * MiB) == bytes);
}

TEST_CASE("materialize flattens a chain into one self-contained file") {
  TempDir dir("dolma_ckpt_mat");
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 4 * MiB, 8 * MiB}, fab);
  CheckpointManager manager(rt);

  ObjectHandle a = rt.alloc(128 * KiB);
  ObjectHandle b = rt.alloc(128 * KiB);
  const auto bytes_a = test::pattern_bytes(1, 128 * KiB);
  const auto bytes_b = test::pattern_bytes(2, 128 * KiB);
  rt.write(a, 0, {bytes_a.data(), bytes_a.size()});
  rt.write(b, 0, {bytes_b.data(), bytes_b.size()});
  manager.checkpoint_async(dir.file("c1.dlck")).wait();
  const auto delta = test::pattern_bytes(3, 64);
  rt.write(a, 0, {delta.data(), delta.size()});
  manager.checkpoint_async(dir.file("c2.dlck")).wait();

  materialize(dir.file("c2.dlck"), dir.file("flat.dlck"));
  std::filesystem::remove(dir.file("c1.dlck"));  // chain gone

  // The chained file now fails, the flattened one still recovers.
  SimFabric fab2(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt2(RegionLayout{0, 4 * MiB, 8 * MiB}, fab2);
  CHECK_THROWS_WITH_AS(recover(dir.file("c2.dlck"), rt2),
                       doctest::Contains("CHAIN_UNRESOLVABLE"), Error);

  SimFabric fab3(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt3(RegionLayout{0, 4 * MiB, 8 * MiB}, fab3);
  recover(dir.file("flat.dlck"), rt3);
  auto expect_a = bytes_a;
  std::copy(delta.begin(), delta.end(), expect_a.begin());
  CHECK(read_object(rt3, a, 128 * KiB) == expect_a);
  CHECK(read_object(rt3, b, 128 * KiB) == bytes_b);
}

TEST_CASE("corrupt sections are named; small nodes hit REMOTE_OOM") {
  TempDir dir("dolma_ckpt_corrupt");
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 4 * MiB, 8 * MiB}, fab);
  CheckpointManager manager(rt);
  ObjectHandle h = rt.alloc(4 * MiB);
  const auto bytes = test::pattern_bytes(1, 4 * MiB);
  rt.write(h, 0, {bytes.data(), bytes.size()});
  manager.checkpoint_async(dir.file("c.dlck")).wait();

  // Flip one byte inside the metadata section.
  {
    std::fstream f(dir.file("c.dlck"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(50);
    f.put('\x5a');
  }
  SimFabric fab2(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt2(RegionLayout{0, 4 * MiB, 8 * MiB}, fab2);
  CHECK_THROWS_WITH_AS(recover(dir.file("c.dlck"), rt2), doctest::Contains("metadata"), Error);

  // Recovering onto a memory node that cannot fit the payload.
  manager.checkpoint_async(dir.file("c2.dlck")).wait();
  SimFabric tiny(2 * MiB, LatencyModel::infiniband_remote());
  Runtime rt3(RegionLayout{0, 1 * MiB, 8 * MiB}, tiny);
  CHECK_THROWS_WITH_AS(recover(dir.file("c2.dlck"), rt3), doctest::Contains("REMOTE_OOM"),
                       Error);
}

TEST_CASE("one checkpoint in flight; extra requests coalesce to the barrier") {
  TempDir dir("dolma_ckpt_coalesce");
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 4 * MiB, 8 * MiB}, fab);
  CheckpointManager manager(rt, 2);

  ObjectHandle h = rt.alloc(1 * MiB);
  const auto bytes = test::pattern_bytes(4, 1 * MiB);
  rt.write(h, 0, {bytes.data(), bytes.size()});

  CheckpointTicket first = manager.checkpoint_async(dir.file("a.dlck"));
  CheckpointTicket queued = manager.checkpoint_async(dir.file("b.dlck"));
  CHECK(queued.valid());
  first.wait();
  // The queued request fires at the next barrier.
  manager.on_iteration_barrier(1, dir.path.string());
  queued.wait();
  CHECK(std::filesystem::exists(dir.file("b.dlck")));

  // Interval-driven checkpoints trigger every K iterations.
  const auto taken_before = manager.checkpoints_taken();
  CheckpointTicket periodic = manager.on_iteration_barrier(2, dir.path.string());
  REQUIRE(periodic.valid());
  periodic.wait();
  CHECK(manager.checkpoints_taken() == taken_before + 1);
}
