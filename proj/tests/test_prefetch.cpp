#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "dolma/fabric/sim_fabric.hpp"
#include "dolma/prefetch/prefetcher.hpp"
#include "dolma/util/bytes.hpp"
#include "support/test_support.hpp"

using namespace dolma;

namespace {

// Single remote object, one read window per iteration, fixed compute charge:
// the overlap law in its purest form. Returns the per-iteration stalls.
std::vector<double> run_single_object_loop(double compute_us, std::uint64_t window_bytes,
                                           unsigned iterations, LatencyModel model,
                                           bool prefetch_on) {
  SimFabric fab(64 * MiB, std::move(model));
  Runtime rt(RegionLayout{0, 16 * MiB, 8 * MiB}, fab);
  ObjectHandle h = rt.alloc(8 * MiB);
  Prefetcher pf(rt);

  IterationPlan plan;
  if (prefetch_on) {
    plan.iterations.resize(iterations);
    for (unsigned i = 0; i < iterations; ++i) {
      const std::uint64_t offset = (i * window_bytes) % (8 * MiB - window_bytes + 1);
      plan.iterations[i].push_back({h.object_id(), offset, window_bytes});
    }
  }
  pf.register_plan(plan);

  std::vector<std::uint8_t> buf(window_bytes);
  for (unsigned i = 0; i < iterations; ++i) {
    pf.begin_iteration(i);
    const std::uint64_t offset = (i * window_bytes) % (8 * MiB - window_bytes + 1);
    FetchTicket t = rt.read(h, offset, window_bytes, {buf.data(), buf.size()});
    rt.acquire(t);
    fab.advance_us(compute_us);
  }
  return pf.stall_report().per_iteration;
}

LatencyModel fixed_latency_model(double read_us) {
  // One calibration point pins every read size to the same latency.
  LatencyModel m;
  m.set_fixed_overhead_us(0.5);
  m.set_max_transfer_bytes(1ull << 30);
  m.add_point(OpKind::Read, Pattern::Seq, 1 * MiB, read_us);
  m.add_point(OpKind::Read, Pattern::Rand, 1 * MiB, read_us);
  m.add_point(OpKind::Write, Pattern::Seq, 1 * MiB, read_us / 2);
  m.add_point(OpKind::Write, Pattern::Rand, 1 * MiB, read_us / 2);
  return m;
}

}  // namespace

TEST_CASE("overlap law: compute 1000us vs fetch 800us -> steady stall 0") {
  const auto stalls = run_single_object_loop(1000.0, 1 * MiB, 8, fixed_latency_model(800.0), true);
  REQUIRE(stalls.size() >= 8);
  CHECK(stalls[0] == doctest::Approx(800.0));  // cold start pays the full fetch
  for (std::size_t i = 1; i < 8; ++i) CHECK(stalls[i] == doctest::Approx(0.0));
}

TEST_CASE("overlap law: compute 1000us vs fetch 1500us -> steady stall 500us") {
  const auto stalls =
      run_single_object_loop(1000.0, 1 * MiB, 8, fixed_latency_model(1500.0), true);
  REQUIRE(stalls.size() >= 8);
  CHECK(stalls[0] == doctest::Approx(1500.0));
  for (std::size_t i = 1; i < 8; ++i) CHECK(stalls[i] == doctest::Approx(500.0));
}

TEST_CASE("prefetcher disabled: every iteration pays its own fetch") {
  const auto stalls =
      run_single_object_loop(1000.0, 1 * MiB, 6, fixed_latency_model(800.0), false);
  REQUIRE(stalls.size() >= 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(stalls[i] == doctest::Approx(800.0));
}

TEST_CASE("register_plan: empty plan disables, oversized plans truncate") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 4 * MiB, 8 * MiB}, fab);  // 2 MiB halves
  Prefetcher pf(rt);

  pf.register_plan(IterationPlan{});
  CHECK_FALSE(pf.enabled());
  pf.begin_iteration(0);  // no-op beyond the iteration counter
  CHECK(rt.iteration() == 0);

  ObjectHandle big = rt.alloc(8 * MiB);
  IterationPlan plan;
  plan.iterations.assign(3, {PlanEntry{big.object_id(), 0, 3 * MiB}});  // > one half
  pf.register_plan(std::move(plan));
  pf.begin_iteration(0);
  CHECK_FALSE(pf.warnings().empty());
  const auto& meta = rt.entry(big.object_id());
  REQUIRE(meta.cached.has_value());
  CHECK(meta.cached->length <= 2 * MiB);
}

TEST_CASE("swap keeps a single residency and serves fresh bytes") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
  ObjectHandle h = rt.alloc(1 * MiB);
  const auto seed_bytes = test::pattern_bytes(1, 1 * MiB);
  rt.write(h, 0, {seed_bytes.data(), seed_bytes.size()});
  rt.demote(h);

  Prefetcher pf(rt);
  IterationPlan plan;
  plan.iterations.assign(6, {PlanEntry{h.object_id(), 0, 1 * MiB}});
  pf.register_plan(std::move(plan));

  std::vector<std::uint8_t> buf(1 * MiB);
  std::vector<std::uint8_t> expect = seed_bytes;
  for (unsigned i = 0; i < 6; ++i) {
    pf.begin_iteration(i);
    const MetadataEntry& e = rt.entry(h.object_id());
    REQUIRE(e.cached.has_value());
    CHECK(e.cached->buffer == rt.active_buffer());  // never valid in both halves

    rt.acquire(rt.read(h, 0, 1 * MiB, {buf.data(), buf.size()}));
    CHECK(buf == expect);  // authoritative bytes for this iteration

    // Dirty the active copy; the next swap must patch and write back.
    auto delta = test::pattern_bytes(100 + i, 4096);
    rt.write(h, 512, {delta.data(), delta.size()});
    std::copy(delta.begin(), delta.end(), expect.begin() + 512);
    fab.advance_us(3000.0);
  }
  rt.flush();
  rt.demote(h);
  rt.acquire(rt.read(h, 0, 1 * MiB, {buf.data(), buf.size()}));
  CHECK(buf == expect);
}

TEST_CASE("monotone benefit: prefetch never slows a read-only plan") {
  std::mt19937_64 rng(9);
  for (int round = 0; round < 10; ++round) {
    const unsigned iterations = 4 + static_cast<unsigned>(rng() % 5);
    const std::uint64_t object_bytes = (2 + rng() % 6) * MiB;
    const std::uint64_t window = (1 + rng() % 2) * MiB / 2;
    const double compute = 200.0 + static_cast<double>(rng() % 2500);

    double elapsed[2];
    for (int on = 0; on < 2; ++on) {
      SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
      Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
      ObjectHandle h = rt.alloc(object_bytes);
      Prefetcher pf(rt);
      IterationPlan plan;
      if (on) {
        plan.iterations.resize(iterations);
        for (unsigned i = 0; i < iterations; ++i) {
          const std::uint64_t offset = (i * window) % (object_bytes - window + 1);
          plan.iterations[i].push_back({h.object_id(), offset, window});
        }
      }
      pf.register_plan(plan);
      std::vector<std::uint8_t> buf(window);
      for (unsigned i = 0; i < iterations; ++i) {
        pf.begin_iteration(i);
        const std::uint64_t offset = (i * window) % (object_bytes - window + 1);
        rt.acquire(rt.read(h, offset, window, {buf.data(), buf.size()}));
        fab.advance_us(compute);
      }
      elapsed[on] = fab.now_us();
    }
    CHECK(elapsed[1] <= elapsed[0] + 1e-6);
  }
}

TEST_CASE("plan recorder replicates iteration 0") {
  PlanRecorder recorder;
  recorder.observe(7, 0, 4096);
  recorder.observe(9, 1024, 512);
  const IterationPlan plan = recorder.replicate(5, 2);
  CHECK(plan.depth == 2);
  REQUIRE(plan.iterations.size() == 5);
  for (const auto& iter : plan.iterations) {
    REQUIRE(iter.size() == 2);
    CHECK(iter[0].object_id == 7);
    CHECK(iter[1].length == 512);
  }
}

TEST_CASE("begin_iteration requires consecutive indices") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 4 * MiB, 8 * MiB}, fab);
  ObjectHandle h = rt.alloc(1 * MiB);
  Prefetcher pf(rt);
  IterationPlan plan;
  plan.iterations.assign(4, {PlanEntry{h.object_id(), 0, 64 * KiB}});
  pf.register_plan(std::move(plan));
  pf.begin_iteration(0);
  CHECK_THROWS_AS(pf.begin_iteration(2), Error);
}
