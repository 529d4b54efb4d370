#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <map>
#include <random>

#include "dolma/fabric/sim_fabric.hpp"
#include "dolma/threads/pool.hpp"
#include "dolma/util/bytes.hpp"
#include "support/test_support.hpp"

using namespace dolma;

TEST_CASE("pool arithmetic: clusters and cache partitions") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 64 * MiB, 8 * MiB}, fab);  // 32 MiB halves

  ThreadPoolConfig config{8, 4};
  CHECK(config.clusters() == 2);
  ThreadPool pool(config, rt);
  CHECK(pool.clusters() == 2);
  CHECK(rt.partitions() == 8);
  for (unsigned t = 0; t < 8; ++t) CHECK(rt.partition_bytes(t) == 4 * MiB);
  CHECK(pool.cluster_of(3) == 0);
  CHECK(pool.cluster_of(4) == 1);

  // T=24, C=4 -> 6 clusters.
  CHECK((ThreadPoolConfig{24, 4}).clusters() == 6);
  // T=1 degenerates to a single cluster.
  CHECK((ThreadPoolConfig{1, 4}).clusters() == 1);
}

TEST_CASE("partition remainders go to the last thread") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 2 * MiB + 16, 8 * MiB}, fab);
  ThreadPool pool(ThreadPoolConfig{3, 4}, rt);
  const std::uint64_t half = rt.buffer_half_bytes();
  CHECK(rt.partition_bytes(0) == half / 3);
  CHECK(rt.partition_bytes(1) == half / 3);
  CHECK(rt.partition_bytes(2) == half - 2 * (half / 3));
}

TEST_CASE("per-thread FIFO through a shared cluster queue") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
  ThreadPool pool(ThreadPoolConfig{2, 2}, rt);  // both threads share one cluster
  const RemoteAddr base = fab.remote_alloc(1 * MiB);

  std::vector<std::vector<OpId>> submitted(2);
  std::vector<std::vector<std::uint8_t>> bufs(2, std::vector<std::uint8_t>(4096, 1));
  pool.run_parallel([&](unsigned t) {
    for (int i = 0; i < 50; ++i) {
      FabricOp op;
      op.kind = OpKind::Write;
      op.remote = {base.node_id, base.offset + t * 512 * KiB};
      op.length = 4096;
      op.local_src = bufs[t].data();
      submitted[t].push_back(pool.submit_via_cluster(t, op));
    }
  });

  // Each thread's completions arrive in its own submission order.
  std::vector<std::vector<OpId>> completed(2);
  pool.run_parallel([&](unsigned t) {
    pool.fence_cluster(t);
    for (const Completion& c : pool.poll_completions(t, 1000)) completed[t].push_back(c.op_id);
  });
  for (unsigned t = 0; t < 2; ++t) {
    // poll_completions routes by owner, so we only see our ops, in order.
    std::vector<OpId> mine = completed[t];
    std::vector<OpId> want;
    for (OpId id : submitted[t])
      if (std::find(mine.begin(), mine.end(), id) != mine.end()) want.push_back(id);
    CHECK(mine == want);
  }
}

TEST_CASE("independent clusters proceed on independent channels") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
  ThreadPool pool(ThreadPoolConfig{2, 1}, rt);  // one thread per cluster
  CHECK(pool.clusters() == 2);
  CHECK(pool.cluster_channel(0) != pool.cluster_channel(1));

  // Ops on one channel do not serialize behind the other's backlog.
  const RemoteAddr base = fab.remote_alloc(8 * MiB);
  std::vector<std::uint8_t> big(4 * MiB, 2);
  FabricOp slow;
  slow.kind = OpKind::Write;
  slow.remote = base;
  slow.length = big.size();
  slow.local_src = big.data();
  pool.submit_via_cluster(0, slow);

  std::uint8_t small_buf[8] = {9};
  FabricOp quick;
  quick.kind = OpKind::Write;
  quick.remote = {base.node_id, base.offset + 6 * MiB};
  quick.length = 8;
  quick.local_src = small_buf;
  const OpId qid = pool.submit_via_cluster(1, quick);
  const Completion c = pool.wait_op(1, qid);
  CHECK(c.completed_at_us < 424.0);  // did not wait for the 4 MiB write
}

TEST_CASE("conservation: 1000 ops from 8 threads complete exactly once") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
  ThreadPool pool(ThreadPoolConfig{8, 4}, rt);
  const RemoteAddr base = fab.remote_alloc(8 * MiB);

  std::vector<std::vector<std::uint8_t>> bufs(8, std::vector<std::uint8_t>(256, 7));
  std::vector<std::vector<OpId>> ids(8);
  pool.run_parallel([&](unsigned t) {
    for (int i = 0; i < 125; ++i) {
      FabricOp op;
      op.kind = OpKind::Write;
      op.remote = {base.node_id, base.offset + t * 1 * MiB};
      op.length = 256;
      op.local_src = bufs[t].data();
      ids[t].push_back(pool.submit_via_cluster(t, op));
    }
  });
  std::mutex mu;
  std::map<std::pair<unsigned, OpId>, int> seen;  // keyed by cluster to keep ids unique
  pool.run_parallel([&](unsigned t) {
    pool.fence_cluster(t);
    for (const Completion& c : pool.poll_completions(t, 10000)) {
      std::lock_guard lock(mu);
      seen[{pool.cluster_of(t), c.op_id}]++;
    }
  });
  std::size_t total = 0;
  for (const auto& [key, count] : seen) {
    CHECK(count == 1);
    total += static_cast<std::size_t>(count);
  }
  CHECK(total == 1000);
}

TEST_CASE("shared-object locks: mutual exclusion and independence") {
  SimFabric fab(64 * MiB, LatencyModel::infiniband_remote());
  Runtime rt(RegionLayout{0, 8 * MiB, 8 * MiB}, fab);
  ThreadPool pool(ThreadPoolConfig{2, 2}, rt);

  pool.register_shared(1);
  pool.register_shared(2);

  SUBCASE("two threads increment a shared counter 10^4 times each") {
    std::uint64_t counter = 0;
    pool.run_parallel([&](unsigned) {
      for (int i = 0; i < 10000; ++i) {
        pool.shared_lock(1);
        counter++;
        pool.shared_unlock(1);
      }
    });
    CHECK(counter == 20000);
  }

  SUBCASE("distinct objects lock independently") {
    pool.shared_lock(1);
    pool.shared_lock(2);  // no deadlock, no blocking
    pool.shared_unlock(2);
    pool.shared_unlock(1);
  }

  SUBCASE("recursive locking and foreign unlock are errors") {
    pool.shared_lock(1);
    CHECK_THROWS_AS(pool.shared_lock(1), Error);
    pool.shared_unlock(1);
    CHECK_THROWS_AS(pool.shared_unlock(1), Error);
    CHECK_THROWS_AS(pool.shared_lock(99), Error);  // unregistered
  }
}

TEST_CASE("scalability sanity: more threads never slow the simulated loop") {
  // Private objects, divisible work: simulated time at T should not exceed
  // the single-thread time.
  auto simulated_time = [](unsigned threads) {
    SimFabric fab(256 * MiB, LatencyModel::infiniband_remote());
    Runtime rt(RegionLayout{0, 64 * MiB, 16 * MiB}, fab);
    ThreadPool pool(ThreadPoolConfig{threads, 4}, rt);
    std::vector<ObjectHandle> objs(threads);
    for (unsigned t = 0; t < threads; ++t) {
      ExecScope scope(pool.context(t));
      objs[t] = rt.alloc(2 * MiB);
    }
    std::vector<std::vector<std::uint8_t>> bufs(threads,
                                                std::vector<std::uint8_t>(1 * MiB));
    for (unsigned iter = 0; iter < 4; ++iter) {
      std::vector<FetchTicket> tickets(threads);
      pool.run_sequential([&](unsigned t) {
        rt.demote(objs[t]);  // force a fresh fetch each iteration
        tickets[t] = rt.read(objs[t], 0, 1 * MiB, {bufs[t].data(), bufs[t].size()});
      });
      pool.run_sequential([&](unsigned t) { rt.acquire(tickets[t]); });
      fab.advance_us(8000.0 / threads);  // divisible compute
    }
    return fab.now_us();
  };
  const double t1 = simulated_time(1);
  const double t4 = simulated_time(4);
  const double t8 = simulated_time(8);
  CHECK(t4 <= t1 + 1e-6);
  CHECK(t8 <= t4 + 1e-6);
}
