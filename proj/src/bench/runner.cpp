#include "dolma/bench/runner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <random>

#include "dolma/fabric/sim_fabric.hpp"
#include "dolma/fabric/tcp_fabric.hpp"
#include "dolma/prefetch/prefetcher.hpp"
#include "dolma/threads/pool.hpp"
#include "dolma/util/bytes.hpp"

namespace dolma::bench {

namespace {

constexpr std::uint64_t kMetadataAllowance = 44 * MiB;  // 32 MiB staging + table slack
constexpr std::uint64_t kOracleSlack = 32 * MiB;

struct Access {
  unsigned obj = 0;  // index into the accessed-object list
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  bool is_write = false;          // write entries run after compute
  std::uint64_t chain_index = 0;  // ChainedDependent lookups
};

struct AccessedObject {
  unsigned group = 0;
  std::uint64_t size = 0;
  unsigned owner_thread = 0;
  std::string tag;
};

struct Plan {
  std::vector<AccessedObject> objects;
  // [iteration][thread] -> accesses (reads first, then writes)
  std::vector<std::vector<std::vector<Access>>> schedule;
  std::uint64_t max_read_bytes = 0;
};

// Precomputes every access deterministically from the seed; the same plan
// drives the oracle pass, the disaggregated pass, and the prefetcher.
//
// Each touched object receives one contiguous read window per iteration
// (sliding for SEQ_STRIDE, seeded-random placement for RANDOM); the
// read:write ratio decides which window slices are rewritten after compute.
Plan build_plan(const WorkloadSpec& spec) {
  Plan plan;
  for (unsigned g = 0; g < spec.groups.size(); ++g) {
    const ObjectGroup& group = spec.groups[g];
    if (group.lifetime != Lifetime::Persistent || !group.accessed) continue;
    for (unsigned c = 0; c < group.count; ++c) {
      AccessedObject obj;
      obj.group = g;
      obj.size = group.size_bytes;
      obj.owner_thread = static_cast<unsigned>(plan.objects.size()) % spec.threads;
      obj.tag = group.tag + (group.count > 1 ? "#" + std::to_string(c) : "");
      plan.objects.push_back(obj);
    }
  }
  if (plan.objects.empty())
    throw Error(ErrorCode::ConfigInvalid, "workload has no accessed persistent objects");

  std::vector<std::vector<unsigned>> by_thread(spec.threads);
  for (unsigned i = 0; i < plan.objects.size(); ++i)
    by_thread[plan.objects[i].owner_thread].push_back(i);
  // Threads without private objects fall back to thread 0's list; presets
  // avoid this, hand-written specs may not.
  for (auto& list : by_thread)
    if (list.empty()) list = by_thread[0];

  std::mt19937_64 rng(spec.seed);
  std::uint64_t mix = 0;  // Bresenham state for the read:write ratio

  plan.schedule.assign(spec.iterations, {});
  for (unsigned i = 0; i < spec.iterations; ++i) {
    plan.schedule[i].assign(spec.threads, {});
    for (unsigned t = 0; t < spec.threads; ++t) {
      const unsigned base = spec.slices_per_iteration / spec.threads;
      const unsigned extra = t < spec.slices_per_iteration % spec.threads ? 1 : 0;
      const unsigned slots = base + extra;
      if (slots == 0) continue;
      const auto& objs = by_thread[t];

      // Window assignment: rotate objects when there are more objects than
      // slots, otherwise split the slots across the objects.
      struct Window {
        unsigned obj;
        unsigned slices;
      };
      std::vector<Window> windows;
      if (objs.size() >= slots) {
        for (unsigned k = 0; k < slots; ++k)
          windows.push_back(
              {objs[(static_cast<std::uint64_t>(i) * slots + k) % objs.size()], 1});
      } else {
        const unsigned per_obj = slots / static_cast<unsigned>(objs.size());
        unsigned remainder = slots % static_cast<unsigned>(objs.size());
        for (unsigned o = 0; o < objs.size(); ++o) {
          unsigned n = per_obj + (o < remainder ? 1 : 0);
          if (n > 0) windows.push_back({objs[o], n});
        }
      }

      std::vector<Access> reads;
      std::vector<Access> writes;
      for (const Window& w : windows) {
        const AccessedObject& obj = plan.objects[w.obj];
        const std::uint64_t span = std::max<std::uint64_t>(1, obj.size / spec.slice_bytes);
        const std::uint64_t window_slices = std::min<std::uint64_t>(w.slices, span);
        const std::uint64_t max_start = span - window_slices;

        std::uint64_t start = 0;
        if (max_start > 0) {
          switch (spec.pattern) {
            case AccessPattern::SeqStride:
              start = (static_cast<std::uint64_t>(i) * window_slices) % (max_start + 1);
              break;
            case AccessPattern::Random:
            case AccessPattern::ChainedDependent:
              start = rng() % (max_start + 1);
              break;
          }
        }

        Access read;
        read.obj = w.obj;
        read.offset = start * spec.slice_bytes;
        read.length =
            std::min<std::uint64_t>(window_slices * spec.slice_bytes, obj.size - read.offset);
        read.chain_index = rng() % span;
        reads.push_back(read);
        plan.max_read_bytes = std::max(plan.max_read_bytes, read.length);

        // Rewrite window slices per the ratio: r reads carry w writes.
        for (std::uint64_t s = 0; s < window_slices; ++s) {
          mix += spec.write_parts;
          if (mix >= spec.read_parts) {
            mix -= spec.read_parts;
            Access wr;
            wr.obj = w.obj;
            wr.offset = (start + s) * spec.slice_bytes;
            wr.length = std::min<std::uint64_t>(spec.slice_bytes, obj.size - wr.offset);
            wr.is_write = true;
            writes.push_back(wr);
          }
        }
      }
      auto& out = plan.schedule[i][t];
      out.insert(out.end(), reads.begin(), reads.end());
      out.insert(out.end(), writes.begin(), writes.end());
    }
  }
  return plan;
}

std::unique_ptr<Fabric> make_fabric(const BenchBackend& backend,
                                    const CalibrationProfile& profile, std::uint64_t capacity) {
  if (backend.kind == BenchBackend::Kind::Sim)
    return std::make_unique<SimFabric>(capacity, profile.remote);
  return std::make_unique<TcpFabric>(backend.host, backend.port, profile.remote);
}

struct PassResult {
  double time_us = 0.0;
  RuntimeStats stats;
  std::vector<std::string> warnings;
};

PassResult run_pass(const WorkloadSpec& spec, const Plan& plan, const RegionLayout& layout,
                    const BenchToggles& toggles, bool prefetch_enabled, Fabric& fabric) {
  const double t0 = fabric.now_us();

  RuntimeOptions options = RuntimeOptions::from_env();
  options.async_write = toggles.async_write;
  options.staging_bytes = std::min<std::uint64_t>(32 * MiB, layout.metadata_bytes * 3 / 4);
  Runtime rt(layout, fabric, options);
  if (!spec.access_profile_path.empty())
    rt.seed_access_profile(load_access_profile(spec.access_profile_path));
  ThreadPoolConfig pool_config{spec.threads, spec.cluster_size};
  ThreadPool pool(pool_config, rt);

  const Pattern hint = spec.pattern == AccessPattern::SeqStride ? Pattern::Seq : Pattern::Rand;

  // --- allocation phase --------------------------------------------------
  std::vector<ObjectHandle> handles(plan.objects.size());
  {
    unsigned accessed_index = 0;
    for (unsigned g = 0; g < spec.groups.size(); ++g) {
      const ObjectGroup& group = spec.groups[g];
      if (group.lifetime == Lifetime::InitPhase) {
        // Rolling churn: a bounded window of short-lived allocations.
        std::deque<ObjectHandle> window;
        for (unsigned c = 0; c < group.count; ++c) {
          window.push_back(rt.alloc(group.size_bytes, group.tag));
          if (window.size() > 2000) {
            rt.free(window.front());
            window.pop_front();
          }
        }
        while (!window.empty()) {
          rt.free(window.front());
          window.pop_front();
        }
      } else if (group.lifetime == Lifetime::Persistent) {
        for (unsigned c = 0; c < group.count; ++c) {
          if (group.accessed) {
            const AccessedObject& obj = plan.objects[accessed_index];
            ExecScope scope(pool.context(obj.owner_thread));
            handles[accessed_index] = rt.alloc(group.size_bytes, obj.tag);
            accessed_index++;
          } else {
            rt.alloc(group.size_bytes, group.tag);
          }
        }
      }
    }
  }

  // Chained lookups run through per-thread index objects over the target.
  std::vector<ObjectHandle> chain_index(spec.threads);
  if (spec.pattern == AccessPattern::ChainedDependent) {
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    for (unsigned t = 0; t < spec.threads; ++t) {
      const AccessedObject& target =
          plan.objects[plan.schedule[0][t].empty() ? 0 : plan.schedule[0][t][0].obj];
      const std::uint64_t span = std::max<std::uint64_t>(1, target.size / spec.slice_bytes);
      ExecScope scope(pool.context(t));
      chain_index[t] = rt.alloc(span * 8, "chain_idx#" + std::to_string(t));
      std::vector<std::uint8_t> init(span * 8);
      for (std::uint64_t j = 0; j < span; ++j) store_le64(init.data() + j * 8, rng() % span);
      rt.write(chain_index[t], 0, {init.data(), init.size()});
    }
  }

  // --- prefetch plan -------------------------------------------------------
  Prefetcher prefetcher(rt, pool.cluster_channels());
  if (prefetch_enabled && spec.pattern != AccessPattern::ChainedDependent) {
    IterationPlan iplan;
    if (!spec.plan_path.empty()) {
      std::map<std::string, std::uint64_t> tags;
      for (unsigned i = 0; i < plan.objects.size(); ++i)
        tags[plan.objects[i].tag] = handles[i].object_id();
      iplan = IterationPlan::load(spec.plan_path, tags);
    } else {
      iplan.iterations.resize(spec.iterations);
      for (unsigned i = 0; i < spec.iterations; ++i) {
        for (unsigned t = 0; t < spec.threads; ++t)
          for (const Access& a : plan.schedule[i][t])
            if (!a.is_write)
              iplan.iterations[i].push_back({handles[a.obj].object_id(), a.offset, a.length});
      }
    }
    prefetcher.register_plan(std::move(iplan));
  }

  // --- iterations -----------------------------------------------------------
  std::vector<std::vector<std::uint8_t>> scratch(
      spec.threads,
      std::vector<std::uint8_t>(std::max<std::uint64_t>(plan.max_read_bytes, spec.slice_bytes)));
  std::vector<std::uint8_t> src(spec.slice_bytes);
  for (std::size_t b = 0; b < src.size(); ++b)
    src[b] = static_cast<std::uint8_t>((b * 131 + spec.seed) & 0xff);

  for (unsigned i = 0; i < spec.iterations; ++i) {
    prefetcher.begin_iteration(i);

    std::vector<ObjectHandle> iteration_objects;
    for (const ObjectGroup& group : spec.groups) {
      if (group.lifetime != Lifetime::Iteration) continue;
      for (unsigned c = 0; c < group.count; ++c) {
        ObjectHandle h = rt.alloc(group.size_bytes, group.tag);
        rt.write(h, 0, {src.data(), std::min<std::uint64_t>(group.size_bytes, src.size())});
        iteration_objects.push_back(h);
      }
    }

    // Issue the reads first (the deferred barrier), acquire just before
    // compute, compute, then write results back.
    std::vector<FetchTicket> deferred;
    std::vector<std::pair<unsigned, const Access*>> writes;
    pool.run_sequential([&](unsigned t) {
      for (const Access& a : plan.schedule[i][t]) {
        if (a.is_write) {
          writes.emplace_back(t, &a);
          continue;
        }
        if (spec.pattern == AccessPattern::ChainedDependent) {
          FetchTicket ticket =
              rt.resolve_indirect(handles[a.obj], chain_index[t], a.chain_index,
                                  spec.slice_bytes, {scratch[t].data(), scratch[t].size()});
          rt.acquire(ticket);
          continue;
        }
        FetchTicket ticket = rt.read(handles[a.obj], a.offset, a.length,
                                     {scratch[t].data(), scratch[t].size()}, hint);
        if (ticket.length == a.length) {
          deferred.push_back(ticket);
        } else {
          // The cache can hold only a prefix: loop acquire cycles.
          std::uint64_t done = rt.acquire(ticket).second;
          while (done < a.length) {
            FetchTicket more = rt.read(handles[a.obj], a.offset + done, a.length - done,
                                       {scratch[t].data(), scratch[t].size()}, hint);
            done += rt.acquire(more).second;
          }
        }
      }
    });
    for (const FetchTicket& ticket : deferred) rt.acquire(ticket);

    fabric.advance_us(spec.compute_us / (spec.compute_scalable ? spec.threads : 1));

    for (const auto& [t, a] : writes) {
      ExecScope scope(pool.context(t));
      rt.write(handles[a->obj], a->offset, {src.data(), a->length}, hint);
    }

    for (ObjectHandle h : iteration_objects) rt.free(h);
  }

  rt.flush();

  PassResult result;
  result.time_us = fabric.now_us() - t0;
  result.stats = rt.stats();
  result.warnings = prefetcher.warnings();
  return result;
}

}  // namespace

RunReport run_workload(const WorkloadSpec& spec, double fraction, const BenchToggles& toggles,
                       const CalibrationProfile& profile, const BenchBackend& backend) {
  spec.validate();
  if (fraction <= 0.0 || fraction > 1.0)
    throw Error(ErrorCode::ConfigInvalid, "fraction must be in (0, 1]");
  const Plan plan = build_plan(spec);

  // Oracle pass: everything local.
  const std::uint64_t payload_estimate = spec.total_payload();
  RegionLayout oracle_layout;
  oracle_layout.local_object_bytes = payload_estimate * 2 + kOracleSlack;
  oracle_layout.remote_cache_bytes = 0;
  oracle_layout.metadata_bytes = kMetadataAllowance;

  auto oracle_fabric = make_fabric(backend, profile, 64 * MiB);
  PassResult oracle =
      run_pass(spec, plan, oracle_layout, toggles, /*prefetch=*/false, *oracle_fabric);
  if (oracle.stats.fabric_reads + oracle.stats.fabric_writes != 0)
    throw Error(ErrorCode::ConfigInvalid, "oracle pass touched the fabric");

  const std::uint64_t oracle_peak = oracle.stats.peak_payload_bytes;

  // Disaggregated pass: payload budget = fraction x oracle peak.
  const auto payload_budget =
      static_cast<std::uint64_t>(std::ceil(fraction * static_cast<double>(oracle_peak)));
  RegionLayout layout;
  std::uint64_t pad = 0;
  if (fraction >= 0.999) {
    pad = 1 * MiB;  // allocator rounding slack, accounted in the allowance
    layout.local_object_bytes = payload_budget + pad;
    layout.remote_cache_bytes = 0;
  } else {
    const std::uint64_t local_target = oracle.stats.peak_small_payload * 2 + 256 * KiB;
    std::uint64_t local =
        std::min(local_target, std::max<std::uint64_t>(payload_budget / 4, 64 * KiB));
    std::uint64_t cache = payload_budget > local ? payload_budget - local : 0;
    if (cache % 2 != 0) {
      cache -= 1;
      local += 1;
    }
    layout.local_object_bytes = local;
    layout.remote_cache_bytes = cache;
  }
  layout.metadata_bytes = kMetadataAllowance;

  auto fabric =
      make_fabric(backend, profile, payload_estimate * 2 + payload_estimate / 2 + 256 * MiB);
  PassResult dolma =
      run_pass(spec, plan, layout, toggles, /*prefetch=*/toggles.dual_buffer, *fabric);

  RunReport report;
  report.spec_name = spec.name;
  report.fraction = fraction;
  report.threads = spec.threads;
  report.dual_buffer = toggles.dual_buffer;
  report.async_write = toggles.async_write;
  report.backend = backend.kind == BenchBackend::Kind::Sim ? "sim" : "tcp";
  report.seed = spec.seed;
  report.oracle_time_us = oracle.time_us;
  report.dolma_time_us = dolma.time_us;
  report.degradation = oracle.time_us > 0 ? dolma.time_us / oracle.time_us - 1.0 : 0.0;
  report.oracle_peak_bytes = oracle_peak;
  report.peak_local_bytes = dolma.stats.peak_local_bytes;
  report.local_budget_bytes = layout.budget();
  report.metadata_allowance_bytes = kMetadataAllowance + pad;
  report.local_reduction =
      oracle_peak > 0 ? 1.0 - static_cast<double>(dolma.stats.peak_local_bytes) / oracle_peak
                      : 0.0;
  report.stall_us = dolma.stats.stall_us;
  report.fabric_reads = dolma.stats.fabric_reads;
  report.fabric_writes = dolma.stats.fabric_writes;
  report.fabric_atomics = dolma.stats.fabric_atomics;
  report.fabric_read_bytes = dolma.stats.fabric_read_bytes;
  report.fabric_write_bytes = dolma.stats.fabric_write_bytes;
  report.fetch_chunks = dolma.stats.fetch_chunks;
  report.min_chunk_bytes = dolma.stats.min_chunk_bytes;
  report.max_chunk_bytes = dolma.stats.max_chunk_bytes;
  report.peak_small_payload = oracle.stats.peak_small_payload;
  report.peak_large_payload = oracle.stats.peak_large_payload;
  const std::uint64_t half = layout.buffer_half_bytes();
  report.degenerate =
      layout.remote_cache_bytes > 0 && half / std::max(1u, spec.threads) < spec.slice_bytes;
  report.warnings = dolma.warnings;
  return report;
}

}  // namespace dolma::bench
