#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dolma/error.hpp"
#include "dolma/bench/microbench.hpp"
#include "dolma/bench/report.hpp"
#include "dolma/bench/runner.hpp"
#include "dolma/bench/spec.hpp"
#include "dolma/prefetch/plan.hpp"
#include "dolma/util/bytes.hpp"

using namespace dolma;
using namespace dolma::bench;

namespace {
WorkloadSpec quick_cg() {
  WorkloadSpec spec = WorkloadSpec::preset("cg");
  spec.iterations = 4;
  return spec;
}
}  // namespace

TEST_CASE("reports are deterministic for a fixed spec, seed, and profile") {
  const auto profile = CalibrationProfile::builtin("infiniband");
  const WorkloadSpec spec = quick_cg();
  const RunReport a = run_workload(spec, 0.5, {}, profile);
  const RunReport b = run_workload(spec, 0.5, {}, profile);

  std::ostringstream sa, sb;
  emit_json({a}, sa);
  emit_json({b}, sb);
  CHECK(sa.str() == sb.str());  // byte-identical

  WorkloadSpec other_seed = spec;
  other_seed.seed = 777;
  const RunReport c = run_workload(other_seed, 0.5, {}, profile);
  CHECK(c.seed != a.seed);
}

TEST_CASE("fraction 1.0 stays local, fraction sweep respects capacity") {
  const auto profile = CalibrationProfile::builtin("infiniband");
  WorkloadSpec spec = quick_cg();
  const RunReport full = run_workload(spec, 1.0, {}, profile);
  CHECK(full.degradation == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(full.fabric_reads == 0);
  CHECK(full.fabric_writes == 0);

  for (double f : {0.05, 0.5}) {
    const RunReport r = run_workload(spec, f, {}, profile);
    CHECK(r.peak_local_bytes <=
          static_cast<std::uint64_t>(f * static_cast<double>(r.oracle_peak_bytes)) +
              r.metadata_allowance_bytes);
    CHECK(r.local_reduction > 0.0);
  }
}

TEST_CASE("degenerate fractions are flagged and still correct") {
  const auto profile = CalibrationProfile::builtin("infiniband");
  WorkloadSpec spec = quick_cg();
  spec.iterations = 2;
  const RunReport r = run_workload(spec, 0.01, {}, profile);
  CHECK(r.degenerate);
  CHECK(r.fetch_chunks > 0);
  CHECK(r.min_chunk_bytes < spec.slice_bytes);
}

TEST_CASE("CSV: fixed header, one row per run, 10 columns") {
  const auto profile = CalibrationProfile::builtin("infiniband");
  std::ostringstream empty;
  emit_csv({}, empty);
  CHECK(empty.str() ==
        "spec,fraction,threads,dual_buffer,oracle_time_us,dolma_time_us,degradation,"
        "peak_local_bytes,local_reduction,stall_us\n");

  WorkloadSpec spec = quick_cg();
  spec.iterations = 2;
  const RunReport r = run_workload(spec, 0.5, {}, profile);
  std::ostringstream one;
  emit_csv({r}, one);
  std::istringstream lines(one.str());
  std::string header, row, extra;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK_FALSE(std::getline(lines, extra));
  CHECK(std::count(row.begin(), row.end(), ',') == kCsvColumns - 1);
  CHECK(row.substr(0, 3) == "cg,");
}

TEST_CASE("JSON report round trip preserves structure") {
  const auto profile = CalibrationProfile::builtin("infiniband");
  WorkloadSpec spec = quick_cg();
  spec.iterations = 2;
  const RunReport r = run_workload(spec, 0.5, {}, profile);
  std::ostringstream out;
  emit_json({r}, out);
  const auto back = parse_json_reports(out.str());
  REQUIRE(back.size() == 1);
  CHECK(back[0].spec_name == r.spec_name);
  CHECK(back[0].dolma_time_us == r.dolma_time_us);
  CHECK(back[0].fabric_read_bytes == r.fabric_read_bytes);
  CHECK(back[0].degenerate == r.degenerate);
}

TEST_CASE("workload spec JSON round trip and validation") {
  WorkloadSpec spec = WorkloadSpec::preset("ft");
  const std::string text = spec.to_json_text();
  const auto dir = std::filesystem::temp_directory_path() / "dolma_bench_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "spec.json").string();
  {
    std::ofstream out(path);
    out << text;
  }
  const WorkloadSpec back = WorkloadSpec::load(path);
  CHECK(back.name == spec.name);
  CHECK(back.pattern == spec.pattern);
  CHECK(back.read_parts == spec.read_parts);
  CHECK(back.groups.size() == spec.groups.size());
  CHECK(back.total_payload() == spec.total_payload());
  std::filesystem::remove_all(dir);

  WorkloadSpec invalid;
  CHECK_THROWS_AS(invalid.validate(), dolma::Error);
  CHECK_THROWS_AS(WorkloadSpec::preset("nope"), dolma::Error);
}

TEST_CASE("plan file loads through the tag map") {
  const auto dir = std::filesystem::temp_directory_path() / "dolma_plan_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "plan.json").string();
  {
    std::ofstream out(path);
    out << R"([[{"object_tag":"a","offset":0,"length":1024}],)"
        << R"([{"object_tag":"a","offset":1024,"length":2048}]])";
  }
  const IterationPlan plan = IterationPlan::load(path, {{"a", 42}});
  REQUIRE(plan.iterations.size() == 2);
  CHECK(plan.iterations[0][0].object_id == 42);
  CHECK(plan.iterations[1][0].offset == 1024);
  CHECK_THROWS_AS(IterationPlan::load(path, {{"b", 1}}), dolma::Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("population shaped like the hydrodynamics study: large objects dominate") {
  const auto profile = CalibrationProfile::builtin("infiniband");
  WorkloadSpec spec = WorkloadSpec::preset("laghos");
  spec.iterations = 2;
  const RunReport r = run_workload(spec, 1.0, {}, profile);
  const double large_share =
      static_cast<double>(r.peak_large_payload) /
      static_cast<double>(r.peak_large_payload + r.peak_small_payload);
  CHECK(large_share >= 0.99);
}

TEST_CASE("all presets parse and carry Table-style ratios") {
  for (const std::string& name : WorkloadSpec::preset_names()) {
    const WorkloadSpec spec = WorkloadSpec::preset(name);
    CHECK(spec.name == name);
    CHECK_NOTHROW(spec.validate());
    CHECK(spec.total_payload() <= 512 * MiB);
  }
  CHECK(WorkloadSpec::preset("lu").read_parts == 15);
  CHECK(WorkloadSpec::preset("lu").write_parts == 8);
  CHECK(WorkloadSpec::preset("mg").read_parts == 9);
  CHECK(WorkloadSpec::preset("xsbench").pattern == AccessPattern::ChainedDependent);
}

TEST_CASE("scaled specs grow sizes, slices, and compute together") {
  const WorkloadSpec base = WorkloadSpec::preset("cg");
  const WorkloadSpec twice = base.scaled(2.0);
  CHECK(twice.compute_us == doctest::Approx(2 * base.compute_us));
  CHECK(twice.slice_bytes == 2 * base.slice_bytes);
  CHECK(twice.total_payload() >= 2 * base.total_payload() - 64 * KiB);
}
