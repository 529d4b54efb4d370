// dolma: data-object-level disaggregated-memory runtime CLI.
//
//   dolma bench       run synthetic workloads against the oracle baseline
//   dolma microbench  emit the local-vs-remote latency table
//   dolma memnode     serve a remote memory region over TCP
//   dolma materialize flatten a checkpoint chain into one file
//
// A JSON config file mirroring the bench flags can be passed with --config;
// explicit flags win. The calibration profile path may also come from the
// DOLMA_PROFILE environment variable.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dolma/bench/microbench.hpp"
#include "dolma/bench/runner.hpp"
#include "dolma/checkpoint/checkpoint.hpp"
#include "dolma/memnode/server.hpp"
#include "dolma/util/bytes.hpp"
#include "json.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

dolma::CalibrationProfile load_profile(const std::string& arg) {
  std::string source = arg;
  if (source.empty()) {
    const char* env = std::getenv("DOLMA_PROFILE");
    if (env) source = env;
  }
  if (source.empty() || source == "infiniband" || source == "ib" || source == "ethernet" ||
      source == "eth") {
    return dolma::CalibrationProfile::builtin(source.empty() ? "infiniband" : source);
  }
  return dolma::CalibrationProfile::load(source);
}

struct BenchArgs {
  std::string spec = "cg";
  std::vector<double> fractions = {0.5};
  unsigned threads = 0;  // 0: keep the spec's value
  unsigned cluster_size = 0;
  std::string dual_buffer = "on";
  std::string async_write = "on";
  std::string backend = "sim";
  std::string memnode;  // host:port
  std::string profile;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string format = "csv";
  std::string config;
  std::string access_profile;
  std::string plan;
};

void apply_config_file(BenchArgs& args, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dolma::Error(dolma::ErrorCode::IoError, "cannot open config " + path);
  nlohmann::json j;
  in >> j;
  args.spec = j.value("spec", args.spec);
  if (j.contains("fraction")) args.fractions = {j.at("fraction").get<double>()};
  if (j.contains("fractions")) args.fractions = j.at("fractions").get<std::vector<double>>();
  args.threads = j.value("threads", args.threads);
  args.cluster_size = j.value("cluster_size", args.cluster_size);
  if (j.contains("dual_buffer"))
    args.dual_buffer = j.at("dual_buffer").get<bool>() ? "on" : "off";
  if (j.contains("async_write"))
    args.async_write = j.at("async_write").get<bool>() ? "on" : "off";
  args.backend = j.value("backend", args.backend);
  args.memnode = j.value("memnode", args.memnode);
  args.profile = j.value("profile", args.profile);
  if (j.contains("seed")) {
    args.seed = j.at("seed").get<std::uint64_t>();
    args.seed_set = true;
  }
  args.out = j.value("out", args.out);
  args.format = j.value("format", args.format);
  args.access_profile = j.value("access_profile", args.access_profile);
  args.plan = j.value("plan", args.plan);
}

int run_bench(const BenchArgs& args) {
  dolma::CalibrationProfile profile = load_profile(args.profile);

  dolma::bench::BenchBackend backend;
  if (args.backend == "tcp") {
    backend.kind = dolma::bench::BenchBackend::Kind::Tcp;
    const auto colon = args.memnode.rfind(':');
    if (colon == std::string::npos)
      throw dolma::Error(dolma::ErrorCode::ConfigInvalid, "--memnode needs HOST:PORT");
    backend.host = args.memnode.substr(0, colon);
    backend.port = static_cast<std::uint16_t>(std::stoi(args.memnode.substr(colon + 1)));
  } else if (args.backend != "sim") {
    throw dolma::Error(dolma::ErrorCode::ConfigInvalid, "backend must be sim or tcp");
  }

  dolma::bench::WorkloadSpec spec;
  const auto& names = dolma::bench::WorkloadSpec::preset_names();
  if (std::find(names.begin(), names.end(), args.spec) != names.end() ||
      args.spec == "laghos") {
    spec = dolma::bench::WorkloadSpec::preset(args.spec);
  } else {
    spec = dolma::bench::WorkloadSpec::load(args.spec);
  }
  if (args.threads > 0) spec.threads = args.threads;
  if (args.cluster_size > 0) spec.cluster_size = args.cluster_size;
  if (args.seed_set) spec.seed = args.seed;
  if (!args.access_profile.empty()) spec.access_profile_path = args.access_profile;
  if (!args.plan.empty()) spec.plan_path = args.plan;

  dolma::bench::BenchToggles toggles;
  toggles.dual_buffer = args.dual_buffer == "on";
  toggles.async_write = args.async_write == "on";

  std::vector<dolma::bench::RunReport> reports;
  for (double fraction : args.fractions) {
    reports.push_back(dolma::bench::run_workload(spec, fraction, toggles, profile, backend));
    const auto& r = reports.back();
    std::cerr << "ran " << r.spec_name << " fraction=" << r.fraction
              << " degradation=" << r.degradation << " peak_local=" << r.peak_local_bytes
              << (r.degenerate ? " [DEGENERATE]" : "") << "\n";
  }

  if (args.out.empty()) {
    if (args.format == "csv")
      emit_csv(reports, std::cout);
    else
      emit_json(reports, std::cout);
  } else {
    emit_report_file(reports, args.format, args.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-object-level disaggregated-memory runtime"};
  app.require_subcommand(1);

  // --- bench ----------------------------------------------------------------
  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "run a workload against the oracle baseline");
  bench->add_option("--spec", bench_args.spec, "preset name or spec JSON path");
  bench->add_option("--fraction", bench_args.fractions,
                    "local fraction(s) of the oracle peak, e.g. 0.5 or 0.05 0.5 1.0");
  bench->add_option("--threads", bench_args.threads, "worker threads");
  bench->add_option("--cluster-size", bench_args.cluster_size, "threads per channel cluster");
  bench->add_option("--dual-buffer", bench_args.dual_buffer, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  bench->add_option("--async-write", bench_args.async_write, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  bench->add_option("--backend", bench_args.backend, "sim|tcp")
      ->check(CLI::IsMember({"sim", "tcp"}));
  bench->add_option("--memnode", bench_args.memnode, "HOST:PORT for the tcp backend");
  bench->add_option("--profile", bench_args.profile,
                    "calibration profile: infiniband, ethernet, or JSON path");
  bench->add_option("--seed", bench_args.seed, "workload PRNG seed");
  bench->add_option("--out", bench_args.out, "report output path (default stdout)");
  bench->add_option("--format", bench_args.format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  bench->add_option("--config", bench_args.config, "JSON config mirroring these flags");
  bench->add_option("--access-profile", bench_args.access_profile,
                    "JSON list of {object_tag, expected_reads, expected_writes}");
  bench->add_option("--plan", bench_args.plan,
                    "JSON prefetch plan: per-iteration {object_tag, offset, length} lists");

  // --- microbench -------------------------------------------------------------
  std::string micro_profile, micro_out, micro_format = "csv";
  CLI::App* micro = app.add_subcommand("microbench", "emit the latency/slowdown table");
  micro->add_option("--profile", micro_profile, "calibration profile");
  micro->add_option("--out", micro_out, "output path (default stdout)");
  micro->add_option("--format", micro_format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));

  // --- memnode -----------------------------------------------------------------
  std::string bind = "127.0.0.1:9301";
  std::string capacity = "1GiB";
  std::string snapshot_dir, restore_path;
  CLI::App* memnode = app.add_subcommand("memnode", "serve a remote memory region");
  memnode->add_option("--bind", bind, "HOST:PORT");
  memnode->add_option("--capacity-bytes", capacity, "region capacity (suffixes K/M/G allowed)");
  memnode->add_option("--snapshot-dir", snapshot_dir, "directory for snapshot files");
  memnode->add_option("--restore", restore_path, "region snapshot to load at startup");

  // --- materialize ----------------------------------------------------------------
  std::string chk_in, chk_out;
  CLI::App* mat = app.add_subcommand("materialize", "flatten a checkpoint chain");
  mat->add_option("--in", chk_in, "checkpoint file")->required();
  mat->add_option("--out", chk_out, "flattened output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) {
      bench_args.seed_set = bench->count("--seed") > 0;
      if (!bench_args.config.empty()) {
        // Config file supplies whatever the command line left unset.
        BenchArgs file_args;
        apply_config_file(file_args, bench_args.config);
        if (bench->count("--spec") == 0) bench_args.spec = file_args.spec;
        if (bench->count("--fraction") == 0) bench_args.fractions = file_args.fractions;
        if (bench->count("--threads") == 0) bench_args.threads = file_args.threads;
        if (bench->count("--cluster-size") == 0)
          bench_args.cluster_size = file_args.cluster_size;
        if (bench->count("--dual-buffer") == 0) bench_args.dual_buffer = file_args.dual_buffer;
        if (bench->count("--async-write") == 0) bench_args.async_write = file_args.async_write;
        if (bench->count("--backend") == 0) bench_args.backend = file_args.backend;
        if (bench->count("--memnode") == 0) bench_args.memnode = file_args.memnode;
        if (bench->count("--profile") == 0) bench_args.profile = file_args.profile;
        if (!bench_args.seed_set && file_args.seed_set) {
          bench_args.seed = file_args.seed;
          bench_args.seed_set = true;
        }
        if (bench->count("--out") == 0) bench_args.out = file_args.out;
        if (bench->count("--format") == 0) bench_args.format = file_args.format;
      }
      return run_bench(bench_args);
    }
    if (micro->parsed()) {
      const auto profile = load_profile(micro_profile);
      const auto rows = dolma::bench::run_microbench(
          profile, dolma::bench::default_microbench_sizes(),
          {dolma::OpKind::Read, dolma::OpKind::Write},
          {dolma::Pattern::Seq, dolma::Pattern::Rand});
      if (micro_out.empty()) {
        if (micro_format == "csv")
          emit_microbench_csv(rows, std::cout);
        else
          emit_microbench_json(rows, std::cout);
      } else {
        std::ofstream out(micro_out);
        if (micro_format == "csv")
          emit_microbench_csv(rows, out);
        else
          emit_microbench_json(rows, out);
      }
      return 0;
    }
    if (memnode->parsed()) {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) {
        std::cerr << "--bind needs HOST:PORT\n";
        return 2;
      }
      dolma::MemNodeConfig config;
      config.host = bind.substr(0, colon);
      config.port = static_cast<std::uint16_t>(std::stoi(bind.substr(colon + 1)));
      config.capacity_bytes = dolma::parse_byte_size(capacity);
      config.snapshot_dir = snapshot_dir;
      config.restore_path = restore_path;
      dolma::MemNodeServer server(config);
      server.start();
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cerr << "memnode listening on " << config.host << ":" << server.port()
                << " capacity " << config.capacity_bytes << " bytes\n";
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      return 0;
    }
    if (mat->parsed()) {
      dolma::materialize(chk_in, chk_out);
      std::cerr << "materialized " << chk_in << " -> " << chk_out << "\n";
      return 0;
    }
  } catch (const dolma::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
