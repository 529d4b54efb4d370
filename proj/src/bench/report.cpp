#include "dolma/bench/report.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include "dolma/error.hpp"
#include "json.hpp"

namespace dolma::bench {

namespace {

nlohmann::json report_to_json(const RunReport& r) {
  return nlohmann::json{
      {"spec", r.spec_name},
      {"fraction", r.fraction},
      {"threads", r.threads},
      {"dual_buffer", r.dual_buffer},
      {"async_write", r.async_write},
      {"backend", r.backend},
      {"seed", r.seed},
      {"oracle_time_us", r.oracle_time_us},
      {"dolma_time_us", r.dolma_time_us},
      {"degradation", r.degradation},
      {"oracle_peak_bytes", r.oracle_peak_bytes},
      {"peak_local_bytes", r.peak_local_bytes},
      {"local_budget_bytes", r.local_budget_bytes},
      {"metadata_allowance_bytes", r.metadata_allowance_bytes},
      {"local_reduction", r.local_reduction},
      {"stall_us", r.stall_us},
      {"fabric_reads", r.fabric_reads},
      {"fabric_writes", r.fabric_writes},
      {"fabric_atomics", r.fabric_atomics},
      {"fabric_read_bytes", r.fabric_read_bytes},
      {"fabric_write_bytes", r.fabric_write_bytes},
      {"fetch_chunks", r.fetch_chunks},
      {"min_chunk_bytes", r.min_chunk_bytes},
      {"max_chunk_bytes", r.max_chunk_bytes},
      {"peak_small_payload", r.peak_small_payload},
      {"peak_large_payload", r.peak_large_payload},
      {"degenerate", r.degenerate},
      {"warnings", r.warnings},
  };
}

RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.spec_name = j.at("spec").get<std::string>();
  r.fraction = j.at("fraction").get<double>();
  r.threads = j.at("threads").get<unsigned>();
  r.dual_buffer = j.at("dual_buffer").get<bool>();
  r.async_write = j.at("async_write").get<bool>();
  r.backend = j.at("backend").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.oracle_time_us = j.at("oracle_time_us").get<double>();
  r.dolma_time_us = j.at("dolma_time_us").get<double>();
  r.degradation = j.at("degradation").get<double>();
  r.oracle_peak_bytes = j.at("oracle_peak_bytes").get<std::uint64_t>();
  r.peak_local_bytes = j.at("peak_local_bytes").get<std::uint64_t>();
  r.local_budget_bytes = j.at("local_budget_bytes").get<std::uint64_t>();
  r.metadata_allowance_bytes = j.at("metadata_allowance_bytes").get<std::uint64_t>();
  r.local_reduction = j.at("local_reduction").get<double>();
  r.stall_us = j.at("stall_us").get<double>();
  r.fabric_reads = j.at("fabric_reads").get<std::uint64_t>();
  r.fabric_writes = j.at("fabric_writes").get<std::uint64_t>();
  r.fabric_atomics = j.at("fabric_atomics").get<std::uint64_t>();
  r.fabric_read_bytes = j.at("fabric_read_bytes").get<std::uint64_t>();
  r.fabric_write_bytes = j.at("fabric_write_bytes").get<std::uint64_t>();
  r.fetch_chunks = j.at("fetch_chunks").get<std::uint64_t>();
  r.min_chunk_bytes = j.at("min_chunk_bytes").get<std::uint64_t>();
  r.max_chunk_bytes = j.at("max_chunk_bytes").get<std::uint64_t>();
  r.peak_small_payload = j.at("peak_small_payload").get<std::uint64_t>();
  r.peak_large_payload = j.at("peak_large_payload").get<std::uint64_t>();
  r.degenerate = j.at("degenerate").get<bool>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

}  // namespace

std::string RunReport::to_json_text() const { return report_to_json(*this).dump(2); }

void emit_csv(const std::vector<RunReport>& reports, std::ostream& out) {
  out << "spec,fraction,threads,dual_buffer,oracle_time_us,dolma_time_us,degradation,"
         "peak_local_bytes,local_reduction,stall_us\n";
  char line[512];
  for (const RunReport& r : reports) {
    std::snprintf(line, sizeof(line), "%s,%.4f,%u,%d,%.3f,%.3f,%.6f,%" PRIu64 ",%.6f,%.3f\n",
                  r.spec_name.c_str(), r.fraction, r.threads, r.dual_buffer ? 1 : 0,
                  r.oracle_time_us, r.dolma_time_us, r.degradation, r.peak_local_bytes,
                  r.local_reduction, r.stall_us);
    out << line;
  }
}

void emit_json(const std::vector<RunReport>& reports, std::ostream& out) {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunReport& r : reports) runs.push_back(report_to_json(r));
  out << nlohmann::json{{"schema_version", 1}, {"runs", runs}}.dump(2) << "\n";
}

void emit_report_file(const std::vector<RunReport>& reports, const std::string& format,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open report path " + path);
  if (format == "csv")
    emit_csv(reports, out);
  else if (format == "json")
    emit_json(reports, out);
  else
    throw Error(ErrorCode::ConfigInvalid, "unknown report format " + format);
  if (!out) throw Error(ErrorCode::IoError, "short report write to " + path);
}

std::vector<RunReport> parse_json_reports(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("schema_version").get<int>() != 1)
    throw Error(ErrorCode::ConfigInvalid, "unsupported report schema version");
  std::vector<RunReport> out;
  for (const auto& run : j.at("runs")) out.push_back(report_from_json(run));
  return out;
}

}  // namespace dolma::bench
