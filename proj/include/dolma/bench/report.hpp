#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace dolma::bench {

// One benchmark run's results. degradation = dolma_time/oracle_time - 1;
// local_reduction = 1 - peak_local/oracle_peak.
struct RunReport {
  // config echo
  std::string spec_name;
  double fraction = 1.0;
  unsigned threads = 1;
  bool dual_buffer = true;
  bool async_write = true;
  std::string backend = "sim";
  std::uint64_t seed = 0;

  // results
  double oracle_time_us = 0.0;
  double dolma_time_us = 0.0;
  double degradation = 0.0;
  std::uint64_t oracle_peak_bytes = 0;
  std::uint64_t peak_local_bytes = 0;
  std::uint64_t local_budget_bytes = 0;
  std::uint64_t metadata_allowance_bytes = 0;
  double local_reduction = 0.0;
  double stall_us = 0.0;

  // fabric op counts and bytes by kind
  std::uint64_t fabric_reads = 0, fabric_writes = 0, fabric_atomics = 0;
  std::uint64_t fabric_read_bytes = 0, fabric_write_bytes = 0;
  std::uint64_t fetch_chunks = 0, min_chunk_bytes = 0, max_chunk_bytes = 0;

  std::uint64_t peak_small_payload = 0, peak_large_payload = 0;
  bool degenerate = false;  // no single slice-sized chunk fits the cache
  std::vector<std::string> warnings;

  std::string to_json_text() const;
};

inline constexpr int kCsvColumns = 10;

// Fixed 10-column CSV: spec,fraction,threads,dual_buffer,oracle_time_us,
// dolma_time_us,degradation,peak_local_bytes,local_reduction,stall_us
void emit_csv(const std::vector<RunReport>& reports, std::ostream& out);
void emit_json(const std::vector<RunReport>& reports, std::ostream& out);
void emit_report_file(const std::vector<RunReport>& reports, const std::string& format,
                      const std::string& path);
std::vector<RunReport> parse_json_reports(const std::string& text);

}  // namespace dolma::bench
