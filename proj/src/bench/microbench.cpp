#include "dolma/bench/microbench.hpp"

#include <cstdio>

#include "json.hpp"

namespace dolma::bench {

std::vector<std::uint64_t> default_microbench_sizes() {
  std::vector<std::uint64_t> sizes;
  for (std::uint64_t s = 1024; s <= (4ull << 20); s <<= 1) sizes.push_back(s);
  return sizes;
}

std::vector<MicrobenchRow> run_microbench(const CalibrationProfile& profile,
                                          const std::vector<std::uint64_t>& sizes,
                                          const std::vector<OpKind>& kinds,
                                          const std::vector<Pattern>& patterns) {
  std::vector<MicrobenchRow> rows;
  for (OpKind kind : kinds) {
    for (Pattern pattern : patterns) {
      for (std::uint64_t size : sizes) {
        MicrobenchRow row;
        row.kind = kind;
        row.pattern = pattern;
        row.size_bytes = size;
        row.local_us = profile.local.estimate_us(kind, pattern, size);
        row.remote_us = profile.remote.estimate_us(kind, pattern, size);
        row.slowdown = row.remote_us / row.local_us;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void emit_microbench_csv(const std::vector<MicrobenchRow>& rows, std::ostream& out) {
  out << "kind,pattern,size_bytes,local_us,remote_us,slowdown\n";
  char line[256];
  for (const MicrobenchRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%s,%llu,%.4f,%.4f,%.4f\n", to_string(r.kind),
                  to_string(r.pattern), static_cast<unsigned long long>(r.size_bytes),
                  r.local_us, r.remote_us, r.slowdown);
    out << line;
  }
}

void emit_microbench_json(const std::vector<MicrobenchRow>& rows, std::ostream& out) {
  nlohmann::json arr = nlohmann::json::array();
  for (const MicrobenchRow& r : rows)
    arr.push_back({{"kind", to_string(r.kind)},
                   {"pattern", to_string(r.pattern)},
                   {"size_bytes", r.size_bytes},
                   {"local_us", r.local_us},
                   {"remote_us", r.remote_us},
                   {"slowdown", r.slowdown}});
  out << nlohmann::json{{"schema_version", 1}, {"rows", arr}}.dump(2) << "\n";
}

}  // namespace dolma::bench
