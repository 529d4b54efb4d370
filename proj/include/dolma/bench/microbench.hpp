#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "dolma/fabric/latency_model.hpp"

namespace dolma::bench {

struct MicrobenchRow {
  OpKind kind;
  Pattern pattern;
  std::uint64_t size_bytes;
  double local_us;
  double remote_us;
  double slowdown;  // remote / local
};

// Local-vs-remote latency and slowdown across sizes, kinds, and patterns.
std::vector<MicrobenchRow> run_microbench(const CalibrationProfile& profile,
                                          const std::vector<std::uint64_t>& sizes,
                                          const std::vector<OpKind>& kinds,
                                          const std::vector<Pattern>& patterns);

// Default size ladder: 1 KiB to 4 MiB in powers of two.
std::vector<std::uint64_t> default_microbench_sizes();

void emit_microbench_csv(const std::vector<MicrobenchRow>& rows, std::ostream& out);
void emit_microbench_json(const std::vector<MicrobenchRow>& rows, std::ostream& out);

}  // namespace dolma::bench
