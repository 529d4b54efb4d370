#pragma once

#include <cstdint>
#include <string>

#include "dolma/bench/report.hpp"
#include "dolma/bench/spec.hpp"
#include "dolma/fabric/latency_model.hpp"

namespace dolma::bench {

struct BenchToggles {
  bool dual_buffer = true;
  bool async_write = true;
};

struct BenchBackend {
  enum class Kind { Sim, Tcp } kind = Kind::Sim;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Runs the all-local oracle pass to measure the baseline time and peak
// payload, sizes the disaggregated layout as fraction x oracle peak (plus a
// metadata/staging allowance), runs the disaggregated pass, and reports.
// Deterministic on the sim backend for a fixed spec, seed, and profile.
RunReport run_workload(const WorkloadSpec& spec, double fraction, const BenchToggles& toggles,
                       const CalibrationProfile& profile, const BenchBackend& backend = {});

}  // namespace dolma::bench
