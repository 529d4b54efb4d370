#pragma once

#include <cstdint>

namespace dolma {

using ChannelId = std::uint32_t;
using OpId = std::uint64_t;

enum class OpKind : std::uint8_t { Read, Write, AtomicCas, AtomicFadd };
enum class Pattern : std::uint8_t { Seq, Rand };
enum class CompletionStatus : std::uint8_t { Ok, RemoteError, Truncated };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Read: return "READ";
    case OpKind::Write: return "WRITE";
    case OpKind::AtomicCas: return "ATOMIC_CAS";
    case OpKind::AtomicFadd: return "ATOMIC_FADD";
  }
  return "?";
}

inline const char* to_string(Pattern p) { return p == Pattern::Seq ? "SEQ" : "RAND"; }

// Byte offset inside one memory node's registered region.
struct RemoteAddr {
  std::uint32_t node_id = 0;
  std::uint64_t offset = 0;
};

// One-sided work request. `local_dst`/`local_src` reference caller-owned
// memory that must stay valid and unmodified until the op completes.
struct FabricOp {
  OpKind kind = OpKind::Read;
  RemoteAddr remote{};
  std::uint64_t length = 0;           // >= 1 for READ/WRITE, exactly 8 for atomics
  std::uint8_t* local_dst = nullptr;  // READ destination; atomics: previous value out
  const std::uint8_t* local_src = nullptr;  // WRITE source
  std::uint64_t atomic_expected = 0;        // CAS operand
  std::uint64_t atomic_operand = 0;         // CAS desired / FADD delta
  Pattern pattern = Pattern::Seq;           // latency-model hint, no wire effect
  bool signaled = true;
};

struct Completion {
  OpId op_id = 0;
  CompletionStatus status = CompletionStatus::Ok;
  double completed_at_us = 0.0;
};

}  // namespace dolma
