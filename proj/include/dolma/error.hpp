#pragma once

#include <stdexcept>
#include <string>

namespace dolma {

enum class ErrorCode {
  OutOfBounds,    // remote range outside the registered region
  Oversized,      // single op length above max_transfer_bytes
  RemoteOom,      // remote allocator exhausted
  DoubleFree,     // freeing an address not currently allocated
  Misaligned,     // atomic target not 8-byte aligned
  RemoteError,    // memory node rejected the operation
  OutOfRange,     // object-relative access outside the object
  LockTimeout,    // remote lock spin exceeded attempt budget
  TicketReused,   // fetch ticket acquired more than once
  ConfigInvalid,  // layout / pool / spec invariant violation
  WireError,      // malformed frame or broken connection
  IoError,        // file or socket I/O failure
  ChainUnresolvable,  // checkpoint predecessor missing
  ChecksumMismatch,   // section CRC failure
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfBounds: return "OUT_OF_BOUNDS";
    case ErrorCode::Oversized: return "OVERSIZED";
    case ErrorCode::RemoteOom: return "REMOTE_OOM";
    case ErrorCode::DoubleFree: return "DOUBLE_FREE";
    case ErrorCode::Misaligned: return "MISALIGNED";
    case ErrorCode::RemoteError: return "REMOTE_ERROR";
    case ErrorCode::OutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::LockTimeout: return "LOCK_TIMEOUT";
    case ErrorCode::TicketReused: return "TICKET_REUSED";
    case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::WireError: return "WIRE_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::ChainUnresolvable: return "CHAIN_UNRESOLVABLE";
    case ErrorCode::ChecksumMismatch: return "CHECKSUM_MISMATCH";
  }
  return "UNKNOWN";
}

}  // namespace dolma
