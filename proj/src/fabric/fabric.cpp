#include "dolma/fabric/fabric.hpp"

#include <string>

#include "dolma/error.hpp"

namespace dolma {

void validate_op(const FabricOp& op, std::uint64_t region_capacity,
                 std::uint64_t max_transfer_bytes) {
  const bool atomic = op.kind == OpKind::AtomicCas || op.kind == OpKind::AtomicFadd;
  if (atomic) {
    if (op.length != 8) throw Error(ErrorCode::OutOfBounds, "atomic ops transfer exactly 8 bytes");
    if (op.remote.offset % 8 != 0)
      throw Error(ErrorCode::Misaligned, "atomic target must be 8-byte aligned");
  } else if (op.length == 0) {
    throw Error(ErrorCode::OutOfBounds, "zero-length transfer");
  }
  if (op.length > max_transfer_bytes)
    throw Error(ErrorCode::Oversized, "length " + std::to_string(op.length) +
                                          " exceeds max transfer " +
                                          std::to_string(max_transfer_bytes));
  if (op.length > region_capacity || op.remote.offset > region_capacity - op.length)
    throw Error(ErrorCode::OutOfBounds,
                "remote range [" + std::to_string(op.remote.offset) + ", +" +
                    std::to_string(op.length) + ") outside region of " +
                    std::to_string(region_capacity) + " bytes");
  if (op.kind == OpKind::Read && op.local_dst == nullptr)
    throw Error(ErrorCode::OutOfBounds, "READ without local destination");
  if (op.kind == OpKind::Write && op.local_src == nullptr)
    throw Error(ErrorCode::OutOfBounds, "WRITE without local source");
}

}  // namespace dolma
