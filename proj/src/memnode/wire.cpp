#include "dolma/memnode/wire.hpp"

#include <cstring>

#include "dolma/error.hpp"
#include "dolma/util/bytes.hpp"

namespace dolma::wire {

std::uint64_t request_payload_bytes(Opcode op, std::uint64_t length_field) {
  switch (op) {
    case Opcode::Write: return length_field;
    case Opcode::Cas: return 16;
    case Opcode::Fadd: return 8;
    case Opcode::Snapshot: return length_field;
    default: return 0;
  }
}

void encode(const Frame& frame, std::vector<std::uint8_t>& out) {
  const std::size_t base = out.size();
  out.resize(base + kHeaderBytes + frame.payload.size());
  std::uint8_t* p = out.data() + base;
  std::memcpy(p, kMagic, 4);
  p[4] = kVersion;
  p[5] = frame.opcode;
  store_be64(p + 6, frame.request_id);
  store_be64(p + 14, frame.offset);
  store_be64(p + 22, frame.length);
  if (!frame.payload.empty())
    std::memcpy(p + kHeaderBytes, frame.payload.data(), frame.payload.size());
}

std::optional<Frame> decode(std::vector<std::uint8_t>& buf, std::uint64_t max_payload) {
  if (buf.size() < kHeaderBytes) return std::nullopt;
  const std::uint8_t* p = buf.data();
  if (std::memcmp(p, kMagic, 4) != 0) throw Error(ErrorCode::WireError, "bad frame magic");
  if (p[4] != kVersion) throw Error(ErrorCode::WireError, "unsupported protocol version");
  Frame f;
  f.opcode = p[5];
  if ((f.opcode & ~kResponseBit) > static_cast<std::uint8_t>(Opcode::Snapshot))
    throw Error(ErrorCode::WireError, "unknown opcode " + std::to_string(f.opcode));
  f.request_id = load_be64(p + 6);
  f.offset = load_be64(p + 14);
  f.length = load_be64(p + 22);

  const std::uint64_t payload_bytes =
      f.is_response() ? f.length : request_payload_bytes(f.op(), f.length);
  if (payload_bytes > max_payload)
    throw Error(ErrorCode::WireError, "frame payload of " + std::to_string(payload_bytes) +
                                          " bytes exceeds limit");
  if (buf.size() < kHeaderBytes + payload_bytes) return std::nullopt;
  f.payload.assign(buf.begin() + kHeaderBytes,
                   buf.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + payload_bytes));
  buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + payload_bytes));
  return f;
}

Frame make_request(Opcode op, std::uint64_t request_id, std::uint64_t offset,
                   std::uint64_t length, std::vector<std::uint8_t> payload) {
  Frame f;
  f.opcode = static_cast<std::uint8_t>(op);
  f.request_id = request_id;
  f.offset = offset;
  f.length = length;
  f.payload = std::move(payload);
  return f;
}

Frame make_response(const Frame& request, Status status, std::vector<std::uint8_t> payload) {
  Frame f;
  f.opcode = request.opcode | kResponseBit;
  f.request_id = request.request_id;
  f.offset = static_cast<std::uint64_t>(status);
  f.length = payload.size();
  f.payload = std::move(payload);
  return f;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Ok: return "OK";
    case Status::RemoteError: return "REMOTE_ERROR";
    case Status::RemoteOom: return "REMOTE_OOM";
    case Status::DoubleFree: return "DOUBLE_FREE";
    case Status::Misaligned: return "MISALIGNED";
    case Status::BadFrame: return "BAD_FRAME";
    case Status::IoError: return "IO_ERROR";
  }
  return "?";
}

}  // namespace dolma::wire
