#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace dolma::wire {

// Framed binary protocol between the fabric's TCP backend and the memory
// node. All integers big-endian. Frame layout, requests and responses alike;
// total frame length = 30 header bytes + payload length:
//
//   offset 0   magic "DLMA" (4 bytes)
//   offset 4   version      (1 byte, currently 1)
//   offset 5   opcode       (1 byte; responses set bit 0x80 and echo the op)
//   offset 6   request_id   (8 bytes, echoed by the response)
//   offset 14  offset       (8 bytes; responses carry the status here)
//   offset 22  length       (8 bytes)
//   offset 30  payload
//
// The length field is the operation length (bytes to read/write, 8 for
// atomics, requested bytes for ALLOC). Request payload size follows from the
// opcode: WRITE carries `length` data bytes, CAS carries 16 operand bytes
// (expected || desired), FADD 8 delta bytes, SNAPSHOT a `length`-byte file
// path. Responses always set length = payload byte count: READ data, or an
// 8-byte result for ALLOC (offset), CAS/FADD (previous value), PING
// (region capacity).

inline constexpr std::uint8_t kMagic[4] = {'D', 'L', 'M', 'A'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 30;
inline constexpr std::uint8_t kResponseBit = 0x80;

enum class Opcode : std::uint8_t {
  Alloc = 0,
  Free = 1,
  Read = 2,
  Write = 3,
  Cas = 4,
  Fadd = 5,
  Ping = 6,
  Snapshot = 7,
};

enum class Status : std::uint8_t {
  Ok = 0,
  RemoteError = 1,
  RemoteOom = 2,
  DoubleFree = 3,
  Misaligned = 4,
  BadFrame = 5,
  IoError = 6,
};

struct Frame {
  std::uint8_t opcode = 0;  // raw; responses carry kResponseBit
  std::uint64_t request_id = 0;
  std::uint64_t offset = 0;  // status slot in responses
  std::uint64_t length = 0;
  std::vector<std::uint8_t> payload;

  bool is_response() const { return opcode & kResponseBit; }
  Opcode op() const { return static_cast<Opcode>(opcode & ~kResponseBit); }
  Status status() const { return static_cast<Status>(offset); }
};

// Payload byte count implied by a request header.
std::uint64_t request_payload_bytes(Opcode op, std::uint64_t length_field);

// Serializes header + payload, appending to `out`.
void encode(const Frame& frame, std::vector<std::uint8_t>& out);

// Parses one complete frame from the front of `buf`, removing the consumed
// bytes. Returns std::nullopt when more input is needed; throws WireError on
// malformed input or payloads above `max_payload`.
std::optional<Frame> decode(std::vector<std::uint8_t>& buf, std::uint64_t max_payload);

Frame make_request(Opcode op, std::uint64_t request_id, std::uint64_t offset,
                   std::uint64_t length, std::vector<std::uint8_t> payload = {});
Frame make_response(const Frame& request, Status status, std::vector<std::uint8_t> payload = {});

const char* to_string(Status s);

}  // namespace dolma::wire
