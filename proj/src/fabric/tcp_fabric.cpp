#include "dolma/fabric/tcp_fabric.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

#include "dolma/error.hpp"
#include "dolma/memnode/wire.hpp"
#include "dolma/util/bytes.hpp"
#include "dolma/util/socket.hpp"

namespace dolma {

namespace {

// Single blocking request/response exchange on a private connection.
wire::Frame roundtrip(int fd, const wire::Frame& request, std::uint64_t max_payload) {
  std::vector<std::uint8_t> tx;
  wire::encode(request, tx);
  net::send_all(fd, tx.data(), tx.size());

  std::vector<std::uint8_t> rx;
  std::uint8_t chunk[64 * 1024];
  for (;;) {
    if (auto frame = wire::decode(rx, max_payload)) {
      if (frame->request_id != request.request_id)
        throw Error(ErrorCode::WireError, "response id mismatch on control connection");
      return *frame;
    }
    long n = net::recv_some(fd, chunk, sizeof(chunk), true);
    if (n <= 0) throw Error(ErrorCode::IoError, "memory node closed the connection");
    rx.insert(rx.end(), chunk, chunk + n);
  }
}

Error error_from_status(wire::Status s, const std::string& what) {
  switch (s) {
    case wire::Status::RemoteOom: return Error(ErrorCode::RemoteOom, what);
    case wire::Status::DoubleFree: return Error(ErrorCode::DoubleFree, what);
    case wire::Status::Misaligned: return Error(ErrorCode::Misaligned, what);
    case wire::Status::IoError: return Error(ErrorCode::IoError, what);
    default: return Error(ErrorCode::RemoteError, what);
  }
}

}  // namespace

TcpFabric::TcpFabric(const std::string& host, std::uint16_t port, LatencyModel model)
    : model_(std::move(model)), host_(host), port_(port),
      epoch_(std::chrono::steady_clock::now()) {
  control_fd_ = net::tcp_connect(host_, port_);
  wire::Frame pong = roundtrip(
      control_fd_, wire::make_request(wire::Opcode::Ping, control_next_request_++, 0, 0), 64);
  if (pong.status() != wire::Status::Ok || pong.payload.size() != 8)
    throw Error(ErrorCode::WireError, "bad PING response from memory node");
  capacity_ = load_be64(pong.payload.data());
}

TcpFabric::~TcpFabric() {
  net::close_fd(control_fd_);
  std::lock_guard lock(channels_mu_);
  for (auto& ch : channels_) net::close_fd(ch->fd);
}

ChannelId TcpFabric::open_channel() {
  auto ch = std::make_unique<Channel>();
  ch->fd = net::tcp_connect(host_, port_);
  std::lock_guard lock(channels_mu_);
  channels_.push_back(std::move(ch));
  return static_cast<ChannelId>(channels_.size() - 1);
}

TcpFabric::Channel& TcpFabric::channel_at(ChannelId id) {
  std::lock_guard lock(channels_mu_);
  if (id >= channels_.size()) throw Error(ErrorCode::ConfigInvalid, "unknown channel");
  return *channels_[id];
}

OpId TcpFabric::submit(ChannelId channel, const FabricOp& op) {
  validate_op(op, capacity_, model_.max_transfer_bytes());
  Channel& ch = channel_at(channel);

  wire::Frame req;
  switch (op.kind) {
    case OpKind::Read:
      req = wire::make_request(wire::Opcode::Read, ch.next_request++, op.remote.offset, op.length);
      break;
    case OpKind::Write:
      req = wire::make_request(wire::Opcode::Write, ch.next_request++, op.remote.offset,
                               op.length,
                               std::vector<std::uint8_t>(op.local_src, op.local_src + op.length));
      break;
    case OpKind::AtomicCas: {
      std::vector<std::uint8_t> operands(16);
      store_be64(operands.data(), op.atomic_expected);
      store_be64(operands.data() + 8, op.atomic_operand);
      req = wire::make_request(wire::Opcode::Cas, ch.next_request++, op.remote.offset, 8,
                               std::move(operands));
      break;
    }
    case OpKind::AtomicFadd: {
      std::vector<std::uint8_t> operand(8);
      store_be64(operand.data(), op.atomic_operand);
      req = wire::make_request(wire::Opcode::Fadd, ch.next_request++, op.remote.offset, 8,
                               std::move(operand));
      break;
    }
  }

  std::vector<std::uint8_t> tx;
  wire::encode(req, tx);
  net::send_all(ch.fd, tx.data(), tx.size());

  const OpId op_id = ch.next_op++;
  ch.outstanding.push_back(
      {op_id, req.request_id, op.kind, op.local_dst, op.length, op.signaled});
  return op_id;
}

bool TcpFabric::drain(Channel& ch, bool blocking) {
  std::uint8_t chunk[64 * 1024];
  bool progressed = false;
  for (;;) {
    while (auto frame = wire::decode(ch.rx, capacity_ + 64)) {
      if (ch.outstanding.empty())
        throw Error(ErrorCode::WireError, "unexpected response frame");
      Outstanding out = ch.outstanding.front();
      if (frame->request_id != out.request_id)
        throw Error(ErrorCode::WireError, "response order violates per-connection FIFO");
      ch.outstanding.pop_front();

      CompletionStatus status = CompletionStatus::Ok;
      if (frame->status() != wire::Status::Ok) {
        status = CompletionStatus::RemoteError;
      } else if (out.kind == OpKind::Read) {
        if (frame->payload.size() != out.length)
          status = CompletionStatus::Truncated;
        else
          std::memcpy(out.dst, frame->payload.data(), out.length);
      } else if (out.kind == OpKind::AtomicCas || out.kind == OpKind::AtomicFadd) {
        if (out.dst && frame->payload.size() == 8)
          store_le64(out.dst, load_be64(frame->payload.data()));
      }
      if (out.signaled) ch.ready.push_back({out.op_id, status, now_us()});
      progressed = true;
    }
    if (progressed && !blocking) return true;
    if (!blocking) {
      long n = net::recv_some(ch.fd, chunk, sizeof(chunk), false);
      if (n <= 0) return progressed;
      ch.rx.insert(ch.rx.end(), chunk, chunk + n);
      continue;
    }
    if (progressed) return true;
    long n = net::recv_some(ch.fd, chunk, sizeof(chunk), true);
    if (n <= 0) throw Error(ErrorCode::IoError, "memory node closed the connection");
    ch.rx.insert(ch.rx.end(), chunk, chunk + n);
  }
}

std::vector<Completion> TcpFabric::poll(ChannelId channel, std::size_t max) {
  Channel& ch = channel_at(channel);
  drain(ch, false);
  std::vector<Completion> out;
  while (!ch.ready.empty() && out.size() < max) {
    out.push_back(ch.ready.front());
    ch.ready.pop_front();
  }
  return out;
}

Completion TcpFabric::wait(ChannelId channel, OpId op) {
  Channel& ch = channel_at(channel);
  for (;;) {
    auto it = std::find_if(ch.ready.begin(), ch.ready.end(),
                           [op](const Completion& c) { return c.op_id == op; });
    if (it != ch.ready.end()) {
      Completion c = *it;
      ch.ready.erase(it);
      return c;
    }
    const bool known = std::any_of(ch.outstanding.begin(), ch.outstanding.end(),
                                   [op](const Outstanding& o) { return o.op_id == op; });
    if (!known)
      throw Error(ErrorCode::ConfigInvalid,
                  "wait on unknown or already-retrieved op " + std::to_string(op));
    drain(ch, true);
  }
}

void TcpFabric::fence(ChannelId channel) {
  Channel& ch = channel_at(channel);
  while (!ch.outstanding.empty()) drain(ch, true);
}

RemoteAddr TcpFabric::remote_alloc(std::uint64_t size) {
  std::lock_guard lock(control_mu_);
  wire::Frame resp =
      roundtrip(control_fd_,
                wire::make_request(wire::Opcode::Alloc, control_next_request_++, 0, size), 64);
  if (resp.status() != wire::Status::Ok)
    throw error_from_status(resp.status(), "remote_alloc of " + std::to_string(size) + " bytes");
  return RemoteAddr{0, load_be64(resp.payload.data())};
}

void TcpFabric::remote_free(RemoteAddr addr) {
  std::lock_guard lock(control_mu_);
  wire::Frame resp = roundtrip(
      control_fd_,
      wire::make_request(wire::Opcode::Free, control_next_request_++, addr.offset, 0), 64);
  if (resp.status() != wire::Status::Ok)
    throw error_from_status(resp.status(), "remote_free at " + std::to_string(addr.offset));
}

std::uint64_t TcpFabric::atomic_cas(RemoteAddr addr, std::uint64_t expected,
                                    std::uint64_t desired) {
  std::lock_guard lock(control_mu_);
  std::vector<std::uint8_t> operands(16);
  store_be64(operands.data(), expected);
  store_be64(operands.data() + 8, desired);
  wire::Frame resp =
      roundtrip(control_fd_,
                wire::make_request(wire::Opcode::Cas, control_next_request_++, addr.offset, 8,
                                   std::move(operands)),
                64);
  if (resp.status() != wire::Status::Ok)
    throw error_from_status(resp.status(), "atomic_cas at " + std::to_string(addr.offset));
  return load_be64(resp.payload.data());
}

std::uint64_t TcpFabric::atomic_fadd(RemoteAddr addr, std::uint64_t delta) {
  std::lock_guard lock(control_mu_);
  std::vector<std::uint8_t> operand(8);
  store_be64(operand.data(), delta);
  wire::Frame resp =
      roundtrip(control_fd_,
                wire::make_request(wire::Opcode::Fadd, control_next_request_++, addr.offset, 8,
                                   std::move(operand)),
                64);
  if (resp.status() != wire::Status::Ok)
    throw error_from_status(resp.status(), "atomic_fadd at " + std::to_string(addr.offset));
  return load_be64(resp.payload.data());
}

double TcpFabric::now_us() {
  return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - epoch_)
      .count();
}

void TcpFabric::advance_us(double us) {
  if (us > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::micro>(us));
}

}  // namespace dolma
