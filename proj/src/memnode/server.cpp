#include "dolma/memnode/server.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <filesystem>

#include "dolma/error.hpp"
#include "dolma/memnode/wire.hpp"
#include "dolma/util/bytes.hpp"
#include "dolma/util/socket.hpp"

namespace dolma {

RangeLock::Guard& RangeLock::Guard::operator=(Guard&& other) noexcept {
  if (this != &other) {
    release();
    owner_ = other.owner_;
    id_ = other.id_;
    other.owner_ = nullptr;
  }
  return *this;
}

void RangeLock::Guard::release() {
  if (owner_) {
    owner_->unlock(id_);
    owner_ = nullptr;
  }
}

bool RangeLock::conflicts(std::uint64_t begin, std::uint64_t end, bool exclusive) const {
  for (const Held& h : held_) {
    if (begin < h.end && h.begin < end && (exclusive || h.exclusive)) return true;
  }
  return false;
}

RangeLock::Guard RangeLock::lock(std::uint64_t begin, std::uint64_t end, bool exclusive) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !conflicts(begin, end, exclusive); });
  const std::uint64_t id = next_id_++;
  held_.push_back({begin, end, exclusive, id});
  return Guard(this, id);
}

void RangeLock::unlock(std::uint64_t id) {
  {
    std::lock_guard lock(mu_);
    held_.erase(std::find_if(held_.begin(), held_.end(),
                             [id](const Held& h) { return h.id == id; }));
  }
  cv_.notify_all();
}

MemNodeServer::MemNodeServer(MemNodeConfig config)
    : config_(std::move(config)), region_(config_.capacity_bytes) {
  if (config_.capacity_bytes < 1 * MiB)
    throw Error(ErrorCode::ConfigInvalid, "memory node capacity must be at least 1 MiB");
  if (!config_.restore_path.empty()) region_.load(config_.restore_path);
}

MemNodeServer::~MemNodeServer() { stop(); }

void MemNodeServer::start() {
  listen_fd_ = net::tcp_listen(config_.host, config_.port, 64);
  port_ = net::local_port(listen_fd_);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void MemNodeServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, 2 /*SHUT_RDWR*/);
  net::close_fd(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard lock(conn_mu_);
    conns.swap(conn_threads_);
  }
  for (auto& t : conns)
    if (t.joinable()) t.join();
}

void MemNodeServer::accept_loop() {
  while (running_) {
    int fd = net::accept_conn(listen_fd_);
    if (fd < 0) break;  // listener closed
    std::lock_guard lock(conn_mu_);
    conn_threads_.emplace_back([this, fd] { connection_loop(fd); });
  }
}

namespace {

std::string resolve_snapshot_path(const MemNodeConfig& config, const std::string& requested) {
  std::filesystem::path p(requested);
  if (p.is_relative() && !config.snapshot_dir.empty())
    p = std::filesystem::path(config.snapshot_dir) / p;
  return p.string();
}

}  // namespace

void MemNodeServer::connection_loop(int fd) {
  std::vector<std::uint8_t> rx;
  std::vector<std::uint8_t> tx;
  std::uint8_t chunk[64 * 1024];
  const std::uint64_t max_payload = std::max<std::uint64_t>(region_.capacity(), 1 * MiB) + 64;

  try {
    for (;;) {
      long n = net::recv_some(fd, chunk, sizeof(chunk), true);
      if (n <= 0) break;  // peer closed; drop any partial frame
      rx.insert(rx.end(), chunk, chunk + n);

      while (auto frame = wire::decode(rx, max_payload)) {
        const wire::Frame& req = *frame;
        if (req.is_response()) throw Error(ErrorCode::WireError, "response frame on server");
        requests_served_.fetch_add(1, std::memory_order_relaxed);
        wire::Frame resp;

        switch (req.op()) {
          case wire::Opcode::Ping: {
            std::vector<std::uint8_t> cap(8);
            store_be64(cap.data(), region_.capacity());
            resp = wire::make_response(req, wire::Status::Ok, std::move(cap));
            break;
          }
          case wire::Opcode::Alloc: {
            auto guard = locks_.lock_all();
            try {
              const std::uint64_t offset = region_.alloc(req.length);
              std::vector<std::uint8_t> payload(8);
              store_be64(payload.data(), offset);
              resp = wire::make_response(req, wire::Status::Ok, std::move(payload));
            } catch (const Error&) {
              resp = wire::make_response(req, wire::Status::RemoteOom);
            }
            break;
          }
          case wire::Opcode::Free: {
            auto guard = locks_.lock_all();
            try {
              region_.free(req.offset);
              resp = wire::make_response(req, wire::Status::Ok);
            } catch (const Error&) {
              resp = wire::make_response(req, wire::Status::DoubleFree);
            }
            break;
          }
          case wire::Opcode::Read: {
            if (!region_.in_bounds(req.offset, req.length) || req.length == 0) {
              resp = wire::make_response(req, wire::Status::RemoteError);
            } else {
              auto guard = locks_.lock_shared(req.offset, req.offset + req.length);
              std::vector<std::uint8_t> data(req.length);
              region_.read(req.offset, {data.data(), data.size()});
              resp = wire::make_response(req, wire::Status::Ok, std::move(data));
            }
            break;
          }
          case wire::Opcode::Write: {
            if (!region_.in_bounds(req.offset, req.length) || req.length == 0) {
              resp = wire::make_response(req, wire::Status::RemoteError);
            } else {
              auto guard = locks_.lock_exclusive(req.offset, req.offset + req.length);
              region_.write(req.offset, {req.payload.data(), req.payload.size()});
              resp = wire::make_response(req, wire::Status::Ok);
            }
            break;
          }
          case wire::Opcode::Cas:
          case wire::Opcode::Fadd: {
            auto guard = locks_.lock_exclusive(req.offset, req.offset + 8);
            try {
              std::uint64_t prev;
              if (req.op() == wire::Opcode::Cas) {
                prev = region_.cas(req.offset, load_be64(req.payload.data()),
                                   load_be64(req.payload.data() + 8));
              } else {
                prev = region_.fadd(req.offset, load_be64(req.payload.data()));
              }
              std::vector<std::uint8_t> payload(8);
              store_be64(payload.data(), prev);
              resp = wire::make_response(req, wire::Status::Ok, std::move(payload));
            } catch (const Error& e) {
              resp = wire::make_response(req, e.code() == ErrorCode::Misaligned
                                                  ? wire::Status::Misaligned
                                                  : wire::Status::RemoteError);
            }
            break;
          }
          case wire::Opcode::Snapshot: {
            auto guard = locks_.lock_all();
            const std::string path = resolve_snapshot_path(
                config_, std::string(req.payload.begin(), req.payload.end()));
            try {
              if (req.offset == 0) {
                region_.save(path);
              } else {
                region_.load(path);
              }
              resp = wire::make_response(req, wire::Status::Ok);
            } catch (const Error&) {
              resp = wire::make_response(req, wire::Status::IoError);
            }
            break;
          }
        }

        tx.clear();
        wire::encode(resp, tx);
        net::send_all(fd, tx.data(), tx.size());
      }
    }
  } catch (const Error&) {
    // Malformed frame or dead peer: drop the connection.
  }
  net::close_fd(fd);
}

std::vector<std::uint8_t> MemNodeServer::region_snapshot() {
  auto guard = locks_.lock_all();
  auto bytes = region_.bytes();
  return {bytes.begin(), bytes.end()};
}

}  // namespace dolma
