#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>
#include <thread>

#include "dolma/memnode/wire.hpp"
#include "dolma/util/bytes.hpp"
#include "dolma/util/socket.hpp"
#include "support/test_support.hpp"

using namespace dolma;

namespace {

// Raw-socket client for protocol-level tests.
struct RawClient {
  int fd;
  std::vector<std::uint8_t> rx;
  std::uint64_t next_id = 1;

  explicit RawClient(std::uint16_t port) : fd(net::tcp_connect("127.0.0.1", port)) {}
  ~RawClient() { net::close_fd(fd); }

  wire::Frame call(wire::Opcode op, std::uint64_t offset, std::uint64_t length,
                   std::vector<std::uint8_t> payload = {}) {
    send_only(op, offset, length, std::move(payload));
    return read_response();
  }
  void send_only(wire::Opcode op, std::uint64_t offset, std::uint64_t length,
                 std::vector<std::uint8_t> payload = {}) {
    std::vector<std::uint8_t> tx;
    wire::encode(wire::make_request(op, next_id++, offset, length, std::move(payload)), tx);
    net::send_all(fd, tx.data(), tx.size());
  }
  wire::Frame read_response() {
    std::uint8_t chunk[64 * 1024];
    for (;;) {
      if (auto f = wire::decode(rx, 1ull << 31)) return *f;
      long n = net::recv_some(fd, chunk, sizeof(chunk), true);
      REQUIRE(n > 0);
      rx.insert(rx.end(), chunk, chunk + n);
    }
  }
};

}  // namespace

TEST_CASE("wire frame layout is bit-exact") {
  wire::Frame f = wire::make_request(wire::Opcode::Write, 0x1122334455667788ull, 0x10, 4,
                                     {0xDE, 0xAD, 0xBE, 0xEF});
  std::vector<std::uint8_t> bytes;
  wire::encode(f, bytes);
  REQUIRE(bytes.size() == 34);  // 30-byte header + payload
  CHECK(bytes[0] == 'D');
  CHECK(bytes[1] == 'L');
  CHECK(bytes[2] == 'M');
  CHECK(bytes[3] == 'A');
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 3);  // WRITE opcode
  CHECK(load_be64(bytes.data() + 6) == 0x1122334455667788ull);
  CHECK(load_be64(bytes.data() + 14) == 0x10);
  CHECK(load_be64(bytes.data() + 22) == 4);
  CHECK(bytes[30] == 0xDE);

  // Decode consumes exactly one frame and tolerates partial input.
  std::vector<std::uint8_t> partial(bytes.begin(), bytes.begin() + 20);
  CHECK_FALSE(wire::decode(partial, 1 * MiB).has_value());
  auto round = wire::decode(bytes, 1 * MiB);
  REQUIRE(round.has_value());
  CHECK(round->request_id == f.request_id);
  CHECK(round->payload == std::vector<std::uint8_t>{0xDE, 0xAD, 0xBE, 0xEF});
  CHECK(bytes.empty());

  std::vector<std::uint8_t> garbage{'X', 'X', 'X', 'X'};
  garbage.resize(64, 0);
  CHECK_THROWS_AS(wire::decode(garbage, 1 * MiB), Error);
}

TEST_CASE("memnode: ping, rw round trip, errors, per-connection FIFO") {
  MemNodeConfig config;
  config.capacity_bytes = 4 * MiB;
  MemNodeServer server(config);
  server.start();
  {
    RawClient client(server.port());

    // PING -> PONG echoing the request id, payload carries the capacity.
    wire::Frame pong = client.call(wire::Opcode::Ping, 0, 0);
    CHECK(pong.status() == wire::Status::Ok);
    CHECK(pong.request_id == 1);
    CHECK(load_be64(pong.payload.data()) == 4 * MiB);

    // ALLOC then WRITE/READ round trip on the same connection.
    wire::Frame alloc = client.call(wire::Opcode::Alloc, 0, 4096);
    REQUIRE(alloc.status() == wire::Status::Ok);
    const std::uint64_t off = load_be64(alloc.payload.data());
    const auto payload = test::pattern_bytes(3, 16);
    CHECK(client.call(wire::Opcode::Write, off, 16, payload).status() == wire::Status::Ok);
    wire::Frame read = client.call(wire::Opcode::Read, off, 16);
    CHECK(read.status() == wire::Status::Ok);
    CHECK(read.payload == payload);

    // READ past capacity: REMOTE_ERROR with an empty payload.
    wire::Frame bad = client.call(wire::Opcode::Read, 4 * MiB - 4, 16);
    CHECK(bad.status() == wire::Status::RemoteError);
    CHECK(bad.payload.empty());

    // FREE / DOUBLE_FREE / OOM statuses.
    CHECK(client.call(wire::Opcode::Free, off, 0).status() == wire::Status::Ok);
    CHECK(client.call(wire::Opcode::Free, off, 0).status() == wire::Status::DoubleFree);
    CHECK(client.call(wire::Opcode::Alloc, 0, 64 * MiB).status() == wire::Status::RemoteOom);

    // Atomics: CAS operands ride the payload big-endian; MISALIGNED is typed.
    wire::Frame a2 = client.call(wire::Opcode::Alloc, 0, 8);
    const std::uint64_t w = load_be64(a2.payload.data());
    std::vector<std::uint8_t> operands(16, 0);
    store_be64(operands.data() + 8, 7);
    wire::Frame cas = client.call(wire::Opcode::Cas, w, 8, operands);
    CHECK(cas.status() == wire::Status::Ok);
    CHECK(load_be64(cas.payload.data()) == 0);
    std::vector<std::uint8_t> delta(8, 0);
    store_be64(delta.data(), 5);
    wire::Frame fadd = client.call(wire::Opcode::Fadd, w, 8, delta);
    CHECK(load_be64(fadd.payload.data()) == 7);
    CHECK(client.call(wire::Opcode::Cas, w + 1, 8, operands).status() ==
          wire::Status::Misaligned);

    // Pipelined requests answer strictly in arrival order.
    const std::uint64_t first_id = client.next_id;
    client.send_only(wire::Opcode::Ping, 0, 0);
    client.send_only(wire::Opcode::Read, w, 8);
    client.send_only(wire::Opcode::Ping, 0, 0);
    for (int i = 0; i < 3; ++i) {
      wire::Frame resp = client.read_response();
      CHECK(resp.request_id == first_id + i);
    }
  }
  server.stop();
}

TEST_CASE("memnode snapshot: save, clobber, restore byte-identically") {
  const auto dir = std::filesystem::temp_directory_path() / "dolma_memnode_test";
  std::filesystem::create_directories(dir);

  MemNodeConfig config;
  config.capacity_bytes = 2 * MiB;
  config.snapshot_dir = dir.string();
  MemNodeServer server(config);
  server.start();
  {
    RawClient client(server.port());
    wire::Frame alloc = client.call(wire::Opcode::Alloc, 0, 1024);
    const std::uint64_t off = load_be64(alloc.payload.data());
    const auto payload = test::pattern_bytes(17, 1024);
    client.call(wire::Opcode::Write, off, payload.size(), payload);

    std::vector<std::uint8_t> name{'s', '1', '.', 's', 'n', 'a', 'p'};
    CHECK(client.call(wire::Opcode::Snapshot, 0, name.size(), name).status() ==
          wire::Status::Ok);

    // Clobber, then restore.
    const auto junk = test::pattern_bytes(99, 1024);
    client.call(wire::Opcode::Write, off, junk.size(), junk);
    CHECK(client.call(wire::Opcode::Snapshot, 1, name.size(), name).status() ==
          wire::Status::Ok);
    wire::Frame read = client.call(wire::Opcode::Read, off, 1024);
    CHECK(read.payload == payload);

    // Unwritable path reports an I/O error status.
    std::string bad = "/nonexistent-dir/x.snap";
    CHECK(client
              .call(wire::Opcode::Snapshot, 0, bad.size(),
                    std::vector<std::uint8_t>(bad.begin(), bad.end()))
              .status() == wire::Status::IoError);
  }
  server.stop();

  // Empty-region snapshot round trip preserves the free list.
  MemNodeServer fresh(config);
  fresh.start();
  {
    RawClient client(fresh.port());
    std::vector<std::uint8_t> name{'e', '.', 's', 'n', 'a', 'p'};
    CHECK(client.call(wire::Opcode::Snapshot, 0, name.size(), name).status() ==
          wire::Status::Ok);
    CHECK(client.call(wire::Opcode::Snapshot, 1, name.size(), name).status() ==
          wire::Status::Ok);
    wire::Frame alloc = client.call(wire::Opcode::Alloc, 0, 64);
    CHECK(alloc.status() == wire::Status::Ok);
    CHECK(load_be64(alloc.payload.data()) == 0);  // allocator starts from a clean slate
  }
  fresh.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("differential: identical trace against memnode and the sim region") {
  std::mt19937_64 rng(11);
  SimFabric sim(2 * MiB, LatencyModel::infiniband_remote());
  const ChannelId sch = sim.open_channel();

  MemNodeConfig config;
  config.capacity_bytes = 2 * MiB;
  MemNodeServer server(config);
  server.start();
  {
    RawClient client(server.port());

    std::vector<std::uint64_t> offs;
    for (int i = 0; i < 300; ++i) {
      const unsigned roll = static_cast<unsigned>(rng() % 100);
      if (offs.empty() || roll < 30) {
        const std::uint64_t size = 16 + rng() % 2048;
        wire::Frame resp = client.call(wire::Opcode::Alloc, 0, size);
        const RemoteAddr sim_addr = sim.remote_alloc(size);
        REQUIRE(load_be64(resp.payload.data()) == sim_addr.offset);
        offs.push_back(sim_addr.offset);
      } else if (roll < 45 && offs.size() > 1) {
        const std::size_t pick = rng() % offs.size();
        client.call(wire::Opcode::Free, offs[pick], 0);
        sim.remote_free({0, offs[pick]});
        offs[pick] = offs.back();
        offs.pop_back();
      } else {
        const std::uint64_t off = offs[rng() % offs.size()];
        auto bytes = test::pattern_bytes(rng(), 16);
        client.call(wire::Opcode::Write, off, bytes.size(), bytes);
        FabricOp wr;
        wr.kind = OpKind::Write;
        wr.remote = {0, off};
        wr.length = bytes.size();
        wr.local_src = bytes.data();
        sim.submit(sch, wr);
        sim.fence(sch);
      }
    }
    const auto sim_bytes = sim.region_snapshot();
    const auto node_bytes = server.region_snapshot();
    CHECK(sim_bytes == node_bytes);
  }
  server.stop();
}

TEST_CASE("tcp fabric: ops, fence freshness, statuses mirror the sim backend") {
  auto harness = test::make_tcp_harness(4 * MiB, LatencyModel::infiniband_remote());
  TcpFabric& fab = *harness.fabric;
  CHECK(fab.capacity() == 4 * MiB);

  const ChannelId ch = fab.open_channel();
  const RemoteAddr addr = fab.remote_alloc(4096);
  const auto data = test::pattern_bytes(5, 512);
  FabricOp wr;
  wr.kind = OpKind::Write;
  wr.remote = addr;
  wr.length = data.size();
  wr.local_src = data.data();
  const OpId wid = fab.submit(ch, wr);
  fab.fence(ch);

  std::vector<std::uint8_t> back(512, 0);
  FabricOp rd;
  rd.kind = OpKind::Read;
  rd.remote = addr;
  rd.length = back.size();
  rd.local_dst = back.data();
  const OpId rid = fab.submit(ch, rd);
  const Completion c = fab.wait(ch, rid);
  CHECK(c.status == CompletionStatus::Ok);
  CHECK(back == data);
  CHECK(rid > wid);

  CHECK(fab.atomic_cas(addr, 0, 0) != 0);  // data bytes interpreted as a word
  const RemoteAddr word = fab.remote_alloc(8);
  CHECK(fab.atomic_fadd(word, 41) == 0);
  CHECK(fab.atomic_cas(word, 41, 1) == 41);
  CHECK_THROWS_AS(static_cast<void>(fab.atomic_cas({0, word.offset + 4}, 0, 0)), Error);
  CHECK_THROWS_AS(static_cast<void>(fab.remote_alloc(64 * MiB)), Error);
  fab.remote_free(word);
  CHECK_THROWS_AS(fab.remote_free(word), Error);

  // Client-side validation matches the sim backend's codes.
  FabricOp oob;
  oob.kind = OpKind::Read;
  oob.remote = {0, fab.capacity() - 4};
  oob.length = 64;
  oob.local_dst = back.data();
  CHECK_THROWS_WITH_AS(static_cast<void>(fab.submit(ch, oob)), doctest::Contains("OUT_OF_BOUNDS"),
                       Error);
}
