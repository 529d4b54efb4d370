// Standalone memory-node daemon:
//   memnode --bind HOST:PORT --capacity-bytes N [--snapshot-dir PATH]
// Equivalent to `dolma memnode ...`.

#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "dolma/memnode/server.hpp"
#include "dolma/util/bytes.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"passive TCP memory node"};
  std::string bind = "127.0.0.1:9301";
  std::string capacity = "1GiB";
  std::string snapshot_dir, restore_path;
  app.add_option("--bind", bind, "HOST:PORT");
  app.add_option("--capacity-bytes", capacity, "region capacity (suffixes K/M/G allowed)");
  app.add_option("--snapshot-dir", snapshot_dir, "directory for snapshot files");
  app.add_option("--restore", restore_path, "region snapshot to load at startup");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
      std::cerr << "--bind needs HOST:PORT\n";
      return 2;
    }
    dolma::MemNodeConfig config;
    config.host = bind.substr(0, colon);
    config.port = static_cast<std::uint16_t>(std::stoi(bind.substr(colon + 1)));
    config.capacity_bytes = dolma::parse_byte_size(capacity);
    config.snapshot_dir = snapshot_dir;
    config.restore_path = restore_path;

    dolma::MemNodeServer server(config);
    server.start();
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::cerr << "memnode listening on " << config.host << ":" << server.port() << " capacity "
              << config.capacity_bytes << " bytes\n";
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
