#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace dolma::net {

// Thin POSIX TCP helpers. All throw dolma::Error(IoError) on failure.

int tcp_connect(const std::string& host, std::uint16_t port);
int tcp_listen(const std::string& host, std::uint16_t port, int backlog);
std::uint16_t local_port(int fd);
int accept_conn(int listen_fd);  // -1 when the listener was closed

void send_all(int fd, const void* data, std::size_t length);

// Returns bytes read; 0 on orderly shutdown; -1 when non-blocking and no
// data is available.
long recv_some(int fd, void* buf, std::size_t length, bool blocking);

void close_fd(int fd);

}  // namespace dolma::net
