#include "dolma/util/socket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "dolma/error.hpp"

namespace dolma::net {

namespace {

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1)
    throw Error(ErrorCode::IoError, "bad IPv4 address: " + host);
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

int tcp_connect(const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::IoError, std::string("socket: ") + std::strerror(errno));
  sockaddr_in sa = make_addr(host, port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorCode::IoError, "connect " + host + ":" + std::to_string(port) + ": " +
                                        std::strerror(err));
  }
  set_nodelay(fd);
  return fd;
}

int tcp_listen(const std::string& host, std::uint16_t port, int backlog) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::IoError, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa = make_addr(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0 || ::listen(fd, backlog) < 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorCode::IoError, "bind " + host + ":" + std::to_string(port) + ": " +
                                        std::strerror(err));
  }
  return fd;
}

std::uint16_t local_port(int fd) {
  sockaddr_in sa{};
  socklen_t len = sizeof(sa);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len) < 0)
    throw Error(ErrorCode::IoError, std::string("getsockname: ") + std::strerror(errno));
  return ntohs(sa.sin_port);
}

int accept_conn(int listen_fd) {
  int fd = ::accept(listen_fd, nullptr, nullptr);
  if (fd >= 0) set_nodelay(fd);
  return fd;
}

void send_all(int fd, const void* data, std::size_t length) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::size_t sent = 0;
  while (sent < length) {
    ssize_t n = ::send(fd, p + sent, length - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

long recv_some(int fd, void* buf, std::size_t length, bool blocking) {
  for (;;) {
    ssize_t n = ::recv(fd, buf, length, blocking ? 0 : MSG_DONTWAIT);
    if (n >= 0) return n;
    if (errno == EINTR) continue;
    if (!blocking && (errno == EAGAIN || errno == EWOULDBLOCK)) return -1;
    throw Error(ErrorCode::IoError, std::string("recv: ") + std::strerror(errno));
  }
}

void close_fd(int fd) {
  if (fd >= 0) ::close(fd);
}

}  // namespace dolma::net
