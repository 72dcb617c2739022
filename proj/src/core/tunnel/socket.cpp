#include "tunnel/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>

#include "common/error.hpp"

namespace netshaper::tunnel {

namespace {

[[noreturn]] void fail_errno(const std::string& what) {
  fail(ErrorKind::Io, what + ": " + std::strerror(errno));
}

struct AddrInfoDeleter {
  void operator()(addrinfo* p) const { freeaddrinfo(p); }
};

std::unique_ptr<addrinfo, AddrInfoDeleter> resolve(const HostPort& addr, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  const int rc = getaddrinfo(addr.host.empty() ? nullptr : addr.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) fail(ErrorKind::Io, "cannot resolve '" + addr.host + "': " + gai_strerror(rc));
  return std::unique_ptr<addrinfo, AddrInfoDeleter>(res);
}

int poll_one(int fd, short events, Nanos timeout) {
  pollfd p{fd, events, 0};
  const int ms = static_cast<int>(std::max<Nanos>(timeout, 0) / kNanosPerMilli);
  int rc;
  do {
    rc = ::poll(&p, 1, ms);
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) fail_errno("poll");
  return rc;
}

}  // namespace

void Fd::reset(int fd) {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

HostPort parse_host_port(const std::string& s) {
  HostPort hp;
  std::string port;
  if (!s.empty() && s[0] == '[') {
    const auto close = s.find(']');
    if (close == std::string::npos || close + 1 >= s.size() || s[close + 1] != ':') {
      fail(ErrorKind::Config, "malformed address '" + s + "'");
    }
    hp.host = s.substr(1, close - 1);
    port = s.substr(close + 2);
  } else {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) fail(ErrorKind::Config, "address '" + s + "' lacks a port");
    hp.host = s.substr(0, colon);
    port = s.substr(colon + 1);
  }
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
    fail(ErrorKind::Config, "malformed port in '" + s + "'");
  }
  const int p = std::stoi(port);
  if (p > 65535) fail(ErrorKind::Config, "port out of range in '" + s + "'");
  hp.port = static_cast<std::uint16_t>(p);
  return hp;
}

Fd listen_tcp(const HostPort& addr, int backlog) {
  auto res = resolve(addr, true);
  std::string last_error = "no addresses";
  for (addrinfo* ai = res.get(); ai; ai = ai->ai_next) {
    Fd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!fd) continue;
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd.get(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd.get(), backlog) == 0) return fd;
    last_error = std::strerror(errno);
  }
  fail(ErrorKind::Io, "cannot listen on " + addr.host + ":" + std::to_string(addr.port) + ": " + last_error);
}

std::uint16_t local_port(int fd) {
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len) != 0) fail_errno("getsockname");
  if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
}

Fd connect_tcp(const HostPort& addr, Nanos timeout) {
  auto res = resolve(addr, false);
  std::string last_error = "no addresses";
  for (addrinfo* ai = res.get(); ai; ai = ai->ai_next) {
    Fd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!fd) continue;
    set_nonblocking(fd.get(), true);
    int rc = ::connect(fd.get(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      if (poll_one(fd.get(), POLLOUT, timeout) == 0) {
        last_error = "timed out";
        continue;
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
      rc = err == 0 ? 0 : -1;
      errno = err;
    }
    if (rc == 0) {
      set_nonblocking(fd.get(), false);
      set_nodelay(fd.get());
      return fd;
    }
    last_error = std::strerror(errno);
  }
  fail(ErrorKind::Io, "cannot connect to " + addr.host + ":" + std::to_string(addr.port) + ": " + last_error);
}

Fd accept_tcp(int listen_fd, Nanos timeout) {
  if (poll_one(listen_fd, POLLIN, timeout) == 0) return Fd();
  Fd fd(::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC));
  if (!fd) {
    if (errno == EAGAIN || errno == EINTR || errno == ECONNABORTED) return Fd();
    fail_errno("accept");
  }
  set_nodelay(fd.get());
  return fd;
}

void set_nonblocking(int fd, bool on) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0) fail_errno("fcntl");
  if (::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK)) < 0) fail_errno("fcntl");
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail_errno("send");
    }
    done += static_cast<std::size_t>(n);
  }
}

std::size_t read_some(int fd, std::span<std::uint8_t> buf) {
  while (true) {
    const ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno != EINTR) fail_errno("recv");
  }
}

void read_exact(int fd, std::span<std::uint8_t> buf, Nanos timeout) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::nanoseconds(timeout);
  std::size_t done = 0;
  while (done < buf.size()) {
    const auto left = std::chrono::duration_cast<std::chrono::nanoseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0 || poll_one(fd, POLLIN, left) == 0) fail(ErrorKind::Io, "timed out waiting for peer");
    const std::size_t n = read_some(fd, buf.subspan(done));
    if (n == 0) fail(ErrorKind::Io, "peer closed the connection");
    done += n;
  }
}

Waker::Waker() : fd_(::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC)) {
  if (!fd_) fail_errno("eventfd");
}

void Waker::notify() {
  std::uint64_t one = 1;
  [[maybe_unused]] auto n = ::write(fd_.get(), &one, sizeof one);
}

void Waker::drain() {
  std::uint64_t v;
  [[maybe_unused]] auto n = ::read(fd_.get(), &v, sizeof v);
}

}  // namespace netshaper::tunnel
