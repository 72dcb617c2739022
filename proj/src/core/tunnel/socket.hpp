#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "common/types.hpp"

namespace netshaper::tunnel {

// Owning file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset(int fd = -1);

 private:
  int fd_ = -1;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port" or "[v6]:port"; throws Config.
HostPort parse_host_port(const std::string& s);

Fd listen_tcp(const HostPort& addr, int backlog = 64);
std::uint16_t local_port(int fd);
// Throws Io when the connection cannot be made within the timeout.
Fd connect_tcp(const HostPort& addr, Nanos timeout);
// Waits up to `timeout` for a connection; an invalid Fd on timeout.
Fd accept_tcp(int listen_fd, Nanos timeout);

void set_nonblocking(int fd, bool on);
void set_nodelay(int fd);

// Blocking-socket helpers; both throw Io on errors.
void write_all(int fd, std::span<const std::uint8_t> bytes);
// Returns 0 at end of stream.
std::size_t read_some(int fd, std::span<std::uint8_t> buf);
// Fills buf completely or throws Io (timeout or end of stream).
void read_exact(int fd, std::span<std::uint8_t> buf, Nanos timeout);

// eventfd used to wake a poll loop from another thread.
class Waker {
 public:
  Waker();
  void notify();
  void drain();
  int fd() const { return fd_.get(); }

 private:
  Fd fd_;
};

}  // namespace netshaper::tunnel
