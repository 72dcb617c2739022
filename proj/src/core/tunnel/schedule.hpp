#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>

#include "common/types.hpp"
#include "tunnel/sender.hpp"

namespace netshaper::tunnel {

using Clock = std::chrono::steady_clock;

// Fixed-phase interval: the buffer for boundary kT is prepared within
// [kT, kT + T_prep) and handed to the transmit worker at kT + T_prep, which
// must finish enqueueing it by kT + T_prep + T_enq.
struct PrepareSchedule {
  Nanos T = millis(10);
  Nanos T_prep = millis(6);
  Nanos T_enq = millis(1);

  // Requires T_prep > 0, T_enq > 0 and T_prep + T_enq <= T.
  void validate() const;
};

// Blocking single-producer single-consumer handoff. Moving a value through
// the channel transfers exclusive ownership to the consumer.
template <typename T>
class SpscChannel {
 public:
  explicit SpscChannel(std::size_t capacity = 64) : capacity_(capacity) {}

  // False when the channel is closed or full (the value is dropped).
  bool push(T value) {
    {
      std::lock_guard lock(mu_);
      if (closed_ || items_.size() >= capacity_) return false;
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
    return true;
  }

  // Nullopt once the channel is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct Handoff {
  std::int64_t k = 0;
  Nanos handoff_offset = 0;  // handoff time minus kT
  TickOutput tick;
};

struct ScheduleStats {
  std::uint64_t ticks = 0;
  std::uint64_t prepare_overruns = 0;  // preparation finished after kT + T_prep
  std::uint64_t handoff_overruns = 0;  // handoff later than kT + T_prep + T_enq
};

// Sleeps until shortly before the deadline, then spins.
void wait_until(Clock::time_point deadline);

// Drives prepare(k) at every boundary origin + kT, k = 1, 2, ..., and hands
// each result to the channel exactly at the T_prep phase boundary. A late
// tick runs immediately; intervals are never skipped.
class PrepareLoop {
 public:
  using PrepareFn = std::function<TickOutput(std::int64_t k)>;

  PrepareLoop(PrepareSchedule schedule, Clock::time_point origin, PrepareFn prepare,
              SpscChannel<Handoff>& out);
  ~PrepareLoop();

  void start();
  void stop();  // joins

  ScheduleStats stats() const;

 private:
  void run();

  PrepareSchedule schedule_;
  Clock::time_point origin_;
  PrepareFn prepare_;
  SpscChannel<Handoff>& out_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> ticks_{0}, prep_over_{0}, handoff_over_{0};
  std::thread thread_;
};

}  // namespace netshaper::tunnel
