#include "tunnel/schedule.hpp"

#include "common/error.hpp"
#include "common/log.hpp"

namespace netshaper::tunnel {

void PrepareSchedule::validate() const {
  if (T <= 0) fail(ErrorKind::Config, "T must be > 0");
  if (T_prep <= 0) fail(ErrorKind::Config, "T_prep must be > 0");
  if (T_enq <= 0) fail(ErrorKind::Config, "T_enq must be > 0");
  if (T_prep + T_enq > T) fail(ErrorKind::Config, "T_prep + T_enq must not exceed T");
}

void wait_until(Clock::time_point deadline) {
  constexpr auto kSpin = std::chrono::microseconds(1000);
  auto now = Clock::now();
  if (deadline - now > kSpin) std::this_thread::sleep_until(deadline - kSpin);
  while (Clock::now() < deadline) {
  }
}

PrepareLoop::PrepareLoop(PrepareSchedule schedule, Clock::time_point origin, PrepareFn prepare,
                         SpscChannel<Handoff>& out)
    : schedule_(schedule), origin_(origin), prepare_(std::move(prepare)), out_(out) {
  schedule_.validate();
}

PrepareLoop::~PrepareLoop() { stop(); }

void PrepareLoop::start() {
  stop_ = false;
  thread_ = std::thread([this] { run(); });
}

void PrepareLoop::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

ScheduleStats PrepareLoop::stats() const { return {ticks_.load(), prep_over_.load(), handoff_over_.load()}; }

void PrepareLoop::run() {
  const auto T = std::chrono::nanoseconds(schedule_.T);
  const auto prep = std::chrono::nanoseconds(schedule_.T_prep);
  const auto enq = std::chrono::nanoseconds(schedule_.T_enq);
  for (std::int64_t k = 1; !stop_; ++k) {
    const auto boundary = origin_ + k * T;
    // Sleep in short slices so stop() stays responsive for long intervals.
    while (!stop_ && Clock::now() + std::chrono::milliseconds(50) < boundary) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (stop_) break;
    wait_until(boundary);

    Handoff h;
    h.k = k;
    try {
      h.tick = prepare_(k);
    } catch (const std::exception& e) {
      logger()->error("prepare failed at interval {}: {}", k, e.what());
      break;
    }
    const auto phase_end = boundary + prep;
    if (Clock::now() > phase_end) ++prep_over_;
    wait_until(phase_end);
    const auto handoff = Clock::now();
    h.handoff_offset = std::chrono::duration_cast<std::chrono::nanoseconds>(handoff - boundary).count();
    if (handoff > phase_end + enq) ++handoff_over_;
    ++ticks_;
    if (!out_.push(std::move(h))) {
      logger()->warn("handoff channel closed or full at interval {}", k);
    }
  }
}

}  // namespace netshaper::tunnel
