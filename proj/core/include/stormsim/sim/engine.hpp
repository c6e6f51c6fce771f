#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <queue>
#include <vector>

namespace stormsim::sim {

/// Simulated time in integer nanoseconds. All latency arithmetic in the
/// simulator is done on this type; there is no floating-point clock.
using SimTime = std::uint64_t;

using NodeId = std::uint32_t;
using EventId = std::uint64_t;

constexpr SimTime kMicrosecond = 1000;
constexpr SimTime kMillisecond = 1000 * kMicrosecond;
constexpr SimTime kNoLimit = ~SimTime{0};

struct RunStats {
  std::uint64_t dispatched = 0;
  SimTime end_time = 0;
};

/// Single-queue discrete-event engine. Events are dispatched in strict
/// (fire_at, seq) order where seq is the insertion sequence number, so
/// same-time events run in the order they were scheduled. One engine
/// instance owns one experiment; it is not thread-safe, but independent
/// engines may run on separate threads.
class Engine {
 public:
  using EventFn = std::function<void()>;

  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Schedule `fn` to run at now()+delay on behalf of `target`.
  /// `kind` is a static tag used for the optional event log.
  EventId schedule(SimTime delay, NodeId target, const char* kind, EventFn fn);

  SimTime now() const { return now_; }

  /// Dispatch every event with fire_at <= limit. The clock ends at
  /// `limit` (events left in the queue fire beyond it).
  RunStats run_until(SimTime limit);

  /// Dispatch until the queue drains; the clock ends at the last event.
  RunStats run();

  std::uint64_t dispatched_count() const { return dispatched_; }
  std::size_t pending() const { return queue_.size(); }

  /// One line per dispatch: "time,seq,target,kind". Used by the
  /// determinism tests; pass nullptr to disable.
  void set_event_log(std::ostream* log) { log_ = log; }

 private:
  struct Event {
    SimTime fire_at;
    EventId seq;
    NodeId target;
    const char* kind;
    EventFn fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  void dispatch(Event& ev);

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  SimTime now_ = 0;
  EventId next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  std::ostream* log_ = nullptr;
};

}  // namespace stormsim::sim
