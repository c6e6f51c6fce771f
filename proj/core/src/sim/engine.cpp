#include "stormsim/sim/engine.hpp"

#include <ostream>
#include <stdexcept>
#include <utility>

namespace stormsim::sim {

EventId Engine::schedule(SimTime delay, NodeId target, const char* kind,
                         EventFn fn) {
  EventId id = next_seq_++;
  queue_.push(Event{now_ + delay, id, target, kind, std::move(fn)});
  return id;
}

void Engine::dispatch(Event& ev) {
  now_ = ev.fire_at;
  ++dispatched_;
  if (log_) {
    *log_ << ev.fire_at << ',' << ev.seq << ',' << ev.target << ',' << ev.kind
          << '\n';
  }
  ev.fn();
}

RunStats Engine::run_until(SimTime limit) {
  RunStats stats;
  while (!queue_.empty() && queue_.top().fire_at <= limit) {
    // priority_queue::top is const; the event is moved out via pop-copy.
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    dispatch(ev);
    ++stats.dispatched;
  }
  if (limit != kNoLimit && limit > now_) now_ = limit;
  stats.end_time = now_;
  return stats;
}

RunStats Engine::run() {
  RunStats stats;
  while (!queue_.empty()) {
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    dispatch(ev);
    ++stats.dispatched;
  }
  stats.end_time = now_;
  return stats;
}

}  // namespace stormsim::sim
