//===-- trace.hpp - Memory event traces and analysis views ----------------===//
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "speculeak/cache.hpp"
#include "speculeak/expr.hpp"

namespace speculeak {

/// One load/store occurrence. `speculative` is the origin flag (1 = emitted
/// while the emitting state was speculative); `window` groups the events of
/// one modeled misprediction (0 = architectural path events) so each
/// misprediction's cache effect can be analyzed in isolation.
struct MemoryEvent {
  uint32_t seq = 0;
  ExprRef addr = nullptr; // byte address, 32-bit
  AccessKind kind = AccessKind::Load;
  bool speculative = false;
  uint32_t window = 0;
  int location = 0; // source line in the .ir file
  std::string var; // base variable name
  bool valueTainted = false; // store value mentions a secret symbol
};

using Trace = std::vector<MemoryEvent>;

/// The trace slice a cache-behavior formula quantifies over: architectural
/// events plus one misprediction window, ending at the event under analysis.
struct TraceView {
  std::vector<const MemoryEvent *> events; // history + target, in order
  uint32_t window = 0;                     // the included window id

  size_t target() const { return events.size() - 1; }
  const MemoryEvent &targetEvent() const { return *events.back(); }
};

/// View over `trace` + `pending` that keeps architectural events and the
/// events of `window` only.
inline TraceView makeView(const Trace &trace, const MemoryEvent &pending,
                          uint32_t window) {
  TraceView v;
  v.window = window;
  for (const MemoryEvent &ev : trace)
    if (ev.window == 0 || ev.window == window)
      v.events.push_back(&ev);
  v.events.push_back(&pending);
  return v;
}

/// Windows present in a trace, in first-appearance order.
inline std::vector<uint32_t> windowsOf(const Trace &trace) {
  std::vector<uint32_t> out;
  for (const MemoryEvent &ev : trace)
    if (ev.window != 0 &&
        std::find(out.begin(), out.end(), ev.window) == out.end())
      out.push_back(ev.window);
  return out;
}

/// Concretizes a view under a model and replays it through the simulator.
/// Returns one verdict per view event; with includeSpeculative=false the
/// org=1 events are skipped (their verdict slot is meaningless).
inline std::vector<bool> replayView(const TraceView &view,
                                    const Assignment &model,
                                    const CacheConfig &cfg,
                                    bool includeSpeculative) {
  std::vector<ReplayEvent> concrete;
  concrete.reserve(view.events.size());
  for (const MemoryEvent *ev : view.events)
    concrete.push_back({evaluate(ev->addr, model), ev->speculative});
  return replayTrace(concrete, cfg, includeSpeculative);
}

} // namespace speculeak
