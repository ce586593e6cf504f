//===-- cache.hpp - Set-associative LRU cache model -----------------------===//
//
// Geometry, the address -> (set, tag) mapping, and a concrete simulator.
// The simulator is the ground-truth oracle for every constraint encoding in
// this project: whatever a formula claims about an event's hit/miss behavior
// must agree with a left-to-right replay here.
//
// The tag is the global block number (addr / line_size), so tag equality
// implies set equality; sub-line offsets are invisible to the cache.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace speculeak {

struct CacheConfig {
  uint32_t capacity = 256; // bytes
  uint32_t lineSize = 1;   // bytes
  uint32_t assoc = 256;    // lines per set
  std::string name;        // preset name, if any

  uint32_t numSets() const { return capacity / (lineSize * assoc); }
  uint32_t numLines() const { return capacity / lineSize; }
  bool fullyAssociative() const { return numSets() == 1; }

  void validate() const {
    if (capacity < 1 || lineSize < 1 || assoc < 1)
      throw std::invalid_argument("cache parameters must be >= 1");
    if (capacity % (lineSize * assoc) != 0)
      throw std::invalid_argument(
          "capacity must be divisible by line_size * assoc");
    auto pow2 = [](uint32_t v) { return v && (v & (v - 1)) == 0; };
    if (!pow2(lineSize))
      throw std::invalid_argument("line size must be a power of two");
    if (!pow2(numSets()))
      throw std::invalid_argument("set count must be a power of two");
  }

  bool operator==(const CacheConfig &o) const {
    return capacity == o.capacity && lineSize == o.lineSize && assoc == o.assoc;
  }
};

/// Named presets. M0 is the 256-line fully associative byte cache used by the
/// walk-through programs; C1..C4 follow common L1 data cache shapes.
inline CacheConfig cachePreset(const std::string &name) {
  CacheConfig c;
  c.name = name;
  if (name == "M0") {
    c.capacity = 256;
    c.lineSize = 1;
    c.assoc = 256;
  } else if (name == "C1") {
    c.capacity = 32 * 1024;
    c.lineSize = 64;
    c.assoc = 4;
  } else if (name == "C2") {
    c.capacity = 32 * 1024;
    c.lineSize = 64;
    c.assoc = 8;
  } else if (name == "C3") {
    c.capacity = 64 * 1024;
    c.lineSize = 64;
    c.assoc = 8;
  } else if (name == "C4") {
    c.capacity = 32 * 1024;
    c.lineSize = 64;
    c.assoc = 512;
  } else {
    throw std::invalid_argument("unknown cache preset '" + name + "'");
  }
  c.validate();
  return c;
}

inline uint32_t cacheSetIndex(uint64_t addr, const CacheConfig &cfg) {
  return static_cast<uint32_t>((addr / cfg.lineSize) % cfg.numSets());
}

/// Global block number; unique per cache line worth of memory.
inline uint64_t cacheTag(uint64_t addr, const CacheConfig &cfg) {
  return addr / cfg.lineSize;
}

enum class AccessKind : uint8_t { Load, Store };

struct AccessResult {
  bool hit = false;
  std::optional<uint64_t> evicted; // tag of the victim line, if any
};

/// Concrete N-way LRU simulator. Loads and stores are treated identically
/// (write-allocate). Value type; copying snapshots the whole cache state.
class CacheSim {
public:
  explicit CacheSim(const CacheConfig &cfg) : cfg_(cfg), sets_(cfg.numSets()) {
    cfg.validate();
  }

  const CacheConfig &config() const { return cfg_; }

  AccessResult access(uint64_t addr) {
    uint64_t tag = cacheTag(addr, cfg_);
    auto &set = sets_[cacheSetIndex(addr, cfg_)];
    AccessResult r;
    for (size_t i = 0; i < set.size(); ++i) {
      if (set[i] == tag) {
        set.erase(set.begin() + i);
        set.push_front(tag);
        r.hit = true;
        return r;
      }
    }
    set.push_front(tag);
    if (set.size() > cfg_.assoc) {
      r.evicted = set.back();
      set.pop_back();
    }
    return r;
  }

  /// Whether a hypothetical access to addr would hit, without updating state.
  bool contains(uint64_t addr) const {
    uint64_t tag = cacheTag(addr, cfg_);
    const auto &set = sets_[cacheSetIndex(addr, cfg_)];
    for (uint64_t t : set)
      if (t == tag)
        return true;
    return false;
  }

private:
  CacheConfig cfg_;
  std::vector<std::deque<uint64_t>> sets_; // front = most recently used
};

struct ReplayEvent {
  uint64_t addr = 0;
  bool speculative = false; // org flag: 1 = emitted by a speculative state
};

/// Pure left-to-right replay. With includeSpeculative=false, org=1 events are
/// skipped entirely: they neither hit nor update recency, reproducing the
/// non-speculative world of the same trace.
inline std::vector<bool> replayTrace(const std::vector<ReplayEvent> &trace,
                                     const CacheConfig &cfg,
                                     bool includeSpeculative) {
  CacheSim sim(cfg);
  std::vector<bool> verdicts;
  verdicts.reserve(trace.size());
  for (const auto &ev : trace) {
    if (!includeSpeculative && ev.speculative) {
      verdicts.push_back(false); // placeholder; event does not exist here
      continue;
    }
    verdicts.push_back(sim.access(ev.addr).hit);
  }
  return verdicts;
}

} // namespace speculeak
