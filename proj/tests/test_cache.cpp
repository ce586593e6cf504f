#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "speculeak/cache.hpp"

using namespace speculeak;

TEST_CASE("presets expand to the documented geometries") {
  CacheConfig m0 = cachePreset("M0");
  REQUIRE(m0.capacity == 256);
  REQUIRE(m0.lineSize == 1);
  REQUIRE(m0.assoc == 256);
  REQUIRE(m0.numSets() == 1);
  REQUIRE(m0.fullyAssociative());

  CacheConfig c1 = cachePreset("C1");
  REQUIRE(c1.numSets() == 128);
  REQUIRE(cachePreset("C2").numSets() == 64);
  REQUIRE(cachePreset("C3").numSets() == 128);
  CacheConfig c4 = cachePreset("C4");
  REQUIRE(c4.numSets() == 1);
  REQUIRE(c4.numLines() == 512);
  REQUIRE_THROWS_AS(cachePreset("nope"), std::invalid_argument);
}

TEST_CASE("config validation") {
  CacheConfig bad;
  bad.capacity = 100;
  bad.lineSize = 3;
  bad.assoc = 1;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  CacheConfig odd;
  odd.capacity = 96; // 96/(64*1) not integral
  odd.lineSize = 64;
  odd.assoc = 1;
  REQUIRE_THROWS_AS(odd.validate(), std::invalid_argument);
}

TEST_CASE("set and tag mapping") {
  CacheConfig m0 = cachePreset("M0");
  // Fully associative: everything lands in set 0, tags are the addresses.
  std::set<uint64_t> tags;
  for (uint64_t a = 0; a < 254; ++a) {
    REQUIRE(cacheSetIndex(a, m0) == 0);
    tags.insert(cacheTag(a, m0));
  }
  REQUIRE(tags.size() == 254);
  REQUIRE(cacheTag(254, m0) == 254);

  CacheConfig c1 = cachePreset("C1"); // 128 sets, 64B lines
  REQUIRE(cacheSetIndex(8192, c1) == 0);
  REQUIRE(cacheTag(8192, c1) == 128);
  REQUIRE(cacheSetIndex(8192 + 63, c1) == 0); // same line
  REQUIRE(cacheSetIndex(8192 + 64, c1) == 1);
}

TEST_CASE("immediate re-access hits") {
  CacheSim sim(cachePreset("C1"));
  REQUIRE_FALSE(sim.access(0x40).hit);
  REQUIRE(sim.access(0x40).hit);
  REQUIRE(sim.access(0x41).hit); // same line
}

TEST_CASE("walk-through replay evicts the oldest table entry") {
  // Fill all 256 lines with S[0..253], x, then a speculative v1; the store
  // to v2 must evict S[0], the least recently used line.
  CacheSim sim(cachePreset("M0"));
  for (uint64_t a = 0; a < 254; ++a)
    REQUIRE_FALSE(sim.access(a).hit); // S: cold misses
  REQUIRE_FALSE(sim.access(254).hit); // x
  REQUIRE_FALSE(sim.access(255).hit); // v1, speculatively written
  AccessResult v2 = sim.access(256);
  REQUIRE_FALSE(v2.hit);
  REQUIRE(v2.evicted == cacheTag(0, cachePreset("M0"))); // S[0] evicted
  REQUIRE_FALSE(sim.contains(0));
  REQUIRE(sim.contains(1));
  REQUIRE_FALSE(sim.access(0).hit); // S[0] now misses
  // ... and that in turn evicted S[1].
  REQUIRE_FALSE(sim.access(1).hit);
}

TEST_CASE("an MRU line survives k < N fresh same-set mappings") {
  for (uint32_t n : {1u, 2u, 4u, 8u}) {
    CacheConfig cfg;
    cfg.lineSize = 1;
    cfg.assoc = n;
    cfg.capacity = n; // one set
    for (uint32_t k = 0; k + 1 <= n; ++k) {
      CacheSim sim(cfg);
      sim.access(100);
      for (uint32_t j = 0; j < k; ++j)
        sim.access(j); // k distinct new tags
      INFO("assoc " << n << ", k " << k);
      REQUIRE(sim.access(100).hit == (k < n));
    }
    // Boundary: exactly N fresh mappings evict it.
    CacheSim sim(cfg);
    sim.access(100);
    for (uint32_t j = 0; j < n; ++j)
      sim.access(j);
    REQUIRE_FALSE(sim.access(100).hit);
  }
}

TEST_CASE("nine-event worked trace: hit at assoc 4, miss at assoc 3") {
  // Trace m1,m2,m1,m3,m3,m4,m5,m4,m1 over one set, one address per line.
  std::vector<uint64_t> addrs = {1, 2, 1, 3, 3, 4, 5, 4, 1};
  auto runLast = [&](uint32_t assoc) {
    CacheConfig cfg;
    cfg.lineSize = 1;
    cfg.assoc = assoc;
    cfg.capacity = assoc;
    CacheSim sim(cfg);
    bool last = false;
    for (uint64_t a : addrs)
      last = sim.access(a).hit;
    return last;
  };
  REQUIRE(runLast(4) == true);
  REQUIRE(runLast(3) == false);
}

TEST_CASE("replay skips speculative events when asked") {
  std::vector<ReplayEvent> trace = {
      {10, false}, {11, true}, {10, false}, {11, false}, {12, true}};
  CacheConfig cfg;
  cfg.lineSize = 1;
  cfg.assoc = 2;
  cfg.capacity = 2;

  auto with = replayTrace(trace, cfg, true);
  auto without = replayTrace(trace, cfg, false);

  // With speculation, 11 was prefetched by the speculative event.
  REQUIRE(with == std::vector<bool>{false, false, true, true, false});
  // Without, the org=1 events don't exist at all.
  std::vector<ReplayEvent> plain;
  for (auto &e : trace)
    if (!e.speculative)
      plain.push_back(e);
  auto plainVerdicts = replayTrace(plain, cfg, true);
  size_t pi = 0;
  for (size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].speculative)
      continue;
    REQUIRE(without[i] == plainVerdicts[pi]);
    ++pi;
  }
}

TEST_CASE("replay of the empty trace is empty") {
  REQUIRE(replayTrace({}, cachePreset("M0"), true).empty());
}

TEST_CASE("verdicts depend only on (set, tag), not raw addresses") {
  CacheConfig cfg;
  cfg.capacity = 1024;
  cfg.lineSize = 64;
  cfg.assoc = 4; // 4 sets
  std::mt19937 rng(7);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<ReplayEvent> a, b;
    for (int i = 0; i < 80; ++i) {
      uint64_t addr = rng() % 4096;
      bool spec = rng() % 4 == 0;
      a.push_back({addr, spec});
      // Same block, different intra-line offset.
      b.push_back({(addr / 64) * 64 + rng() % 64, spec});
    }
    REQUIRE(replayTrace(a, cfg, true) == replayTrace(b, cfg, true));
    REQUIRE(replayTrace(a, cfg, false) == replayTrace(b, cfg, false));
  }
}

TEST_CASE("property fuzz: MRU survival under fresh-mapping bound") {
  // For every access and its next same-tag re-access: if the number of
  // distinct other tags mapped to the set in between is < N, it must hit.
  std::mt19937 rng(42);
  for (int iter = 0; iter < 300; ++iter) {
    uint32_t assoc = 1u << (rng() % 4);
    uint32_t sets = 1u << (rng() % 3);
    CacheConfig cfg;
    cfg.lineSize = 1;
    cfg.assoc = assoc;
    cfg.capacity = assoc * sets;
    std::vector<uint64_t> seq;
    for (int i = 0; i < 60; ++i)
      seq.push_back(rng() % (assoc * sets * 3));
    CacheSim sim(cfg);
    std::vector<bool> verdicts;
    for (uint64_t a : seq)
      verdicts.push_back(sim.access(a).hit);
    for (size_t i = 0; i < seq.size(); ++i) {
      for (size_t j = i + 1; j < seq.size(); ++j) {
        if (cacheTag(seq[j], cfg) != cacheTag(seq[i], cfg))
          continue;
        std::set<uint64_t> fresh;
        for (size_t k = i + 1; k < j; ++k)
          if (cacheSetIndex(seq[k], cfg) == cacheSetIndex(seq[i], cfg) &&
              cacheTag(seq[k], cfg) != cacheTag(seq[i], cfg))
            fresh.insert(cacheTag(seq[k], cfg));
        if (fresh.size() < assoc) {
          INFO("i=" << i << " j=" << j << " assoc=" << assoc);
          REQUIRE(verdicts[j]);
        }
        break; // only the nearest re-access
      }
    }
  }
}
