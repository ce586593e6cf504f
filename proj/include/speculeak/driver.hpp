//===-- driver.hpp - One analysis session end to end ----------------------===//
#pragma once

#include <chrono>

#include "json.hpp"

#include "speculeak/analysis.hpp"
#include "speculeak/engine.hpp"
#include "speculeak/speculation.hpp"

namespace speculeak {

struct RunConfig {
  AnalysisConfig analysis;
  SpeculationOptions speculation;
  ExploreLimits limits;
  SolverOptions solver;
  uint32_t baseAddress = 0;

  RunConfig() { speculation.assumptionCheck = false; }

  static RunConfig forMode(AnalysisMode mode,
                           const CacheConfig &cache = cachePreset("M0")) {
    RunConfig rc;
    rc.analysis.mode = mode;
    rc.analysis.cache = cache;
    rc.speculation.assumptionCheck = mode == AnalysisMode::Opt;
    return rc;
  }
};

struct AnalysisReport {
  std::string program;
  CacheConfig cache;
  AnalysisMode mode = AnalysisMode::Opt;
  ExploreStats explore;
  AnalyzerStats analyzer;
  SolverStats solver;
  std::vector<LeakWitness> witnesses;
  std::vector<std::string> warnings;
  uint64_t millis = 0;

  uint64_t divergentCount() const {
    uint64_t n = 0;
    for (const auto &w : witnesses)
      n += w.behavior == Behavior::Divergent;
    return n;
  }
  uint64_t oppositeCount() const {
    return witnesses.size() - divergentCount();
  }
};

/// Explores `program` under `rc` and returns the full report. One session is
/// single-threaded and owns its expression context; distinct sessions are
/// independent.
inline AnalysisReport runAnalysis(const Program &program, const RunConfig &rc) {
  auto start = std::chrono::steady_clock::now();
  ExprContext ctx;
  AddressMap addrs = layoutMemory(program, rc.baseAddress);
  Engine engine(ctx, program, addrs, rc.limits);
  Analyzer analyzer(ctx, rc.analysis);

  ExploreHooks hooks;
  hooks.onBranch = [&](SymbolicState &child, const BranchSite &site) {
    speculativeExplore(engine, child, site, rc.speculation,
                       rc.analysis.cache);
  };
  hooks.onMemoryAccess = [&](SymbolicState &state, const MemoryEvent &ev) {
    analyzer.onMemoryAccess(state, ev);
  };
  engine.explore(hooks);

  AnalysisReport report;
  report.program = program.name;
  report.cache = rc.analysis.cache;
  report.mode = rc.analysis.mode;
  report.explore = engine.stats();
  report.analyzer = analyzer.stats();
  report.solver = analyzer.solverStats();
  report.witnesses = analyzer.witnesses();
  report.warnings = analyzer.warnings();
  report.millis = static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start)
          .count());
  return report;
}

//===----------------------------------------------------------------------===//
// Report rendering
//===----------------------------------------------------------------------===//

inline nlohmann::ordered_json assignmentToJson(const Assignment &a) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto &[name, value] : a)
    j[name] = value;
  return j;
}

inline nlohmann::ordered_json witnessToJson(const LeakWitness &w) {
  nlohmann::ordered_json j;
  j["location"] = w.location;
  j["var"] = w.var;
  j["event"] = w.eventSeq;
  j["behavior"] = w.behavior == Behavior::Divergent ? "divergent" : "opposite";
  j["mispredicted_branch"] = w.mispredictedBranchLine;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  inputs.push_back(assignmentToJson(w.primary));
  if (w.secondary)
    inputs.push_back(assignmentToJson(*w.secondary));
  j["inputs"] = inputs;
  j["verdicts"] = {
      {"architectural", w.archHit ? "hit" : "miss"},
      {"speculative_primary", w.primarySpecHit ? "hit" : "miss"},
  };
  if (w.secondary)
    j["verdicts"]["speculative_secondary"] =
        w.secondarySpecHit ? "hit" : "miss";
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const ReplayEvent &ev : w.concreteTrace) {
    nlohmann::ordered_json e;
    e["addr"] = ev.addr;
    e["org"] = ev.speculative ? 1 : 0;
    trace.push_back(e);
  }
  j["trace"] = trace;
  return j;
}

/// The stable report schema. With includeTiming=false the output is
/// byte-identical across runs of the same (program, config, seed).
inline nlohmann::ordered_json reportToJson(const AnalysisReport &r,
                                           bool includeTiming = true) {
  nlohmann::ordered_json j;
  j["program"] = r.program;
  j["cache"] = {{"capacity", r.cache.capacity},
                {"line", r.cache.lineSize},
                {"assoc", r.cache.assoc},
                {"sets", r.cache.numSets()}};
  j["mode"] = r.mode == AnalysisMode::Opt ? "opt" : "base";
  j["paths"] = r.explore.pathsExplored;
  j["spec_states"] = r.explore.speculativeStates;
  nlohmann::ordered_json ws = nlohmann::ordered_json::array();
  for (const LeakWitness &w : r.witnesses)
    ws.push_back(witnessToJson(w));
  j["witnesses"] = ws;
  j["divergent"] = r.divergentCount();
  j["opposite"] = r.oppositeCount();
  j["solver"] = {{"queries", r.solver.queries},
                 {"nodes", r.solver.formulaNodes}};
  if (includeTiming)
    j["solver"]["ms"] = r.solver.millis;
  if (!r.warnings.empty())
    j["warnings"] = r.warnings;
  return j;
}

inline std::string reportToText(const AnalysisReport &r) {
  std::ostringstream os;
  os << "program: " << r.program << "\n";
  os << "cache: " << r.cache.capacity << "B/" << r.cache.assoc << "-way/"
     << r.cache.lineSize << "B lines (" << r.cache.numSets() << " sets)\n";
  os << "mode: " << (r.mode == AnalysisMode::Opt ? "opt" : "base") << "\n";
  os << "paths explored: " << r.explore.pathsExplored
     << ", speculative states: " << r.explore.speculativeStates << "\n";
  os << "solver: " << r.solver.queries << " queries, "
     << r.solver.formulaNodes << " formula nodes, " << r.solver.millis
     << " ms\n";
  for (const std::string &w : r.warnings)
    os << "warning: " << w << "\n";
  if (r.witnesses.empty()) {
    os << "no leaks found\n";
    return os.str();
  }
  os << "leaks: " << r.witnesses.size() << " (" << r.divergentCount() << " divergent / "
     << r.oppositeCount() << " opposite)\n";
  for (const LeakWitness &w : r.witnesses) {
    os << "  line " << w.location << " (" << w.var << "["
       << (w.behavior == Behavior::Divergent ? "divergent" : "opposite")
       << "]) after mispredicting the branch at line "
       << w.mispredictedBranchLine << "\n";
    os << "    architectural verdict: " << (w.archHit ? "hit" : "miss")
       << "\n";
    auto printInput = [&os](const Assignment &a, const char *tag, bool hit) {
      os << "    " << tag << ": {";
      bool first = true;
      for (const auto &[n, v] : a) {
        os << (first ? "" : ", ") << n << "=" << v;
        first = false;
      }
      os << "} -> " << (hit ? "hit" : "miss") << "\n";
    };
    printInput(w.primary, "input", w.primarySpecHit);
    if (w.secondary)
      printInput(*w.secondary, "input'", w.secondarySpecHit);
  }
  return os.str();
}

} // namespace speculeak
