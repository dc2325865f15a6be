#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "serval/history.hpp"

// End-to-end decision procedure: validate, screen read anomalies, build
// the known graph and its closure, generate and reduce constraints,
// encode, solve, and re-check any satisfying assignment independently.

namespace serval {

enum class Status { Serializable, NotSerializable, InvalidHistory, Indeterminate };

enum class WitnessKind { AbortedRead, IntermediateRead, Cycle, NoCompletion };

const char* to_string(Status s);
const char* to_string(WitnessKind k);

// Cycle edges reported with external transaction ids and key names so
// they can be replayed against the history without the verifier's
// internal indexes.
struct WitnessEdge {
  TxnId from, to;
  std::string kind;  // wr, ww, rw, time, pred-wr, pred-rw
  std::string key;   // empty for time edges
  Vid vid = 0;       // version read, for wr
  std::string pred;  // for pred-* edges
};

struct Anomaly {
  WitnessKind kind;
  std::optional<ReadAnomaly> read;      // for read anomalies
  std::vector<WitnessEdge> cycle;       // for cycles: a closed walk
  TxnId reader = 0;                     // for NoCompletion
  std::string pred;                     // for NoCompletion
  std::string key;                      // for NoCompletion
  std::string detail;
};

struct VerifyStats {
  std::size_t txn_count = 0;
  std::size_t committed = 0;
  std::size_t item_total = 0;
  std::size_t item_after_avoidance = 0;
  std::size_t item_after_reduction = 0;
  std::size_t pred_total = 0;
  std::size_t pred_after_avoidance = 0;
  std::size_t pred_after_reduction = 0;
  std::size_t closure_cells = 0;
  std::uint64_t decisions = 0;
  std::uint64_t conflicts = 0;
  std::uint64_t learned = 0;
  std::uint64_t propagations = 0;
  double wall_ms = 0;
  std::size_t peak_memory_kb = 0;  // process high-water mark
};

struct Verdict {
  Status status = Status::Indeterminate;
  std::optional<Anomaly> anomaly;
  std::vector<std::string> violations;  // for InvalidHistory
  VerifyStats stats;
  std::optional<bool> oracle_agrees;  // with --oracle
};

struct VerifyOptions {
  bool time_edges = true;     // off: ignore timestamps entirely
  bool pruning = true;        // off: skip the reduction fixpoint
  std::uint64_t conflict_budget = 0;
  bool run_oracle = false;
  std::uint64_t oracle_cap = 10'000'000;
  bool timestamp_heuristic = true;
};

Verdict verify(const ObservedHistory& h, const VerifyOptions& opts = {});

int exit_code(Status s);

// Report writers for the command line.
void write_text_report(const Verdict& v, std::ostream& out);
void write_machine_report(const Verdict& v, std::ostream& out);

}  // namespace serval
