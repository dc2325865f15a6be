#pragma once

#include <random>
#include <string>

#include "serval/history.hpp"

// Shared helpers for the test suites: fixture loading, a deterministic
// random-history fuzzer, and an independent witness replayer.

namespace serval::testing {

inline std::string fixture_path(const std::string& name) {
  return std::string(SERVAL_FIXTURE_DIR) + "/" + name;
}

inline ObservedHistory load_fixture(const std::string& name) {
  return load_history_file(fixture_path(name));
}

// Fuzzed histories: a handful of committed and aborted transactions over
// a few keys of one table, with plain and filtered operations.  All
// intervals mutually overlap, so no pair is ordered by time and the
// brute-force oracle's verdict is directly comparable in every mode.
struct FuzzParams {
  std::uint32_t max_txns = 8;
  std::uint32_t max_keys = 3;
  std::uint32_t max_versions_per_key = 4;
  std::uint32_t max_ops_per_txn = 4;
  double pred_ratio = 0.3;
  double abort_ratio = 0.2;
  bool with_initial = true;
};

ObservedHistory fuzz_history(std::mt19937_64& rng, const FuzzParams& p = {});

// Checks that a reported cycle is a closed walk whose every edge is
// justified by the history alone: wr edges read the writer's installed
// version, time edges respect the recorded clocks, ww/rw edges connect
// writers and readers of the named key, and pred-* edges connect a
// filtered read with installers from its table.
struct WitnessEdgeView {
  TxnId from, to;
  std::string kind, key, pred;
  Vid vid;
};
bool replay_cycle(const ObservedHistory& h,
                  const std::vector<WitnessEdgeView>& cycle,
                  std::string* why = nullptr);

}  // namespace serval::testing
