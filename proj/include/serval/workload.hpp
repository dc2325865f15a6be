#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "serval/history.hpp"

// Synthetic observed histories: serializable by construction (a simulated
// serial execution with widened, commit-point-containing client
// intervals), or with one of the classic anomalies grafted on.

namespace serval::workload {

struct GenParams {
  std::uint64_t txn_count = 100;
  std::uint64_t object_count = 100;
  std::uint32_t table_count = 1;
  std::uint32_t session_count = 8;
  std::uint32_t ops_per_txn = 4;
  // Operation mix; must be nonnegative and sum to 1.
  double read_ratio = 0.5;
  double write_ratio = 0.5;
  double pred_read_ratio = 0.0;
  double pred_write_ratio = 0.0;
  double overlap_factor = 0.05;  // mean fraction of concurrently open txns
  double hot_key_fraction = 0.0;  // share of accesses hitting a small hot set
  std::uint64_t seed = 1;
};

// Named presets mirroring common benchmark shapes.
std::optional<GenParams> preset(const std::string& name,
                                std::uint64_t txn_count, std::uint64_t seed);
std::string preset_names();

ObservedHistory generate_serializable(const GenParams& p);

enum class AnomalyKind {
  AbortedRead,
  IntermediateRead,
  LostUpdate,
  WriteSkew,
  DirtyWriteCycle,
  Phantom,
};

std::optional<AnomalyKind> anomaly_kind_from(const std::string& name);
const char* to_string(AnomalyKind k);

// Returns h plus a compact gadget on a fresh table exhibiting the given
// anomaly; the gadget's transactions mutually overlap and start after
// everything in h.  Throws HistoryError when h has no transactions to
// host the anomaly.
ObservedHistory inject_anomaly(const ObservedHistory& h, AnomalyKind kind,
                               std::uint64_t seed);

// The same gadget wired so that it stays serializable; used as the
// matched control in regression tests.
ObservedHistory inject_control(const ObservedHistory& h, AnomalyKind kind,
                               std::uint64_t seed);

}  // namespace serval::workload
