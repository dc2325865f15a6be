#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "serval/history.hpp"

// Dense ids and labeled dependency edges shared by the graph, closure,
// constraint, and solver layers.  Transactions are addressed by their
// index in the start-timestamp order; keys and predicates are interned.

namespace serval {

using TxnIdx = std::uint32_t;
using KeyId = std::uint32_t;
using PredId = std::uint32_t;

constexpr TxnIdx kNoTxn = std::numeric_limits<TxnIdx>::max();
constexpr KeyId kNoKey = std::numeric_limits<KeyId>::max();
constexpr PredId kNoPred = std::numeric_limits<PredId>::max();

// Index of the virtual writer of all vid-0 initial versions.  It precedes
// every transaction and is never stored in the order or the closure.
constexpr TxnIdx kInitTxn = kNoTxn;

enum class DepKind : std::uint8_t { WR, WW, RW, Time, PredWR, PredRW };

const char* to_string(DepKind k);

struct EdgeLabel {
  DepKind kind = DepKind::Time;
  KeyId key = kNoKey;
  Vid vid = 0;          // version read, for WR edges
  PredId pred = kNoPred;

  static EdgeLabel wr(KeyId k, Vid v) { return {DepKind::WR, k, v, kNoPred}; }
  static EdgeLabel ww(KeyId k) { return {DepKind::WW, k, 0, kNoPred}; }
  static EdgeLabel rw(KeyId k) { return {DepKind::RW, k, 0, kNoPred}; }
  static EdgeLabel time() { return {DepKind::Time, kNoKey, 0, kNoPred}; }
  static EdgeLabel pred_wr(KeyId k, PredId p) {
    return {DepKind::PredWR, k, 0, p};
  }
  static EdgeLabel pred_rw(KeyId k, PredId p) {
    return {DepKind::PredRW, k, 0, p};
  }

  bool operator==(const EdgeLabel&) const = default;
};

struct LabeledEdge {
  TxnIdx from = kNoTxn;
  TxnIdx to = kNoTxn;
  EdgeLabel label;

  bool operator==(const LabeledEdge&) const = default;
};

// Directed edge endpoints only, for set membership and dedup.
struct EdgeKey {
  TxnIdx from, to;
  bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& e) const {
    return (static_cast<std::size_t>(e.from) << 32) | e.to;
  }
};

using AdjList = std::vector<std::vector<std::pair<TxnIdx, EdgeLabel>>>;

}  // namespace serval
