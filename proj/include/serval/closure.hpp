#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <variant>
#include <vector>

#include "serval/deps.hpp"
#include "serval/history.hpp"

// Reachability over the dependency graph, stored compactly: transactions
// are sorted by start timestamp, and explicit reachability bits are kept
// only for pairs inside each transaction's overlap window.  Pairs outside
// the window are answered from timestamps alone: a transaction reaches
// everything that starts after it ends, and can never reach anything that
// ended before it started (the graph stays acyclic).

namespace serval {

class TxnOrder {
 public:
  // Committed transactions sorted by (start, end, id).  With
  // full_windows, every pair is treated as overlapping and timestamps
  // order nothing (used by the mode that ignores time information).
  static TxnOrder build(const ObservedHistory& h, bool full_windows = false);

  std::uint32_t size() const { return static_cast<std::uint32_t>(n_); }
  const Transaction& txn(TxnIdx i) const { return *txns_[i]; }
  TxnIdx index_of(TxnId id) const { return by_id_.at(id); }

  // First and last index overlapping i, and the time-successor of i whose
  // end timestamp is minimal (kNoTxn when i has no time-successor).
  TxnIdx first_overlap(TxnIdx i) const { return l_[i]; }
  TxnIdx last_overlap(TxnIdx i) const { return r_[i]; }
  TxnIdx min_time_successor(TxnIdx i) const { return m_[i]; }

  bool time_precedes(TxnIdx i, TxnIdx j) const {
    return !full_windows_ && txns_[i]->end <= txns_[j]->start;
  }
  bool overlaps(TxnIdx i, TxnIdx j) const {
    return !time_precedes(i, j) && !time_precedes(j, i);
  }

 private:
  std::size_t n_ = 0;
  bool full_windows_ = false;
  std::vector<const Transaction*> txns_;
  std::vector<TxnIdx> l_, r_, m_;
  std::unordered_map<TxnId, TxnIdx> by_id_;
};

struct CyclePath {
  std::vector<LabeledEdge> edges;  // closed walk
};

class CompactClosure {
 public:
  // Builds reachability for graph ∪ time edges, or reports a cycle.
  static std::variant<CompactClosure, CyclePath> build(const TxnOrder& ord,
                                                       const AdjList& graph);

  bool reachable(TxnIdx i, TxnIdx j) const;

  enum class InsertStatus { Ok, NoOp, Cycle };
  struct InsertResult {
    InsertStatus status;
    CyclePath cycle;  // set when status == Cycle; includes the new edge
  };

  // Adds edge (i, j), updating every affected window cell and logging the
  // changes to the trail.  The scan is confined to the index ranges that
  // can actually change, derived from the endpoints' overlap windows.
  InsertResult insert_edge(TxnIdx i, TxnIdx j, const EdgeLabel& label,
                           int lit = kNoLit);

  using Savepoint = std::size_t;
  Savepoint savepoint() const { return trail_.size(); }
  void rollback(Savepoint sp);

  // A path of labeled edges from i to j; requires reachable(i, j).
  // Solver-inserted reachability is decomposed through the recorded
  // triggering edges; everything else resolves to direct graph edges and
  // time hops.
  std::vector<LabeledEdge> find_path(TxnIdx i, TxnIdx j) const;

  // Literal that inserted edge (u, v), or kNoLit for graph/time facts.
  static constexpr int kNoLit = 0;
  int edge_literal(TxnIdx u, TxnIdx v) const;

  std::size_t cell_count() const { return cells_; }

 private:
  struct Cell {
    TxnIdx p = kNoTxn, q = kNoTxn;  // triggering edge, when inserted
  };
  struct InsertedEdge {
    EdgeLabel label;
    int lit;
  };
  enum class TrailOp : std::uint8_t { CellSet, EdgeAdded };
  struct TrailEvent {
    TrailOp op;
    std::uint64_t a;  // cell index, or packed edge key
  };

  const TxnOrder* ord_ = nullptr;
  const AdjList* graph_ = nullptr;
  std::size_t cells_ = 0;
  std::vector<std::uint64_t> bits_;
  std::vector<std::size_t> offset_;
  std::unordered_map<std::uint64_t, Cell> path_;
  std::unordered_map<std::uint64_t, InsertedEdge> inserted_;
  std::vector<TrailEvent> trail_;

  bool in_window(TxnIdx i, TxnIdx j) const;
  std::size_t cell_index(TxnIdx i, TxnIdx j) const;
  bool cell(std::size_t idx) const {
    return bits_[idx >> 6] >> (idx & 63) & 1;
  }
  void set_cell(std::size_t idx) { bits_[idx >> 6] |= 1ull << (idx & 63); }
  void clear_cell(std::size_t idx) {
    bits_[idx >> 6] &= ~(1ull << (idx & 63));
  }
  static std::uint64_t edge_key(TxnIdx u, TxnIdx v) {
    return (static_cast<std::uint64_t>(u) << 32) | v;
  }
  void append_path(std::vector<LabeledEdge>& out, TxnIdx i, TxnIdx j) const;
  std::optional<EdgeLabel> direct_edge(TxnIdx u, TxnIdx v) const;
};

}  // namespace serval
