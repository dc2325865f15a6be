#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "serval/closure.hpp"
#include "serval/deps.hpp"
#include "serval/graph.hpp"

// Undecided parts of the dependency graph.  An item constraint offers the
// two possible install orders of one key between two overlapping writers;
// a predicate constraint offers one alternative per version that an
// unknown filtered read may have evaluated.  Reduction resolves
// constraints whose options are already forced or refuted by
// reachability, until nothing changes.

namespace serval {

struct ItemConstraint {
  KeyId key;
  TxnIdx ti, tj;                // ti < tj in start order
  std::vector<LabeledEdge> eij;  // edges if ti's version installs first
  std::vector<LabeledEdge> eji;  // edges if tj's version installs first
};

struct UndeterminedEdge {
  LabeledEdge edge;   // reader -> later true-version writer
  TxnIdx ww_m, ww_n;  // justifying install order: m's version before n's
};

struct PredAlternative {
  TxnIdx tm;  // kInitTxn when the read may have seen the initial version
  std::vector<LabeledEdge> determined;
  std::vector<UndeterminedEdge> undetermined;
};

struct PredicateConstraint {
  TxnIdx reader;
  PredId pred;
  KeyId key;
  std::vector<PredAlternative> alts;
};

struct ConstraintStats {
  std::size_t item_total = 0;           // all same-key committed pairs
  std::size_t item_after_avoidance = 0;  // constraints generated
  std::size_t item_after_reduction = 0;
  std::size_t pred_total = 0;  // one per unknown filtered read
  std::size_t pred_after_avoidance = 0;
  std::size_t pred_after_reduction = 0;
};

struct ShortCircuit {
  enum class Kind { Cycle, NoCompletion };
  Kind kind;
  std::vector<LabeledEdge> cycle;  // for Cycle: a closed walk
  // For NoCompletion: the unknown read with no viable alternative.
  TxnIdx reader = kNoTxn;
  PredId pred = kNoPred;
  KeyId key = kNoKey;
  std::string detail;
};

struct ConstraintSystem {
  std::vector<ItemConstraint> items;
  std::vector<PredicateConstraint> preds;
  ConstraintStats stats;
  std::optional<ShortCircuit> verdict;  // set when generation short-circuits
};

// Item constraints for every overlapping pair of committed installers of
// the same key.  Pairs ordered by timestamps need no constraint: their
// install order and the anti-dependencies it implies are already facts.
// With avoid_by_time off every same-key pair gets a constraint.
std::vector<ItemConstraint> gen_item_constraints(const KnownGraph& g,
                                                 const TxnOrder& ord,
                                                 bool avoid_by_time,
                                                 ConstraintStats& stats);

// Predicate constraints for every unknown filtered read.  Alternatives
// come from installers of false versions; each carries the read
// dependency plus one anti-dependency per true-version installer, tagged
// undetermined until the justifying install order is known.  Edges
// already implied by reachability are dropped; an alternative that
// becomes free of obligations satisfies the constraint outright.  An
// empty candidate set is an immediate NOT_SERIALIZABLE.
ConstraintSystem gen_constraints(const KnownGraph& g, const TxnOrder& ord,
                                 const CompactClosure& c, bool avoid_by_time);

struct ReductionOutcome {
  bool changed = false;
  std::optional<ShortCircuit> verdict;
  std::vector<LabeledEdge> forced;  // edges inserted into the closure
};

// Runs both pruning rules to fixpoint, inserting forced edges into the
// closure.  Deterministic: constraints are visited in generation order.
ReductionOutcome reduce(ConstraintSystem& sys, CompactClosure& c);

}  // namespace serval
