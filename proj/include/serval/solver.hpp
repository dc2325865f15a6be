#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "serval/closure.hpp"
#include "serval/constraints.hpp"

// Decides whether the surviving constraints admit an acyclic assignment.
// Booleans: one variable per item constraint (true picks the first-writer
// side), one per predicate alternative, one per undetermined edge.
// Clauses encode only the exactly-one choice among alternatives and the
// derivation of undetermined edges; acyclicity is enforced by a theory
// that mirrors every true edge literal into the compact closure and
// learns a blocking clause from every cycle it closes.

namespace serval {

enum class VarKind : std::uint8_t { Item, Alt, Edge };

struct VarInfo {
  VarKind kind;
  std::uint32_t a = 0;  // item/pred constraint index, or edge source
  std::uint32_t b = 0;  // alternative index, or edge target
};

struct Clause {
  std::vector<int> lits;
  bool learned = false;
  // For learned clauses: the cycle whose negation seeded them.
  std::vector<LabeledEdge> seed_cycle;
};

struct CnfSystem {
  std::uint32_t var_count = 0;  // vars are 1-based
  std::vector<VarInfo> vars;    // [0] unused
  std::vector<Clause> clauses;
  // Edges inserted into the closure when a literal becomes true.
  std::unordered_map<int, std::vector<LabeledEdge>> edges_of_lit;
  std::uint32_t item_vars = 0, alt_vars = 0, edge_vars = 0;

  int item_var(std::uint32_t constraint_idx) const;
};

// Builds the clause system over the surviving constraints.  Undetermined
// edges resolve their justifying install order to the item variable of
// the corresponding live constraint.
CnfSystem encode(const ConstraintSystem& sys, const TxnOrder& ord);

struct SolverStats {
  std::uint64_t decisions = 0;
  std::uint64_t conflicts = 0;
  std::uint64_t learned = 0;
  std::uint64_t propagations = 0;
  std::uint64_t restarts = 0;
};

enum class SolveStatus { Sat, Unsat, BudgetExceeded };

struct TheoryImplication {
  int implied_lit;
  std::vector<int> reason;          // clause that forced it
  std::vector<LabeledEdge> cycle;   // the walk that would close otherwise
};

struct SolveOptions {
  std::uint64_t conflict_budget = 0;  // 0: unlimited
  bool timestamp_heuristic = true;    // false: variable-index order
  // Eagerly imply the negation of literals whose edges already close a
  // cycle.  Off, cycles surface only as conflicts; the verdict is the
  // same either way.
  bool eager_theory = true;
  bool collect_trace = false;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Unsat;
  std::vector<bool> model;            // 1-based values, for Sat
  std::vector<LabeledEdge> chosen;    // edges inserted by the final model
  std::vector<LabeledEdge> last_cycle;  // most recent theory cycle, for Unsat
  std::vector<Clause> learned;
  SolverStats stats;
  std::vector<TheoryImplication> trace;
};

// Runs conflict-driven search.  The closure carries the known graph and
// reduction facts; everything the solver inserts is rolled back before
// returning, except for a Sat result, where the chosen edges are left in
// place for post-hoc verification by the caller.
SolveResult solve(const CnfSystem& cnf, CompactClosure& closure,
                  const TxnOrder& ord, const SolveOptions& opts = {},
                  const std::vector<Clause>& preloaded = {});

}  // namespace serval
