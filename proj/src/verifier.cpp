#include "serval/verifier.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "serval/constraints.hpp"
#include "serval/graph.hpp"
#include "serval/oracle.hpp"
#include "serval/solver.hpp"

namespace serval {

const char* to_string(Status s) {
  switch (s) {
    case Status::Serializable: return "SERIALIZABLE";
    case Status::NotSerializable: return "NOT_SERIALIZABLE";
    case Status::InvalidHistory: return "INVALID_HISTORY";
    case Status::Indeterminate: return "INDETERMINATE";
  }
  return "?";
}

const char* to_string(WitnessKind k) {
  switch (k) {
    case WitnessKind::AbortedRead: return "ABORTED_READ";
    case WitnessKind::IntermediateRead: return "INTERMEDIATE_READ";
    case WitnessKind::Cycle: return "CYCLE";
    case WitnessKind::NoCompletion: return "NO_COMPLETION";
  }
  return "?";
}

int exit_code(Status s) {
  switch (s) {
    case Status::Serializable: return 0;
    case Status::NotSerializable: return 1;
    case Status::InvalidHistory: return 2;
    case Status::Indeterminate: return 3;
  }
  return 3;
}

namespace {

std::size_t peak_memory_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream is(line.substr(6));
      std::size_t kb = 0;
      is >> kb;
      return kb;
    }
  }
  return 0;
}

std::vector<WitnessEdge> externalize(const std::vector<LabeledEdge>& cycle,
                                     const KnownGraph& g, const TxnOrder& ord) {
  std::vector<WitnessEdge> out;
  for (const LabeledEdge& e : cycle) {
    WitnessEdge w;
    w.from = ord.txn(e.from).id;
    w.to = ord.txn(e.to).id;
    w.kind = to_string(e.label.kind);
    if (e.label.key != kNoKey) w.key = g.keys.name(e.label.key);
    w.vid = e.label.vid;
    if (e.label.pred != kNoPred) w.pred = to_string(g.preds[e.label.pred]);
    out.push_back(std::move(w));
  }
  return out;
}

Anomaly from_short_circuit(const ShortCircuit& sc, const KnownGraph& g,
                           const TxnOrder& ord) {
  Anomaly a;
  if (sc.kind == ShortCircuit::Kind::Cycle) {
    a.kind = WitnessKind::Cycle;
    a.cycle = externalize(sc.cycle, g, ord);
  } else {
    a.kind = WitnessKind::NoCompletion;
    if (sc.reader != kNoTxn) a.reader = ord.txn(sc.reader).id;
    if (sc.pred != kNoPred) a.pred = to_string(g.preds[sc.pred]);
    if (sc.key != kNoKey) a.key = g.keys.name(sc.key);
  }
  a.detail = sc.detail;
  return a;
}

// Independent re-check of a model: rebuild the closure from scratch over
// the known edges plus everything the solver chose, and confirm that
// every constraint got exactly one side whose edges are all present.
void check_model(const ConstraintSystem& sys, const CnfSystem& cnf,
                 const SolveResult& res, const KnownGraph& g,
                 const TxnOrder& ord,
                 const std::vector<LabeledEdge>& forced) {
  AdjList adj = g.adj;
  for (const LabeledEdge& e : forced) adj[e.from].push_back({e.to, e.label});
  for (const LabeledEdge& e : res.chosen) adj[e.from].push_back({e.to, e.label});
  auto rebuilt = CompactClosure::build(ord, adj);
  if (std::holds_alternative<CyclePath>(rebuilt))
    throw std::logic_error("model re-check: chosen edges close a cycle");
  const CompactClosure& c = std::get<CompactClosure>(rebuilt);

  auto present = [&](const LabeledEdge& e) {
    return c.reachable(e.from, e.to);
  };
  for (std::uint32_t v = 1; v <= cnf.var_count; ++v) {
    const VarInfo& vi = cnf.vars[v];
    if (vi.kind == VarKind::Item) {
      const ItemConstraint& ic = sys.items[vi.a];
      for (const LabeledEdge& e : res.model[v] ? ic.eij : ic.eji)
        if (!present(e))
          throw std::logic_error("model re-check: item side not applied");
    } else if (vi.kind == VarKind::Alt && res.model[v]) {
      for (const LabeledEdge& e : sys.preds[vi.a].alts[vi.b].determined)
        if (!present(e))
          throw std::logic_error("model re-check: alternative not applied");
    }
  }
  for (const Clause& cl : cnf.clauses) {
    bool sat = false;
    for (int lit : cl.lits)
      if ((lit > 0) == static_cast<bool>(res.model[std::abs(lit)])) {
        sat = true;
        break;
      }
    if (!sat) throw std::logic_error("model re-check: clause unsatisfied");
  }
}

}  // namespace

Verdict verify(const ObservedHistory& h, const VerifyOptions& opts) {
  Verdict v;
  auto t0 = std::chrono::steady_clock::now();
  auto finish = [&]() -> Verdict& {
    v.stats.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    v.stats.peak_memory_kb = peak_memory_kb();
    if (opts.run_oracle) {
      try {
        auto ov = oracle::is_serializable_bruteforce(h, opts.oracle_cap);
        bool oracle_serializable = ov == oracle::OracleVerdict::Serializable;
        if (v.status == Status::Serializable ||
            v.status == Status::NotSerializable)
          v.oracle_agrees =
              oracle_serializable == (v.status == Status::Serializable);
      } catch (const oracle::EnumerationCap&) {
        v.oracle_agrees = std::nullopt;
      }
    }
    return v;
  };

  v.stats.txn_count = h.transactions.size();
  for (const auto& t : h.transactions)
    if (t.committed()) ++v.stats.committed;

  try {
    validate_history(h);
    std::vector<ReadAnomaly> reads = detect_read_anomalies(h);
    if (!reads.empty()) {
      v.status = Status::NotSerializable;
      Anomaly a;
      a.kind = reads.front().kind == ReadAnomaly::Kind::AbortedRead
                   ? WitnessKind::AbortedRead
                   : WitnessKind::IntermediateRead;
      a.read = reads.front();
      a.detail = std::to_string(reads.size()) + " offending read(s)";
      v.anomaly = std::move(a);
      return finish();
    }
  } catch (const HistoryError& e) {
    v.status = Status::InvalidHistory;
    v.violations.push_back(e.what());
    return finish();
  }

  TxnOrder ord = TxnOrder::build(h, /*full_windows=*/!opts.time_edges);
  KnownGraph g = build_known_graph(h, ord, opts.time_edges);

  auto built = CompactClosure::build(ord, g.adj);
  if (std::holds_alternative<CyclePath>(built)) {
    v.status = Status::NotSerializable;
    Anomaly a;
    a.kind = WitnessKind::Cycle;
    a.cycle = externalize(std::get<CyclePath>(built).edges, g, ord);
    a.detail = "observed dependencies already close a cycle";
    v.anomaly = std::move(a);
    return finish();
  }
  CompactClosure closure = std::move(std::get<CompactClosure>(built));
  v.stats.closure_cells = closure.cell_count();

  ConstraintSystem sys = gen_constraints(g, ord, closure, opts.time_edges);
  v.stats.item_total = sys.stats.item_total;
  v.stats.item_after_avoidance = sys.stats.item_after_avoidance;
  v.stats.pred_total = sys.stats.pred_total;
  v.stats.pred_after_avoidance = sys.stats.pred_after_avoidance;
  if (sys.verdict) {
    v.status = Status::NotSerializable;
    v.anomaly = from_short_circuit(*sys.verdict, g, ord);
    return finish();
  }

  std::vector<LabeledEdge> forced;
  if (opts.pruning) {
    ReductionOutcome red = reduce(sys, closure);
    forced = std::move(red.forced);
    if (red.verdict) {
      v.status = Status::NotSerializable;
      v.anomaly = from_short_circuit(*red.verdict, g, ord);
      return finish();
    }
    v.stats.item_after_reduction = sys.stats.item_after_reduction;
    v.stats.pred_after_reduction = sys.stats.pred_after_reduction;
  } else {
    v.stats.item_after_reduction = sys.items.size();
    v.stats.pred_after_reduction = sys.preds.size();
  }

  CnfSystem cnf = encode(sys, ord);
  SolveOptions sopts;
  sopts.conflict_budget = opts.conflict_budget;
  sopts.timestamp_heuristic = opts.timestamp_heuristic;
  SolveResult res = solve(cnf, closure, ord, sopts);
  v.stats.decisions = res.stats.decisions;
  v.stats.conflicts = res.stats.conflicts;
  v.stats.learned = res.stats.learned;
  v.stats.propagations = res.stats.propagations;

  if (res.status == SolveStatus::BudgetExceeded) {
    v.status = Status::Indeterminate;
    return finish();
  }
  if (res.status == SolveStatus::Unsat) {
    v.status = Status::NotSerializable;
    Anomaly a;
    if (!res.last_cycle.empty()) {
      a.kind = WitnessKind::Cycle;
      a.cycle = externalize(res.last_cycle, g, ord);
      a.detail = "no assignment avoids this dependency cycle";
    } else {
      a.kind = WitnessKind::NoCompletion;
      a.detail = "constraint system is unsatisfiable";
    }
    v.anomaly = std::move(a);
    return finish();
  }

  check_model(sys, cnf, res, g, ord, forced);
  v.status = Status::Serializable;
  return finish();
}

namespace {

void write_edge(std::ostream& out, const WitnessEdge& e) {
  out << e.from << " -> " << e.to << " [" << e.kind;
  if (!e.key.empty()) out << ' ' << e.key;
  if (e.kind == "wr") out << ':' << e.vid;
  if (!e.pred.empty()) out << " | " << e.pred;
  out << ']';
}

}  // namespace

void write_text_report(const Verdict& v, std::ostream& out) {
  out << "verdict: " << to_string(v.status) << '\n';
  for (const auto& m : v.violations) out << "violation: " << m << '\n';
  if (v.anomaly) {
    out << "anomaly: " << to_string(v.anomaly->kind) << '\n';
    if (v.anomaly->read) {
      const ReadAnomaly& r = *v.anomaly->read;
      out << "  txn " << r.reader << " read " << r.key << ':' << r.vid
          << " written by txn " << r.writer << '\n';
    }
    for (const auto& e : v.anomaly->cycle) {
      out << "  ";
      write_edge(out, e);
      out << '\n';
    }
    if (v.anomaly->kind == WitnessKind::NoCompletion && !v.anomaly->pred.empty())
      out << "  txn " << v.anomaly->reader << " on " << v.anomaly->key
          << " under " << v.anomaly->pred << '\n';
    if (!v.anomaly->detail.empty())
      out << "  note: " << v.anomaly->detail << '\n';
  }
  if (v.oracle_agrees)
    out << "oracle: " << (*v.oracle_agrees ? "agrees" : "DISAGREES") << '\n';
  out << "wall_ms: " << v.stats.wall_ms << '\n';
}

void write_machine_report(const Verdict& v, std::ostream& out) {
  out << "status=" << to_string(v.status) << '\n';
  if (v.anomaly) {
    out << "anomaly.kind=" << to_string(v.anomaly->kind) << '\n';
    if (v.anomaly->read) {
      out << "anomaly.read.reader=" << v.anomaly->read->reader << '\n';
      out << "anomaly.read.writer=" << v.anomaly->read->writer << '\n';
      out << "anomaly.read.key=" << v.anomaly->read->key << '\n';
      out << "anomaly.read.vid=" << v.anomaly->read->vid << '\n';
    }
    for (std::size_t i = 0; i < v.anomaly->cycle.size(); ++i) {
      const auto& e = v.anomaly->cycle[i];
      out << "anomaly.cycle." << i << '=' << e.from << ' ' << e.to << ' '
          << e.kind;
      if (!e.key.empty()) out << ' ' << e.key;
      if (e.kind == "wr") out << ' ' << e.vid;
      out << '\n';
    }
  }
  for (std::size_t i = 0; i < v.violations.size(); ++i)
    out << "violation." << i << '=' << v.violations[i] << '\n';
  if (v.oracle_agrees) out << "oracle.agrees=" << *v.oracle_agrees << '\n';
  const VerifyStats& s = v.stats;
  out << "stats.txn_count=" << s.txn_count << '\n';
  out << "stats.committed=" << s.committed << '\n';
  out << "stats.item_constraints.total=" << s.item_total << '\n';
  out << "stats.item_constraints.after_avoidance=" << s.item_after_avoidance
      << '\n';
  out << "stats.item_constraints.after_reduction=" << s.item_after_reduction
      << '\n';
  out << "stats.pred_constraints.total=" << s.pred_total << '\n';
  out << "stats.pred_constraints.after_avoidance=" << s.pred_after_avoidance
      << '\n';
  out << "stats.pred_constraints.after_reduction=" << s.pred_after_reduction
      << '\n';
  out << "stats.closure_cells=" << s.closure_cells << '\n';
  out << "stats.solver.decisions=" << s.decisions << '\n';
  out << "stats.solver.conflicts=" << s.conflicts << '\n';
  out << "stats.solver.learned=" << s.learned << '\n';
  out << "stats.solver.propagations=" << s.propagations << '\n';
  out << "stats.wall_ms=" << s.wall_ms << '\n';
  out << "stats.peak_memory_kb=" << s.peak_memory_kb << '\n';
}

}  // namespace serval
