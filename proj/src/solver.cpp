#include "serval/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace serval {

int CnfSystem::item_var(std::uint32_t constraint_idx) const {
  for (std::uint32_t v = 1; v <= var_count; ++v)
    if (vars[v].kind == VarKind::Item && vars[v].a == constraint_idx)
      return static_cast<int>(v);
  return 0;
}

CnfSystem encode(const ConstraintSystem& sys, const TxnOrder& ord) {
  (void)ord;
  CnfSystem cnf;
  cnf.vars.push_back({});  // 1-based

  auto new_var = [&](VarKind kind, std::uint32_t a, std::uint32_t b) {
    cnf.vars.push_back({kind, a, b});
    return static_cast<int>(++cnf.var_count);
  };

  // Item variables: the positive literal picks the first-writer side.
  std::unordered_map<std::uint64_t, std::pair<int, const ItemConstraint*>>
      item_by_pair;  // (key, ti, tj) -> (var, constraint)
  auto pair_key = [](KeyId k, TxnIdx a, TxnIdx b) {
    return (static_cast<std::uint64_t>(k) << 42) ^
           (static_cast<std::uint64_t>(a) << 21) ^ b;
  };
  for (std::uint32_t i = 0; i < sys.items.size(); ++i) {
    const ItemConstraint& ic = sys.items[i];
    int v = new_var(VarKind::Item, i, 0);
    ++cnf.item_vars;
    cnf.edges_of_lit[v] = ic.eij;
    cnf.edges_of_lit[-v] = ic.eji;
    item_by_pair[pair_key(ic.key, ic.ti, ic.tj)] = {v, &ic};
  }

  std::unordered_map<std::uint64_t, int> edge_var;  // shared per (u, v)
  auto edge_lit = [&](const LabeledEdge& e) {
    std::uint64_t k = (static_cast<std::uint64_t>(e.from) << 32) | e.to;
    auto it = edge_var.find(k);
    if (it != edge_var.end()) return it->second;
    int v = new_var(VarKind::Edge, e.from, e.to);
    ++cnf.edge_vars;
    cnf.edges_of_lit[v].push_back(e);
    edge_var[k] = v;
    return v;
  };

  for (std::uint32_t p = 0; p < sys.preds.size(); ++p) {
    const PredicateConstraint& pc = sys.preds[p];
    std::vector<int> alt_vars;
    for (std::uint32_t a = 0; a < pc.alts.size(); ++a) {
      int v = new_var(VarKind::Alt, p, a);
      ++cnf.alt_vars;
      alt_vars.push_back(v);
      cnf.edges_of_lit[v] = pc.alts[a].determined;
      for (const UndeterminedEdge& ue : pc.alts[a].undetermined) {
        int be = edge_lit(ue.edge);
        // Justifying install order: the item variable of the (m, n) pair
        // on this constraint's key.
        TxnIdx lo = std::min(ue.ww_m, ue.ww_n);
        TxnIdx hi = std::max(ue.ww_m, ue.ww_n);
        auto it = item_by_pair.find(pair_key(pc.key, lo, hi));
        if (it == item_by_pair.end())
          throw std::logic_error(
              "undetermined edge without a live install-order constraint");
        int order_lit = it->second.second->ti == ue.ww_m
                            ? it->second.first
                            : -it->second.first;
        // Chosen alternative plus settled order forces the edge.
        cnf.clauses.push_back({{be, -v, -order_lit}, false, {}});
      }
    }
    cnf.clauses.push_back({alt_vars, false, {}});
    for (std::size_t x = 0; x < alt_vars.size(); ++x)
      for (std::size_t y = x + 1; y < alt_vars.size(); ++y)
        cnf.clauses.push_back({{-alt_vars[x], -alt_vars[y]}, false, {}});
  }
  return cnf;
}

namespace {

std::uint64_t luby(std::uint64_t i) {
  for (std::uint64_t k = 1; ; ++k) {
    std::uint64_t span = (1ull << k) - 1;
    if (i == span) return 1ull << (k - 1);
    if (i < span) {
      i -= (span >> 1);
      k = 0;
    }
  }
}

class Search {
 public:
  Search(const CnfSystem& cnf, CompactClosure& closure, const TxnOrder& ord,
         const SolveOptions& opts, const std::vector<Clause>& preloaded)
      : cnf_(cnf), closure_(closure), ord_(ord), opts_(opts) {
    value_.assign(cnf.var_count + 1, 0);
    level_.assign(cnf.var_count + 1, 0);
    reason_.assign(cnf.var_count + 1, -1);
    activity_.assign(cnf.var_count + 1, 0.0);
    phase_.assign(cnf.var_count + 1, 0);
    for (const Clause& c : cnf.clauses) db_.push_back(c);
    for (const Clause& c : preloaded) {
      db_.push_back(c);
      db_.back().learned = true;
    }
    for (const auto& [lit, edges] : cnf.edges_of_lit)
      scan_lits_.push_back(lit);
    std::sort(scan_lits_.begin(), scan_lits_.end());
    build_order();
  }

  SolveResult run() {
    SolveResult res;
    trail_lim_.push_back(0);
    save_.push_back(closure_.savepoint());

    std::uint64_t next_restart = 64 * luby(1);
    while (true) {
      int confl = propagate();
      if (confl >= 0) {
        ++stats_.conflicts;
        if (!db_[confl].seed_cycle.empty()) last_cycle_ = db_[confl].seed_cycle;
        if (opts_.conflict_budget && stats_.conflicts > opts_.conflict_budget) {
          res.status = SolveStatus::BudgetExceeded;
          backtrack(0);
          break;
        }
        if (level() == 0) {
          res.status = SolveStatus::Unsat;
          res.last_cycle = last_cycle_;
          break;
        }
        analyze_and_backjump(confl);
        if (stats_.conflicts >= next_restart) {
          backtrack(0);
          ++stats_.restarts;
          next_restart = stats_.conflicts + 64 * luby(stats_.restarts + 1);
        }
        continue;
      }
      int var = pick_branch();
      if (var == 0) {
        res.status = SolveStatus::Sat;
        res.model.assign(cnf_.var_count + 1, false);
        for (std::uint32_t v = 1; v <= cnf_.var_count; ++v)
          res.model[v] = value_[v] > 0;
        res.chosen = inserted_edges_;
        break;
      }
      ++stats_.decisions;
      trail_lim_.push_back(trail_.size());
      save_.push_back(closure_.savepoint());
      enqueue(phase_[var] >= 0 ? var : -var, -1);
    }

    if (res.status != SolveStatus::Sat) backtrack(0);
    for (const Clause& c : db_)
      if (c.learned) res.learned.push_back(c);
    stats_.learned = res.learned.size();
    res.stats = stats_;
    res.trace = std::move(trace_);
    return res;
  }

 private:
  const CnfSystem& cnf_;
  CompactClosure& closure_;
  const TxnOrder& ord_;
  const SolveOptions& opts_;

  std::vector<Clause> db_;
  std::vector<int8_t> value_;  // per var: 0 unset, +1 true, -1 false
  std::vector<int> level_;
  std::vector<int> reason_;  // clause index, -1 for decisions
  std::vector<double> activity_;
  std::vector<int8_t> phase_;  // preferred/saved polarity
  std::vector<int> trail_;
  std::size_t theory_head_ = 0;
  std::vector<std::size_t> trail_lim_;
  std::vector<CompactClosure::Savepoint> save_;
  std::vector<int> scan_lits_;
  std::vector<std::pair<int, double>> static_order_;  // (var, rank)
  SolverStats stats_;
  std::vector<LabeledEdge> last_cycle_;
  std::vector<LabeledEdge> inserted_edges_;
  std::vector<TheoryImplication> trace_;
  double bump_ = 1.0;

  int level() const { return static_cast<int>(trail_lim_.size()) - 1; }
  int8_t lit_value(int lit) const {
    int8_t v = value_[std::abs(lit)];
    return lit > 0 ? v : static_cast<int8_t>(-v);
  }

  void build_order() {
    // Install-order variables first, closest start timestamps ahead,
    // oriented from the earlier-starting writer.  Alternative variables
    // prefer the latest writer that still ends within the reader's
    // lifetime.  Edge variables default to false.
    for (std::uint32_t v = 1; v <= cnf_.var_count; ++v) {
      const VarInfo& vi = cnf_.vars[v];
      double rank = 0;
      if (vi.kind == VarKind::Item) {
        const auto& edges = cnf_.edges_of_lit.at(static_cast<int>(v));
        TxnIdx ti = edges.front().from, tj = edges.front().to;
        rank = static_cast<double>(ord_.txn(tj).start) -
               static_cast<double>(ord_.txn(ti).start);
        phase_[v] = 1;
      } else if (vi.kind == VarKind::Alt) {
        rank = 1e15;
        phase_[v] = -1;
      } else {
        rank = 1e18;
        phase_[v] = -1;
      }
      static_order_.push_back({static_cast<int>(v), rank});
    }
    std::unordered_map<std::uint32_t, std::pair<int, std::int64_t>> best;
    for (std::uint32_t v = 1; v <= cnf_.var_count; ++v) {
      const VarInfo& vi = cnf_.vars[v];
      if (vi.kind != VarKind::Alt) continue;
      const auto& edges = cnf_.edges_of_lit.at(static_cast<int>(v));
      std::int64_t score = 0;
      if (!edges.empty() && edges.front().label.kind == DepKind::PredWR) {
        TxnIdx tm = edges.front().from;
        TxnIdx reader = edges.front().to;
        Tick em = ord_.txn(tm).end;
        score = em <= ord_.txn(reader).end ? static_cast<std::int64_t>(em)
                                           : -static_cast<std::int64_t>(em);
      }
      auto it = best.find(vi.a);
      if (it == best.end() || score > it->second.second)
        best[vi.a] = {static_cast<int>(v), score};
    }
    for (auto& [cidx, pick] : best) phase_[pick.first] = 1;
    std::stable_sort(
        static_order_.begin(), static_order_.end(),
        [](const auto& a, const auto& b) { return a.second < b.second; });
    if (!opts_.timestamp_heuristic) {
      static_order_.clear();
      for (std::uint32_t v = 1; v <= cnf_.var_count; ++v) {
        static_order_.push_back({static_cast<int>(v), 0.0});
        phase_[v] = 1;
      }
    }
  }

  bool enqueue(int lit, int reason) {
    int var = std::abs(lit);
    if (value_[var] != 0) return lit_value(lit) > 0;
    value_[var] = lit > 0 ? 1 : -1;
    level_[var] = level();
    reason_[var] = reason;
    phase_[var] = value_[var];
    trail_.push_back(lit);
    if (reason >= 0) ++stats_.propagations;
    return true;
  }

  void backtrack(int target) {
    if (target >= level()) return;
    closure_.rollback(save_[target + 1]);
    save_.resize(target + 1);
    while (trail_.size() > trail_lim_[target + 1]) {
      int var = std::abs(trail_.back());
      value_[var] = 0;
      reason_[var] = -1;
      trail_.pop_back();
    }
    trail_lim_.resize(target + 1);
    theory_head_ = trail_.size();
    std::vector<LabeledEdge> kept;
    for (const auto& e : inserted_edges_)
      if (closure_.edge_literal(e.from, e.to) != CompactClosure::kNoLit)
        kept.push_back(e);
    inserted_edges_ = std::move(kept);
  }

  // Returns a conflicting clause index, or -1 at fixpoint.
  int propagate() {
    while (true) {
      // Boolean units, by plain scan; the clause store stays small.
      bool progressed = false;
      for (std::size_t ci = 0; ci < db_.size(); ++ci) {
        const Clause& c = db_[ci];
        int unit = 0, free_lits = 0;
        bool satisfied = false;
        for (int lit : c.lits) {
          int8_t v = lit_value(lit);
          if (v > 0) {
            satisfied = true;
            break;
          }
          if (v == 0) {
            if (++free_lits > 1) break;
            unit = lit;
          }
        }
        if (satisfied || free_lits > 1) continue;
        if (free_lits == 0) return static_cast<int>(ci);
        enqueue(unit, static_cast<int>(ci));
        progressed = true;
      }
      if (progressed) continue;

      if (theory_head_ < trail_.size()) {
        int confl = theory_insert();
        if (confl >= 0) return confl;
        continue;
      }

      if (!opts_.eager_theory) return -1;
      std::size_t before = trail_.size();
      int confl = theory_imply();
      if (confl >= 0) return confl;
      if (trail_.size() == before) return -1;
    }
  }

  // Mirrors newly-true literals' edges into the closure.
  int theory_insert() {
    while (theory_head_ < trail_.size()) {
      int lit = trail_[theory_head_++];
      auto it = cnf_.edges_of_lit.find(lit);
      if (it == cnf_.edges_of_lit.end()) continue;
      for (const LabeledEdge& e : it->second) {
        auto res = closure_.insert_edge(e.from, e.to, e.label, lit);
        if (res.status == CompactClosure::InsertStatus::Ok) {
          inserted_edges_.push_back(e);
        } else if (res.status == CompactClosure::InsertStatus::Cycle) {
          return make_conflict_clause(res.cycle.edges, lit);
        }
      }
    }
    return -1;
  }

  // Implies the negation of any unassigned literal whose edge now closes
  // a cycle, with the blocking path as the reason.
  int theory_imply() {
    for (int lit : scan_lits_) {
      if (lit_value(lit) != 0) continue;
      for (const LabeledEdge& e : cnf_.edges_of_lit.at(lit)) {
        if (!closure_.reachable(e.to, e.from)) continue;
        auto path = closure_.find_path(e.to, e.from);
        std::vector<int> reason;
        for (const LabeledEdge& pe : path) {
          int plit = closure_.edge_literal(pe.from, pe.to);
          if (plit == CompactClosure::kNoLit) continue;
          if (std::find(reason.begin(), reason.end(), -plit) == reason.end())
            reason.push_back(-plit);
        }
        reason.push_back(-lit);
        Clause rc;
        rc.lits = reason;
        rc.seed_cycle = path;
        rc.seed_cycle.push_back(e);
        last_cycle_ = rc.seed_cycle;
        db_.push_back(std::move(rc));
        int ci = static_cast<int>(db_.size()) - 1;
        if (opts_.collect_trace)
          trace_.push_back({-lit, reason, db_.back().seed_cycle});
        if (!enqueue(-lit, ci)) return ci;
        break;
      }
    }
    return -1;
  }

  int make_conflict_clause(const std::vector<LabeledEdge>& cycle,
                           int pending_lit) {
    Clause c;
    c.seed_cycle = cycle;
    c.lits.push_back(-pending_lit);
    for (const LabeledEdge& e : cycle) {
      int lit = closure_.edge_literal(e.from, e.to);
      if (lit == CompactClosure::kNoLit) continue;
      if (std::find(c.lits.begin(), c.lits.end(), -lit) == c.lits.end())
        c.lits.push_back(-lit);
    }
    db_.push_back(std::move(c));
    return static_cast<int>(db_.size()) - 1;
  }

  void bump(int var) {
    activity_[var] += bump_;
    if (activity_[var] > 1e100) {
      for (auto& a : activity_) a *= 1e-100;
      bump_ *= 1e-100;
    }
  }

  void analyze_and_backjump(int confl) {
    std::vector<int> learnt;
    std::vector<bool> seen(cnf_.var_count + 1, false);
    std::vector<LabeledEdge> seed = db_[confl].seed_cycle;
    int counter = 0;
    int p = 0;
    std::size_t idx = trail_.size();

    while (true) {
      const Clause& c = db_[confl];
      for (int q : c.lits) {
        if (p != 0 && q == p) continue;
        int var = std::abs(q);
        if (seen[var] || level_[var] == 0) continue;
        seen[var] = true;
        bump(var);
        if (level_[var] == level())
          ++counter;
        else
          learnt.push_back(q);
      }
      while (idx > 0 && !seen[std::abs(trail_[idx - 1])]) --idx;
      assert(idx > 0);
      int lit = trail_[--idx];
      int var = std::abs(lit);
      seen[var] = false;
      --counter;
      if (counter == 0) {
        learnt.push_back(-lit);  // first unique implication point
        break;
      }
      assert(reason_[var] >= 0);
      confl = reason_[var];
      p = lit;
      if (seed.empty() && !db_[confl].seed_cycle.empty())
        seed = db_[confl].seed_cycle;
    }

    std::rotate(learnt.rbegin(), learnt.rbegin() + 1, learnt.rend());
    int target = 0;
    for (std::size_t i = 1; i < learnt.size(); ++i)
      target = std::max(target, level_[std::abs(learnt[i])]);

    Clause lc;
    lc.lits = learnt;
    lc.learned = true;
    lc.seed_cycle = std::move(seed);
    db_.push_back(std::move(lc));
    int ci = static_cast<int>(db_.size()) - 1;

    backtrack(target);
    enqueue(learnt[0], ci);
    bump_ *= 1.05;
  }

  int pick_branch() {
    if (opts_.timestamp_heuristic && stats_.conflicts >= 50) {
      int bestv = 0;
      double best_act = -1;
      for (std::uint32_t v = 1; v <= cnf_.var_count; ++v)
        if (value_[v] == 0 && activity_[v] > best_act) {
          bestv = static_cast<int>(v);
          best_act = activity_[v];
        }
      return bestv;
    }
    for (const auto& [var, rank] : static_order_)
      if (value_[var] == 0) return var;
    return 0;
  }
};

}  // namespace

SolveResult solve(const CnfSystem& cnf, CompactClosure& closure,
                  const TxnOrder& ord, const SolveOptions& opts,
                  const std::vector<Clause>& preloaded) {
  for (const Clause& c : cnf.clauses)
    if (c.lits.empty()) {
      SolveResult res;
      res.status = SolveStatus::Unsat;
      return res;
    }
  Search search(cnf, closure, ord, opts, preloaded);
  return search.run();
}

}  // namespace serval
