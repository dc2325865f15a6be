#include "serval/constraints.hpp"

#include <algorithm>
#include <cassert>

namespace serval {

namespace {

std::string describe_read(const KnownGraph& g, const TxnOrder& ord,
                          TxnIdx reader, PredId pred, KeyId key) {
  return "filtered read by txn " + std::to_string(ord.txn(reader).id) +
         " of " + g.keys.name(key) + " under " + to_string(g.preds[pred]);
}

}  // namespace

std::vector<ItemConstraint> gen_item_constraints(const KnownGraph& g,
                                                 const TxnOrder& ord,
                                                 bool avoid_by_time,
                                                 ConstraintStats& stats) {
  std::vector<ItemConstraint> out;
  for (KeyId k = 0; k < static_cast<KeyId>(g.installed.size()); ++k) {
    const auto& writers = g.writers_of(k);
    for (std::size_t a = 0; a < writers.size(); ++a) {
      if (writers[a].writer == kInitTxn) continue;
      for (std::size_t b = a + 1; b < writers.size(); ++b) {
        if (writers[b].writer == kInitTxn) continue;
        ++stats.item_total;
        TxnIdx ti = std::min(writers[a].writer, writers[b].writer);
        TxnIdx tj = std::max(writers[a].writer, writers[b].writer);
        if (avoid_by_time && !ord.overlaps(ti, tj)) continue;
        ItemConstraint c;
        c.key = k;
        c.ti = ti;
        c.tj = tj;
        auto side = [&](TxnIdx first, TxnIdx second,
                        std::vector<LabeledEdge>& edges) {
          edges.push_back({first, second, EdgeLabel::ww(k)});
          for (TxnIdx r : g.readers_of(k, first))
            if (r != second) edges.push_back({r, second, EdgeLabel::rw(k)});
        };
        side(ti, tj, c.eij);
        side(tj, ti, c.eji);
        out.push_back(std::move(c));
      }
    }
  }
  stats.item_after_avoidance = out.size();
  return out;
}

namespace {

bool same_alternative(const PredAlternative& x, const PredAlternative& y) {
  if (x.determined.size() != y.determined.size() ||
      x.undetermined.size() != y.undetermined.size())
    return false;
  for (std::size_t i = 0; i < x.determined.size(); ++i)
    if (!(x.determined[i] == y.determined[i])) return false;
  for (std::size_t i = 0; i < x.undetermined.size(); ++i) {
    const auto& a = x.undetermined[i];
    const auto& b = y.undetermined[i];
    if (!(a.edge == b.edge) || a.ww_m != b.ww_m || a.ww_n != b.ww_n)
      return false;
  }
  return true;
}

}  // namespace

ConstraintSystem gen_constraints(const KnownGraph& g, const TxnOrder& ord,
                                 const CompactClosure& c, bool avoid_by_time) {
  (void)c;
  ConstraintSystem sys;
  sys.items = gen_item_constraints(g, ord, avoid_by_time, sys.stats);

  std::vector<char> truth;
  std::vector<TxnIdx> false_writers, true_writers;
  for (const UnknownThetaRead& ur : g.unknown_reads) {
    ++sys.stats.pred_total;
    const auto& writers = g.writers_of(ur.key);
    g.theta_into(ur.pred, ur.key, truth);
    false_writers.clear();
    true_writers.clear();
    for (std::size_t w = 0; w < writers.size(); ++w)
      (truth[w] ? true_writers : false_writers).push_back(writers[w].writer);

    if (false_writers.empty()) {
      sys.verdict = ShortCircuit{
          ShortCircuit::Kind::NoCompletion,
          {},
          ur.reader,
          ur.pred,
          ur.key,
          "no version fails the filter, so the unmatched read has no "
          "consistent completion: " +
              describe_read(g, ord, ur.reader, ur.pred, ur.key)};
      return sys;
    }

    // Fast path: if some false-version installer imposes no obligations
    // at all, the read completes freely and no constraint is needed.
    // This is the common case in timestamped workloads and skips the
    // edge-set construction below entirely.
    auto read_edge_free = [&](TxnIdx tm) {
      return tm == kInitTxn || tm == ur.reader ||
             (avoid_by_time && ord.time_precedes(tm, ur.reader));
    };
    auto anti_edge_free = [&](TxnIdx tm, TxnIdx tn) {
      if (tn == kInitTxn || tn == ur.reader) return true;
      if (tm != kInitTxn && avoid_by_time && ord.time_precedes(tn, tm))
        return true;  // install order refuted
      if (avoid_by_time && ord.time_precedes(ur.reader, tn)) return true;
      return false;
    };
    bool free_completion = false;
    for (TxnIdx tm : false_writers) {
      if (!read_edge_free(tm)) continue;
      bool all_free = true;
      for (TxnIdx tn : true_writers)
        if (!anti_edge_free(tm, tn)) {
          all_free = false;
          break;
        }
      if (all_free) {
        free_completion = true;
        break;
      }
    }
    if (free_completion) continue;

    PredicateConstraint pc;
    pc.reader = ur.reader;
    pc.pred = ur.pred;
    pc.key = ur.key;
    bool trivially_satisfied = false;

    for (TxnIdx tm : false_writers) {
      PredAlternative alt;
      alt.tm = tm;
      bool infeasible = false;
      bool has_read_edge = false;

      // Read dependency tm -> reader.  Implicit for the initial version
      // and for a read of the transaction's own write; a fact when the
      // writer finished first; impossible when the reader finished first.
      if (tm != kInitTxn && tm != ur.reader) {
        if (avoid_by_time && ord.time_precedes(ur.reader, tm)) {
          infeasible = true;
        } else if (!(avoid_by_time && ord.time_precedes(tm, ur.reader))) {
          alt.determined.push_back(
              {tm, ur.reader, EdgeLabel::pred_wr(ur.key, ur.pred)});
          has_read_edge = true;
        }
      }

      // Anti dependencies reader -> tn, justified only when tm's version
      // installs before tn's.
      for (TxnIdx tn : true_writers) {
        if (infeasible) break;
        if (tn == kInitTxn) continue;  // initial version precedes tm's
        if (tn == ur.reader) continue;
        bool m_first = tm == kInitTxn ||
                       (avoid_by_time && ord.time_precedes(tm, tn));
        bool n_first = tm != kInitTxn && avoid_by_time &&
                       ord.time_precedes(tn, tm);
        if (n_first) continue;  // order refuted; edge never required
        LabeledEdge e{ur.reader, tn, EdgeLabel::pred_rw(ur.key, ur.pred)};
        if (avoid_by_time && ord.time_precedes(ur.reader, tn)) continue;
        if (avoid_by_time && ord.time_precedes(tn, ur.reader)) {
          // The edge would close a cycle through the timestamp order.
          if (m_first) {
            infeasible = true;
            break;
          }
          // Keep it undetermined: choosing this alternative then forces
          // the install order the other way, which the search enforces.
          alt.undetermined.push_back({e, tm, tn});
          continue;
        }
        if (m_first)
          alt.determined.push_back(e);
        else
          alt.undetermined.push_back({e, tm, tn});
      }

      if (infeasible) continue;
      if (alt.determined.empty() && alt.undetermined.empty()) {
        // This completion imposes nothing; the constraint always holds.
        trivially_satisfied = true;
        break;
      }
      // A retained read edge names its writer, so such alternatives are
      // distinct by construction; only writer-less ones can coincide.
      bool dup = false;
      if (!has_read_edge) {
        for (const auto& prev : pc.alts)
          if (same_alternative(prev, alt)) {
            dup = true;
            break;
          }
      }
      if (!dup) pc.alts.push_back(std::move(alt));
    }

    if (trivially_satisfied) continue;
    if (pc.alts.empty()) {
      sys.verdict = ShortCircuit{
          ShortCircuit::Kind::NoCompletion,
          {},
          ur.reader,
          ur.pred,
          ur.key,
          "every completion of the unmatched read contradicts the "
          "timestamp order: " +
              describe_read(g, ord, ur.reader, ur.pred, ur.key)};
      return sys;
    }
    sys.preds.push_back(std::move(pc));
  }
  sys.stats.pred_after_avoidance = sys.preds.size();
  return sys;
}

namespace {

// Inserts an edge that reduction has proven necessary; a cycle here is a
// final verdict.
bool force_edge(CompactClosure& c, const LabeledEdge& e,
                std::vector<LabeledEdge>& forced,
                std::optional<ShortCircuit>& verdict) {
  auto res = c.insert_edge(e.from, e.to, e.label);
  if (res.status == CompactClosure::InsertStatus::Cycle) {
    verdict = ShortCircuit{ShortCircuit::Kind::Cycle,
                           std::move(res.cycle.edges),
                           kNoTxn,
                           kNoPred,
                           kNoKey,
                           "forced edge closes a dependency cycle"};
    return false;
  }
  if (res.status == CompactClosure::InsertStatus::Ok) forced.push_back(e);
  return true;
}

}  // namespace

ReductionOutcome reduce(ConstraintSystem& sys, CompactClosure& c) {
  ReductionOutcome out;
  std::vector<bool> item_done(sys.items.size(), false);
  std::vector<bool> pred_done(sys.preds.size(), false);

  // Per-constraint bookkeeping for single-alternative forcing.
  std::vector<std::vector<bool>> dead(sys.preds.size());
  for (std::size_t p = 0; p < sys.preds.size(); ++p)
    dead[p].assign(sys.preds[p].alts.size(), false);
  std::vector<std::size_t> forced_upto(sys.preds.size(), 0);
  std::vector<bool> forcing(sys.preds.size(), false);

  bool changed = true;
  while (changed) {
    changed = false;

    for (std::size_t i = 0; i < sys.items.size(); ++i) {
      if (item_done[i]) continue;
      ItemConstraint& ic = sys.items[i];
      auto blocked = [&](const std::vector<LabeledEdge>& side)
          -> const LabeledEdge* {
        for (const auto& e : side)
          if (c.reachable(e.to, e.from)) return &e;
        return nullptr;
      };
      const LabeledEdge* bij = blocked(ic.eij);
      const LabeledEdge* bji = blocked(ic.eji);
      if (bij && bji) {
        auto cycle = c.find_path(bij->to, bij->from);
        cycle.push_back(*bij);
        auto other = c.find_path(bji->to, bji->from);
        other.push_back(*bji);
        std::string detail =
            "both install orders of " + std::to_string(ic.ti) + "/" +
            std::to_string(ic.tj) + " close cycles; second cycle has " +
            std::to_string(other.size()) + " edges";
        out.verdict = ShortCircuit{ShortCircuit::Kind::Cycle,
                                   std::move(cycle),
                                   kNoTxn,
                                   kNoPred,
                                   kNoKey,
                                   std::move(detail)};
        return out;
      }
      if (bij || bji) {
        const auto& force = bij ? ic.eji : ic.eij;
        for (const auto& e : force)
          if (!force_edge(c, e, out.forced, out.verdict)) return out;
        item_done[i] = true;
        changed = true;
        out.changed = true;
      }
    }

    for (std::size_t p = 0; p < sys.preds.size(); ++p) {
      if (pred_done[p]) continue;
      PredicateConstraint& pc = sys.preds[p];
      std::size_t alive = 0;
      std::size_t last_alive = 0;
      for (std::size_t a = 0; a < pc.alts.size(); ++a) {
        if (dead[p][a]) continue;
        PredAlternative& alt = pc.alts[a];

        for (std::size_t u = 0; u < alt.undetermined.size();) {
          UndeterminedEdge& ue = alt.undetermined[u];
          bool m_first = ue.ww_m == kInitTxn || c.reachable(ue.ww_m, ue.ww_n);
          bool n_first =
              ue.ww_m != kInitTxn && c.reachable(ue.ww_n, ue.ww_m);
          if (m_first) {
            alt.determined.push_back(ue.edge);
            alt.undetermined.erase(alt.undetermined.begin() + u);
            changed = true;
            out.changed = true;
          } else if (n_first) {
            alt.undetermined.erase(alt.undetermined.begin() + u);
            changed = true;
            out.changed = true;
          } else {
            ++u;
          }
        }

        bool blocked = false;
        for (const auto& e : alt.determined)
          if (c.reachable(e.to, e.from)) {
            blocked = true;
            break;
          }
        if (blocked) {
          dead[p][a] = true;
          changed = true;
          out.changed = true;
          continue;
        }
        ++alive;
        last_alive = a;
      }

      if (alive == 0) {
        out.verdict = ShortCircuit{
            ShortCircuit::Kind::NoCompletion,
            {},
            pc.reader,
            pc.pred,
            pc.key,
            "every alternative of a filtered-read constraint closes a cycle"};
        return out;
      }
      if (alive == 1) {
        PredAlternative& alt = pc.alts[last_alive];
        if (!forcing[p]) {
          forcing[p] = true;
          forced_upto[p] = 0;
        }
        while (forced_upto[p] < alt.determined.size()) {
          if (!force_edge(c, alt.determined[forced_upto[p]], out.forced,
                          out.verdict))
            return out;
          ++forced_upto[p];
          changed = true;
          out.changed = true;
        }
        if (alt.undetermined.empty()) {
          pred_done[p] = true;
          changed = true;
          out.changed = true;
        }
      }
    }
  }

  // Drop resolved constraints and dead alternatives.
  std::vector<ItemConstraint> items;
  for (std::size_t i = 0; i < sys.items.size(); ++i)
    if (!item_done[i]) items.push_back(std::move(sys.items[i]));
  sys.items = std::move(items);
  std::vector<PredicateConstraint> preds;
  for (std::size_t p = 0; p < sys.preds.size(); ++p) {
    if (pred_done[p]) continue;
    PredicateConstraint pc;
    pc.reader = sys.preds[p].reader;
    pc.pred = sys.preds[p].pred;
    pc.key = sys.preds[p].key;
    for (std::size_t a = 0; a < sys.preds[p].alts.size(); ++a)
      if (!dead[p][a]) pc.alts.push_back(std::move(sys.preds[p].alts[a]));
    preds.push_back(std::move(pc));
  }
  sys.preds = std::move(preds);
  sys.stats.item_after_reduction = sys.items.size();
  sys.stats.pred_after_reduction = sys.preds.size();
  return out;
}

}  // namespace serval
