#include "serval/graph.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_set>

namespace serval {

namespace {

std::uint64_t pack(KeyId key, TxnIdx txn) {
  return (static_cast<std::uint64_t>(key) << 32) | txn;
}

}  // namespace

KeyId KeySpace::intern(const std::string& key) {
  auto it = by_name_.find(key);
  if (it != by_name_.end()) return it->second;
  KeyId id = static_cast<KeyId>(names_.size());
  names_.push_back(key);
  tables_.push_back(key.substr(0, key.find('.')));
  by_name_[key] = id;
  by_table_[tables_.back()].push_back(id);
  return id;
}

KeyId KeySpace::find(const std::string& key) const {
  auto it = by_name_.find(key);
  return it == by_name_.end() ? kNoKey : it->second;
}

const std::vector<KeyId>& KeySpace::keys_of_table(
    const std::string& table) const {
  static const std::vector<KeyId> kEmpty;
  auto it = by_table_.find(table);
  return it == by_table_.end() ? kEmpty : it->second;
}

bool KnownGraph::has_edge(TxnIdx u, TxnIdx v) const {
  for (const auto& [t, label] : adj[u])
    if (t == v) return true;
  return false;
}

const std::vector<TxnIdx>& KnownGraph::readers_of(KeyId key,
                                                  TxnIdx writer) const {
  static const std::vector<TxnIdx> kEmpty;
  auto it = readers.find(pack(key, writer));
  return it == readers.end() ? kEmpty : it->second;
}

const std::vector<InstalledVersion>& KnownGraph::writers_of(KeyId key) const {
  static const std::vector<InstalledVersion> kEmpty;
  return key < installed.size() ? installed[key] : kEmpty;
}

bool KnownGraph::theta(PredId pred, KeyId key, TxnIdx writer) const {
  const Attrs* attrs = attrs_by_writer_.at(pack(key, writer));
  return eval_predicate(preds[pred], *attrs);
}

std::vector<char> KnownGraph::theta_all(PredId pred, KeyId key) const {
  std::vector<char> out;
  theta_into(pred, key, out);
  return out;
}

void KnownGraph::theta_into(PredId pred, KeyId key,
                            std::vector<char>& out) const {
  const auto& cols = columns_[key];
  const std::size_t n = installed[key].size();
  out.assign(n, 1);
  if (n == 0) return;
  for (const PredClause& clause : preds[pred].clauses) {
    const std::vector<ColumnCell>* col = nullptr;
    for (const auto& [name, values] : cols)
      if (name == clause.attr) {
        col = &values;
        break;
      }
    if (!col) throw HistoryError("attribute '" + clause.attr +
                                 "' missing from version payload");
    for (std::size_t i = 0; i < n; ++i) {
      if (!out[i]) continue;
      if (!(*col)[i].present)
        throw HistoryError("attribute '" + clause.attr +
                           "' missing from version payload");
      std::int64_t lhs = (*col)[i].value;
      bool ok = false;
      switch (clause.op) {
        case CmpOp::Eq: ok = lhs == clause.value; break;
        case CmpOp::Ne: ok = lhs != clause.value; break;
        case CmpOp::Lt: ok = lhs < clause.value; break;
        case CmpOp::Le: ok = lhs <= clause.value; break;
        case CmpOp::Gt: ok = lhs > clause.value; break;
        case CmpOp::Ge: ok = lhs >= clause.value; break;
      }
      if (!ok) out[i] = 0;
    }
  }
}

void KnownGraph::dump_dot(std::ostream& out) const {
  out << "digraph known {\n";
  for (TxnIdx i = 0; i < ord->size(); ++i)
    out << "  t" << ord->txn(i).id << ";\n";
  for (TxnIdx u = 0; u < ord->size(); ++u) {
    for (const auto& [v, label] : adj[u]) {
      out << "  t" << ord->txn(u).id << " -> t" << ord->txn(v).id
          << " [label=\"" << to_string(label.kind);
      if (label.key != kNoKey) out << ' ' << keys.name(label.key);
      out << "\"];\n";
    }
  }
  out << "}\n";
}

KnownGraph build_known_graph(const ObservedHistory& h, const TxnOrder& ord,
                             bool derive_time_deps) {
  KnownGraph g;
  g.ord = &ord;
  const TxnIdx n = ord.size();
  g.adj.resize(n);

  std::unordered_map<std::string, PredId> pred_ids;
  auto intern_pred = [&](const Predicate& p) {
    std::string text = to_string(p);
    auto it = pred_ids.find(text);
    if (it != pred_ids.end()) return it->second;
    PredId id = static_cast<PredId>(g.preds.size());
    g.preds.push_back(p);
    pred_ids[text] = id;
    return id;
  };

  // Interning pass: every key that appears anywhere (written, initial, or
  // read) is part of the key universe and of its table's predicate scope.
  for (const auto& iv : h.initial) g.keys.intern(iv.key);
  for (const auto& t : h.transactions) {
    for (const auto& op : t.ops) {
      if (const auto* r = std::get_if<ReadOp>(&op)) {
        g.keys.intern(r->key);
      } else if (const auto* w = std::get_if<WriteOp>(&op)) {
        g.keys.intern(w->key);
      } else if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        for (const auto& [key, vid] : pr->matched) g.keys.intern(key);
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        for (const auto& m : pw->matched) g.keys.intern(m.key);
      }
    }
  }

  g.installed.resize(g.keys.size());
  for (const auto& iv : h.initial) {
    KeyId k = g.keys.find(iv.key);
    g.installed[k].push_back({kInitTxn, 0, &iv.attrs});
    g.attrs_by_writer_[pack(k, kInitTxn)] = &iv.attrs;
  }

  // Map every version to its writer so reads resolve to edges, and record
  // installed versions of committed transactions.
  std::vector<std::unordered_map<Vid, TxnIdx>> writer_of_version(g.keys.size());
  for (TxnIdx i = 0; i < n; ++i) {
    const Transaction& t = ord.txn(i);
    std::map<std::string, Vid> last = installed_writes(t);
    auto record_write = [&](const std::string& key, Vid vid,
                            const Attrs& attrs) {
      KeyId k = g.keys.find(key);
      writer_of_version[k][vid] = i;
      if (last.at(key) == vid) {
        g.installed[k].push_back({i, vid, &attrs});
        g.attrs_by_writer_[pack(k, i)] = &attrs;
      }
    };
    for (const auto& op : t.ops) {
      if (const auto* w = std::get_if<WriteOp>(&op)) {
        record_write(w->key, w->vid, w->attrs);
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        for (const auto& m : pw->matched) record_write(m.key, m.new_vid, m.attrs);
      }
    }
  }

  std::unordered_set<std::uint64_t> edge_set;  // dedup (u,v) pairs
  auto add_edge = [&](TxnIdx u, TxnIdx v, const EdgeLabel& label) {
    if (u == v) return;
    std::uint64_t ek = (static_cast<std::uint64_t>(u) << 32) | v;
    if (!edge_set.insert(ek).second) return;
    g.adj[u].emplace_back(v, label);
  };

  // Read dependencies, reader index, and unknown filtered reads.
  for (TxnIdx i = 0; i < n; ++i) {
    const Transaction& t = ord.txn(i);
    auto note_read = [&](const std::string& key, Vid vid,
                         const EdgeLabel* wr_label) {
      KeyId k = g.keys.find(key);
      TxnIdx w = vid == 0 ? kInitTxn : writer_of_version[k].at(vid);
      if (w == i) return;  // own write
      auto& rs = g.readers[pack(k, w)];
      if (std::find(rs.begin(), rs.end(), i) == rs.end()) rs.push_back(i);
      if (w != kInitTxn && wr_label) add_edge(w, i, *wr_label);
    };
    auto unknown_reads_of = [&](const Predicate& pred, PredId pid,
                                const std::vector<std::string>& matched_keys) {
      std::unordered_set<KeyId> matched;
      for (const std::string& name : matched_keys) {
        KeyId k = g.keys.find(name);
        if (k != kNoKey) matched.insert(k);
      }
      for (KeyId k : g.keys.keys_of_table(pred.table))
        if (!matched.count(k)) g.unknown_reads.push_back({i, pid, k});
    };
    for (const auto& op : t.ops) {
      if (const auto* r = std::get_if<ReadOp>(&op)) {
        EdgeLabel lab = EdgeLabel::wr(g.keys.find(r->key), r->vid);
        note_read(r->key, r->vid, &lab);
      } else if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        PredId pid = intern_pred(pr->pred);
        std::vector<std::string> matched_keys;
        for (const auto& [key, vid] : pr->matched) {
          matched_keys.push_back(key);
          EdgeLabel lab = EdgeLabel::wr(g.keys.find(key), vid);
          note_read(key, vid, &lab);
        }
        unknown_reads_of(pr->pred, pid, matched_keys);
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        PredId pid = intern_pred(pw->pred);
        std::vector<std::string> matched_keys;
        for (const auto& m : pw->matched) {
          matched_keys.push_back(m.key);
          EdgeLabel lab = EdgeLabel::wr(g.keys.find(m.key), m.old_vid);
          note_read(m.key, m.old_vid, &lab);
        }
        unknown_reads_of(pw->pred, pid, matched_keys);
      }
    }
  }

  // Attribute columns per key, aligned with the installed list.
  g.columns_.resize(g.keys.size());
  for (KeyId k = 0; k < static_cast<KeyId>(g.installed.size()); ++k) {
    auto& cols = g.columns_[k];
    const auto& versions = g.installed[k];
    for (std::size_t v = 0; v < versions.size(); ++v) {
      for (const auto& [name, value] : *versions[v].attrs) {
        auto it = std::find_if(cols.begin(), cols.end(),
                               [&](const auto& c) { return c.first == name; });
        if (it == cols.end()) {
          cols.push_back(
              {name, std::vector<KnownGraph::ColumnCell>(versions.size())});
          it = cols.end() - 1;
        }
        it->second[v] = {value, true};
      }
    }
  }

  // Anti-dependencies through a read's writer: the reader must precede
  // every writer of the same key that provably installs later.  The vid-0
  // writer precedes all others by definition; between real transactions
  // the proof is the end-before-start timestamp order.  Edges already
  // implied by timestamps are not materialized.
  for (KeyId k = 0; k < static_cast<KeyId>(g.installed.size()); ++k) {
    const auto& writers = g.installed[k];
    for (const auto& w : writers) {
      auto rit = g.readers.find(pack(k, w.writer));
      if (rit == g.readers.end()) continue;
      for (const auto& later : writers) {
        if (later.writer == w.writer) continue;
        if (later.writer == kInitTxn) continue;
        bool ordered =
            w.writer == kInitTxn ||
            (derive_time_deps && ord.time_precedes(w.writer, later.writer));
        if (!ordered) continue;
        for (TxnIdx reader : rit->second) {
          if (reader == later.writer) continue;
          if (ord.time_precedes(reader, later.writer)) continue;  // implied
          add_edge(reader, later.writer, EdgeLabel::rw(k));
        }
      }
    }
  }

  return g;
}

}  // namespace serval
