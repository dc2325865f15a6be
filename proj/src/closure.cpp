#include "serval/closure.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace serval {

const char* to_string(DepKind k) {
  switch (k) {
    case DepKind::WR: return "wr";
    case DepKind::WW: return "ww";
    case DepKind::RW: return "rw";
    case DepKind::Time: return "time";
    case DepKind::PredWR: return "pred-wr";
    case DepKind::PredRW: return "pred-rw";
  }
  return "?";
}

TxnOrder TxnOrder::build(const ObservedHistory& h, bool full_windows) {
  TxnOrder ord;
  ord.full_windows_ = full_windows;
  for (const auto& t : h.transactions)
    if (t.committed()) ord.txns_.push_back(&t);
  std::sort(ord.txns_.begin(), ord.txns_.end(),
            [](const Transaction* a, const Transaction* b) {
              return std::tuple(a->start, a->end, a->id) <
                     std::tuple(b->start, b->end, b->id);
            });
  ord.n_ = ord.txns_.size();
  const auto n = static_cast<TxnIdx>(ord.n_);
  ord.l_.resize(n);
  ord.r_.resize(n);
  ord.m_.assign(n, kNoTxn);
  for (TxnIdx i = 0; i < n; ++i) ord.by_id_[ord.txns_[i]->id] = i;
  if (n == 0) return ord;

  if (full_windows) {
    for (TxnIdx i = 0; i < n; ++i) {
      ord.l_[i] = 0;
      ord.r_[i] = n - 1;
    }
    return ord;
  }

  std::vector<Tick> starts(n), prefix_max_end(n);
  for (TxnIdx i = 0; i < n; ++i) starts[i] = ord.txns_[i]->start;
  prefix_max_end[0] = ord.txns_[0]->end;
  for (TxnIdx i = 1; i < n; ++i)
    prefix_max_end[i] = std::max(prefix_max_end[i - 1], ord.txns_[i]->end);

  for (TxnIdx i = 0; i < n; ++i) {
    // Last overlapping index: the last start strictly before this end.
    Tick end = ord.txns_[i]->end;
    auto it = std::lower_bound(starts.begin(), starts.end(), end);
    ord.r_[i] = static_cast<TxnIdx>(it - starts.begin()) - 1;
    // First overlapping index: the first prefix whose max end exceeds
    // this start.  prefix_max_end is nondecreasing, so binary search.
    Tick s = ord.txns_[i]->start;
    auto jt = std::upper_bound(prefix_max_end.begin(), prefix_max_end.end(), s);
    ord.l_[i] = static_cast<TxnIdx>(jt - prefix_max_end.begin());
    assert(ord.l_[i] <= i && i <= ord.r_[i]);
  }

  // Suffix argmin of end timestamps gives each transaction's
  // cheapest-to-finish time-successor.
  std::vector<TxnIdx> suffix_min_end(n + 1, kNoTxn);
  for (TxnIdx i = n; i-- > 0;) {
    suffix_min_end[i] = suffix_min_end[i + 1];
    if (suffix_min_end[i] == kNoTxn ||
        ord.txns_[i]->end < ord.txns_[suffix_min_end[i]]->end)
      suffix_min_end[i] = i;
  }
  for (TxnIdx i = 0; i < n; ++i)
    if (ord.r_[i] + 1 < n) ord.m_[i] = suffix_min_end[ord.r_[i] + 1];
  return ord;
}

bool CompactClosure::in_window(TxnIdx i, TxnIdx j) const {
  return j >= ord_->first_overlap(i) && j <= ord_->last_overlap(i);
}

std::size_t CompactClosure::cell_index(TxnIdx i, TxnIdx j) const {
  return offset_[i] + j - ord_->first_overlap(i);
}

bool CompactClosure::reachable(TxnIdx i, TxnIdx j) const {
  if (i == j) return true;
  if (j > ord_->last_overlap(i)) return true;   // ends before j starts
  if (j < ord_->first_overlap(i)) return false;  // j ended first; acyclic
  return cell(cell_index(i, j));
}

std::variant<CompactClosure, CyclePath> CompactClosure::build(
    const TxnOrder& ord, const AdjList& graph) {
  CompactClosure c;
  c.ord_ = &ord;
  c.graph_ = &graph;
  const TxnIdx n = ord.size();
  c.offset_.resize(n);
  std::size_t cells = 0;
  for (TxnIdx i = 0; i < n; ++i) {
    c.offset_[i] = cells;
    cells += ord.last_overlap(i) - ord.first_overlap(i) + 1;
  }
  c.cells_ = cells;
  c.bits_.assign((cells + 63) / 64, 0);
  if (n == 0) return c;

  // Depth-first pass: post-order over explicit edges plus time hops.
  // Time-successors past the done-frontier are already finished, so each
  // vertex explores only the hop range (r_i, frontier].
  enum : std::uint8_t { White, Gray, Black };
  std::vector<std::uint8_t> color(n, White);
  std::vector<TxnIdx> post_order;
  post_order.reserve(n);
  TxnIdx frontier = n;  // everything at an index > frontier is Black

  struct Frame {
    TxnIdx v;
    std::size_t edge = 0;   // next explicit edge
    TxnIdx hop = 0;         // next time hop candidate
    bool hopping = false;
  };
  std::vector<Frame> stack;

  auto make_cycle = [&](TxnIdx from, TxnIdx to,
                        const EdgeLabel& label) -> CyclePath {
    // `to` is Gray: the stack from its frame down to `from` is a path.
    CyclePath cyc;
    std::size_t at = 0;
    while (at < stack.size() && stack[at].v != to) ++at;
    for (std::size_t k = at; k + 1 < stack.size(); ++k) {
      TxnIdx a = stack[k].v, b = stack[k + 1].v;
      EdgeLabel lab = EdgeLabel::time();
      for (const auto& [t, l] : graph[a])
        if (t == b) {
          lab = l;
          break;
        }
      cyc.edges.push_back({a, b, lab});
    }
    cyc.edges.push_back({from, to, label});
    return cyc;
  };

  for (TxnIdx root = 0; root < n; ++root) {
    if (color[root] != White) continue;
    stack.push_back({root});
    color[root] = Gray;
    while (!stack.empty()) {
      Frame& f = stack.back();
      TxnIdx v = f.v;
      bool descended = false;
      while (!f.hopping && f.edge < graph[v].size()) {
        auto [w, label] = graph[v][f.edge++];
        if (color[w] == Gray) return make_cycle(v, w, label);
        if (color[w] == White) {
          color[w] = Gray;
          stack.push_back({w});
          descended = true;
          break;
        }
      }
      if (descended) continue;
      if (!f.hopping) {
        f.hopping = true;
        f.hop = ord.last_overlap(v) + 1;
      }
      while (f.hop < std::min<TxnIdx>(frontier + 1, n)) {
        TxnIdx w = f.hop++;
        if (color[w] == Gray) return make_cycle(v, w, EdgeLabel::time());
        if (color[w] == White) {
          color[w] = Gray;
          stack.push_back({w});
          descended = true;
          break;
        }
      }
      if (descended) continue;
      color[v] = Black;
      post_order.push_back(v);
      frontier = std::min(frontier, ord.last_overlap(v));
      stack.pop_back();
    }
  }

  // Descendant sets in post order (children first).  For each vertex the
  // set splits into a tail "every index above d is reachable" plus the
  // sorted remainder s.  Merging a child's pair keeps both forms small.
  std::vector<TxnIdx> d(n);
  std::vector<std::vector<TxnIdx>> s(n);
  std::vector<TxnIdx> merged, tmp;
  for (TxnIdx v : post_order) {
    TxnIdx r = ord.last_overlap(v);
    TxnIdx m = ord.min_time_successor(v);
    TxnIdx reach = m == kNoTxn ? r : ord.last_overlap(m);
    d[v] = r;
    merged.assign(1, v);
    auto merge_child = [&](TxnIdx w) {
      d[v] = std::min(d[v], d[w]);
      tmp.clear();
      std::set_union(merged.begin(), merged.end(), s[w].begin(), s[w].end(),
                     std::back_inserter(tmp));
      merged.swap(tmp);
    };
    for (const auto& [w, label] : graph[v]) {
      (void)label;
      if (w <= reach) merge_child(w);
    }
    for (TxnIdx w = r + 1; w <= reach && w < n; ++w) merge_child(w);

    for (TxnIdx w : merged) {
      if (w == v) continue;
      if (w < ord.first_overlap(v)) {
        // Reaching a transaction that ended before v started would be a
        // cycle; the DFS above must have rejected it already.
        assert(false);
      }
    }
    for (TxnIdx w : merged)
      if (c.in_window(v, w)) c.set_cell(c.cell_index(v, w));
    for (TxnIdx w = std::max<TxnIdx>(d[v] + 1, ord.first_overlap(v)); w <= r;
         ++w)
      c.set_cell(c.cell_index(v, w));

    // Keep only the part of the set not covered by the tail.
    while (!merged.empty() && merged.back() > d[v]) merged.pop_back();
    s[v] = merged;
  }
  return c;
}

CompactClosure::InsertResult CompactClosure::insert_edge(
    TxnIdx i, TxnIdx j, const EdgeLabel& label, int lit) {
  if (i == j) throw std::out_of_range("self edge");
  const TxnIdx n = ord_->size();
  if (i >= n || j >= n) throw std::out_of_range("txn index out of range");
  if (reachable(i, j)) return {InsertStatus::NoOp, {}};
  if (reachable(j, i)) {
    CyclePath cyc;
    cyc.edges = find_path(j, i);
    cyc.edges.push_back({i, j, label});
    return {InsertStatus::Cycle, std::move(cyc)};
  }

  auto key = edge_key(i, j);
  inserted_.emplace(key, InsertedEdge{label, lit});
  trail_.push_back({TrailOp::EdgeAdded, key});

  // Only cells (u, v) with u reaching i and j reaching v can flip, and
  // both components are confined to the overlap ranges below; everything
  // outside is either already implied or dead by acyclicity.
  TxnIdx u_lo = ord_->first_overlap(j);
  TxnIdx u_hi = std::min(ord_->last_overlap(i), ord_->last_overlap(j));
  for (TxnIdx u = u_lo; u <= u_hi; ++u) {
    if (!reachable(u, i)) continue;
    TxnIdx v_lo = std::max({ord_->first_overlap(u), ord_->first_overlap(i),
                            ord_->first_overlap(j)});
    TxnIdx v_hi = std::min(ord_->last_overlap(u), ord_->last_overlap(i));
    for (TxnIdx v = v_lo; v <= v_hi; ++v) {
      if (u == v || !reachable(j, v)) continue;
      std::size_t idx = cell_index(u, v);
      if (cell(idx)) continue;
      set_cell(idx);
      path_[idx] = {i, j};
      trail_.push_back({TrailOp::CellSet, idx});
    }
  }
  return {InsertStatus::Ok, {}};
}

void CompactClosure::rollback(Savepoint sp) {
  if (sp > trail_.size()) throw std::logic_error("unknown savepoint");
  while (trail_.size() > sp) {
    const TrailEvent& ev = trail_.back();
    if (ev.op == TrailOp::CellSet) {
      clear_cell(static_cast<std::size_t>(ev.a));
      path_.erase(ev.a);
    } else {
      inserted_.erase(ev.a);
    }
    trail_.pop_back();
  }
}

int CompactClosure::edge_literal(TxnIdx u, TxnIdx v) const {
  auto it = inserted_.find(edge_key(u, v));
  return it == inserted_.end() ? kNoLit : it->second.lit;
}

std::optional<EdgeLabel> CompactClosure::direct_edge(TxnIdx u, TxnIdx v) const {
  for (const auto& [t, label] : (*graph_)[u])
    if (t == v) return label;
  auto it = inserted_.find(edge_key(u, v));
  if (it != inserted_.end()) return it->second.label;
  return std::nullopt;
}

void CompactClosure::append_path(std::vector<LabeledEdge>& out, TxnIdx i,
                                 TxnIdx j) const {
  if (i == j) return;
  if (in_window(i, j)) {
    auto it = path_.find(cell_index(i, j));
    if (it != path_.end()) {
      auto [p, q] = it->second;
      append_path(out, i, p);
      auto lab = direct_edge(p, q);
      out.push_back({p, q, lab ? *lab : EdgeLabel::time()});
      append_path(out, q, j);
      return;
    }
  }
  if (ord_->time_precedes(i, j)) {
    out.push_back({i, j, EdgeLabel::time()});
    return;
  }
  if (auto lab = direct_edge(i, j)) {
    out.push_back({i, j, *lab});
    return;
  }

  // Reachability that predates any recorded trigger: search the graph,
  // following only steps that stay on some path to j.
  std::vector<char> visited(ord_->size(), 0);
  std::vector<LabeledEdge> walk;
  auto dfs = [&](auto&& self, TxnIdx u) -> bool {
    if (u == j) return true;
    visited[u] = 1;
    if (ord_->time_precedes(u, j)) {
      walk.push_back({u, j, EdgeLabel::time()});
      return true;
    }
    for (const auto& [w, label] : (*graph_)[u]) {
      if (visited[w] || !reachable(w, j)) continue;
      walk.push_back({u, w, label});
      if (self(self, w)) return true;
      walk.pop_back();
    }
    for (const auto& [key, rec] : inserted_) {
      TxnIdx from = static_cast<TxnIdx>(key >> 32);
      TxnIdx w = static_cast<TxnIdx>(key & 0xffffffffu);
      if (from != u || visited[w] || !reachable(w, j)) continue;
      walk.push_back({u, w, rec.label});
      if (self(self, w)) return true;
      walk.pop_back();
    }
    // Time hops: any successor that still reaches j will do.
    TxnIdx hi = std::min<TxnIdx>(ord_->last_overlap(j), ord_->size() - 1);
    for (TxnIdx w = ord_->last_overlap(u) + 1; w <= hi; ++w) {
      if (visited[w] || !reachable(w, j)) continue;
      walk.push_back({u, w, EdgeLabel::time()});
      if (self(self, w)) return true;
      walk.pop_back();
    }
    return false;
  };
  bool found = dfs(dfs, i);
  if (!found) throw std::logic_error("find_path: no path despite reachability");
  out.insert(out.end(), walk.begin(), walk.end());
}

std::vector<LabeledEdge> CompactClosure::find_path(TxnIdx i, TxnIdx j) const {
  std::vector<LabeledEdge> out;
  append_path(out, i, j);
  return out;
}

}  // namespace serval
