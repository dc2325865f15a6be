#include "serval/oracle.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace serval::oracle {

namespace {

constexpr std::int64_t kInit = -1;

struct KeyVersions {
  std::string key;
  // Installed versions, initially sorted by (writer, vid); the initial
  // version (writer -1) stays pinned at the front during enumeration.
  std::vector<std::pair<std::int64_t, Vid>> versions;
  std::unordered_map<Vid, const Attrs*> attrs;
  bool has_initial = false;
};

struct ThetaRead {
  TxnId reader;
  Predicate pred;
  std::string key;
  std::optional<Vid> matched;  // nullopt for unknown reads
};

struct Extracted {
  std::vector<TxnId> committed;
  std::vector<KeyVersions> keys;
  std::unordered_map<std::string, std::size_t> key_index;
  // Committed item reads, including matched filtered reads.
  std::vector<std::tuple<TxnId, std::string, Vid>> reads;
  std::vector<ThetaRead> theta_reads;
};

Extracted extract(const ObservedHistory& h) {
  Extracted ex;
  auto key_slot = [&](const std::string& key) -> KeyVersions& {
    auto it = ex.key_index.find(key);
    if (it == ex.key_index.end()) {
      it = ex.key_index.emplace(key, ex.keys.size()).first;
      ex.keys.push_back({key, {}, {}, false});
    }
    return ex.keys[it->second];
  };

  for (const auto& iv : h.initial) {
    KeyVersions& kv = key_slot(iv.key);
    kv.versions.insert(kv.versions.begin(), {kInit, 0});
    kv.attrs[0] = &iv.attrs;
    kv.has_initial = true;
  }
  // The key universe covers anything written by any transaction.
  for (const auto& t : h.transactions) {
    for (const auto& op : t.ops) {
      if (const auto* w = std::get_if<WriteOp>(&op)) key_slot(w->key);
      else if (const auto* pw = std::get_if<PredWriteOp>(&op))
        for (const auto& m : pw->matched) key_slot(m.key);
    }
  }

  for (const auto& t : h.transactions) {
    if (!t.committed()) continue;
    ex.committed.push_back(t.id);
    std::map<std::string, Vid> last = installed_writes(t);
    for (const auto& [key, vid] : last) {
      KeyVersions& kv = key_slot(key);
      kv.versions.push_back({static_cast<std::int64_t>(t.id), vid});
    }
    for (const auto& op : t.ops) {
      if (const auto* w = std::get_if<WriteOp>(&op)) {
        if (last.at(w->key) == w->vid) key_slot(w->key).attrs[w->vid] = &w->attrs;
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        for (const auto& m : pw->matched)
          if (last.at(m.key) == m.new_vid)
            key_slot(m.key).attrs[m.new_vid] = &m.attrs;
      }
    }
  }

  auto table_of = [](const std::string& key) {
    return key.substr(0, key.find('.'));
  };
  for (const auto& t : h.transactions) {
    if (!t.committed()) continue;
    // Reads of the transaction's own writes carry no dependencies; for a
    // filtered read of an own version the induced edges are already
    // implied by the install chain.
    std::set<std::pair<std::string, Vid>> own;
    for (const auto& op : t.ops) {
      if (const auto* w = std::get_if<WriteOp>(&op)) own.insert({w->key, w->vid});
      else if (const auto* pw = std::get_if<PredWriteOp>(&op))
        for (const auto& m : pw->matched) own.insert({m.key, m.new_vid});
    }
    auto handle_matched = [&](const Predicate& pred, const std::string& key,
                              Vid vid) {
      if (own.count({key, vid})) return;
      ex.reads.emplace_back(t.id, key, vid);
      ex.theta_reads.push_back({t.id, pred, key, vid});
    };
    auto handle_unmatched = [&](const Predicate& pred,
                                const std::vector<std::string>& matched_keys) {
      for (const auto& kv : ex.keys) {
        if (table_of(kv.key) != pred.table) continue;
        if (std::find(matched_keys.begin(), matched_keys.end(), kv.key) !=
            matched_keys.end())
          continue;
        ex.theta_reads.push_back({t.id, pred, kv.key, std::nullopt});
      }
    };
    for (const auto& op : t.ops) {
      if (const auto* r = std::get_if<ReadOp>(&op)) {
        if (!own.count({r->key, r->vid}))
          ex.reads.emplace_back(t.id, r->key, r->vid);
      } else if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        std::vector<std::string> mk;
        for (const auto& [key, vid] : pr->matched) {
          mk.push_back(key);
          handle_matched(pr->pred, key, vid);
        }
        handle_unmatched(pr->pred, mk);
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        std::vector<std::string> mk;
        for (const auto& m : pw->matched) {
          mk.push_back(m.key);
          handle_matched(pw->pred, m.key, m.old_vid);
        }
        handle_unmatched(pw->pred, mk);
      }
    }
  }

  // Deterministic starting point for the permutation sweep.
  for (auto& kv : ex.keys) {
    auto begin = kv.versions.begin() + (kv.has_initial ? 1 : 0);
    std::sort(begin, kv.versions.end());
  }
  return ex;
}

std::uint64_t factorial_capped(std::uint64_t k, std::uint64_t cap) {
  std::uint64_t f = 1;
  for (std::uint64_t i = 2; i <= k; ++i) {
    if (f > cap / i) return cap + 1;
    f *= i;
  }
  return f;
}

// False-version choices for one unknown read, in version-list order.
std::vector<Vid> false_choices(const Extracted& ex, const ThetaRead& tr) {
  std::vector<Vid> out;
  const KeyVersions& kv = ex.keys[ex.key_index.at(tr.key)];
  for (const auto& [writer, vid] : kv.versions)
    if (!eval_predicate(tr.pred, *kv.attrs.at(vid))) out.push_back(vid);
  return out;
}

}  // namespace

bool Dsg::has_cycle() const {
  std::unordered_map<std::int64_t, std::uint32_t> index;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    index[vertices[i]] = static_cast<std::uint32_t>(i);
  std::vector<std::vector<std::uint32_t>> adj(vertices.size());
  for (const auto& e : edges) adj[index.at(e.from)].push_back(index.at(e.to));

  enum : std::uint8_t { White, Gray, Black };
  std::vector<std::uint8_t> color(vertices.size(), White);
  std::vector<std::pair<std::uint32_t, std::size_t>> stack;
  for (std::uint32_t root = 0; root < vertices.size(); ++root) {
    if (color[root] != White) continue;
    color[root] = Gray;
    stack.push_back({root, 0});
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < adj[v].size()) {
        std::uint32_t w = adj[v][next++];
        if (color[w] == Gray) return true;
        if (color[w] == White) {
          color[w] = Gray;
          stack.push_back({w, 0});
        }
      } else {
        color[v] = Black;
        stack.pop_back();
      }
    }
  }
  return false;
}

Dsg build_dsg(const ObservedHistory& h, const CompleteHistory& ch) {
  Extracted ex = extract(h);
  Dsg dsg;
  dsg.vertices.push_back(kInit);
  for (TxnId id : ex.committed)
    dsg.vertices.push_back(static_cast<std::int64_t>(id));

  auto add = [&](std::int64_t from, std::int64_t to) {
    if (from != to) dsg.edges.push_back({from, to});
  };

  // Per-key positions under the chosen version order.
  struct KeyOrder {
    std::vector<std::pair<std::int64_t, Vid>> order;
    std::unordered_map<Vid, std::size_t> pos;
  };
  std::unordered_map<std::string, KeyOrder> orders;
  for (const auto& [key, order] : ch.orders) {
    KeyOrder ko;
    ko.order = order;
    for (std::size_t p = 0; p < order.size(); ++p) ko.pos[order[p].second] = p;
    orders[key] = std::move(ko);
  }

  // Item write dependencies: consecutive installers.
  for (const auto& [key, ko] : orders)
    for (std::size_t p = 0; p + 1 < ko.order.size(); ++p)
      add(ko.order[p].first, ko.order[p + 1].first);

  // Item read and anti dependencies.
  for (const auto& [reader, key, vid] : ex.reads) {
    const KeyOrder& ko = orders.at(key);
    auto it = ko.pos.find(vid);
    if (it == ko.pos.end())
      throw std::logic_error("read of non-installed version in oracle");
    std::size_t p = it->second;
    add(ko.order[p].first, static_cast<std::int64_t>(reader));
    if (p + 1 < ko.order.size())
      add(static_cast<std::int64_t>(reader), ko.order[p + 1].first);
  }

  // Filtered-read dependencies, boundary conditions included.  The read
  // depends on the installer that established the filter value it saw,
  // and anti-depends on the first installer that flips it afterwards.
  std::size_t completion_at = 0;
  for (const ThetaRead& tr : ex.theta_reads) {
    const KeyVersions& kv = ex.keys[ex.key_index.at(tr.key)];
    const KeyOrder& ko = orders.at(tr.key);
    Vid vid;
    if (tr.matched) {
      vid = *tr.matched;
    } else {
      vid = std::get<3>(ch.completions.at(completion_at));
      ++completion_at;
    }
    std::size_t j = ko.pos.at(vid);
    auto theta_at = [&](std::size_t p) {
      return eval_predicate(tr.pred, *kv.attrs.at(ko.order[p].second));
    };
    bool vj = theta_at(j);
    for (std::size_t i = j + 1; i-- > 0;) {
      if (theta_at(i) == vj && (i == 0 || theta_at(i) != theta_at(i - 1))) {
        add(ko.order[i].first, static_cast<std::int64_t>(tr.reader));
        break;
      }
    }
    for (std::size_t p = j + 1; p < ko.order.size(); ++p) {
      if (theta_at(p - 1) == vj && theta_at(p) != theta_at(p - 1)) {
        add(static_cast<std::int64_t>(tr.reader), ko.order[p].first);
        break;
      }
    }
  }

  return dsg;
}

std::optional<std::uint64_t> count_complete_histories(const ObservedHistory& h,
                                                      std::uint64_t cap) {
  Extracted ex = extract(h);
  std::uint64_t total = 1;
  for (const auto& kv : ex.keys) {
    std::uint64_t free_versions =
        kv.versions.size() - (kv.has_initial ? 1 : 0);
    std::uint64_t perms = factorial_capped(free_versions, cap);
    if (perms > cap || total > cap / std::max<std::uint64_t>(perms, 1))
      return std::nullopt;
    total *= perms;
  }
  for (const ThetaRead& tr : ex.theta_reads) {
    if (tr.matched) continue;
    std::uint64_t choices = false_choices(ex, tr).size();
    if (choices == 0) return 0;
    if (total > cap / choices) return std::nullopt;
    total *= choices;
  }
  return total;
}

void enumerate_complete_histories(
    const ObservedHistory& h,
    const std::function<bool(const CompleteHistory&)>& fn, std::uint64_t cap) {
  auto count = count_complete_histories(h, cap);
  if (!count)
    throw EnumerationCap("complete-history count exceeds cap " +
                         std::to_string(cap));
  Extracted ex = extract(h);

  std::vector<const ThetaRead*> unknown;
  std::vector<std::vector<Vid>> choices;
  for (const ThetaRead& tr : ex.theta_reads) {
    if (tr.matched) continue;
    unknown.push_back(&tr);
    choices.push_back(false_choices(ex, tr));
    if (choices.back().empty()) return;  // no completion exists
  }

  // Odometer over per-key permutations and per-read choices.
  std::vector<std::vector<std::pair<std::int64_t, Vid>>> perm(ex.keys.size());
  for (std::size_t k = 0; k < ex.keys.size(); ++k)
    perm[k] = ex.keys[k].versions;
  std::vector<std::size_t> pick(unknown.size(), 0);

  auto emit = [&]() -> bool {
    CompleteHistory ch;
    for (std::size_t k = 0; k < ex.keys.size(); ++k)
      ch.orders[ex.keys[k].key] = perm[k];
    for (std::size_t u = 0; u < unknown.size(); ++u)
      ch.completions.emplace_back(unknown[u]->reader, unknown[u]->pred,
                                  unknown[u]->key, choices[u][pick[u]]);
    return fn(ch);
  };

  // Recursive sweep over key permutations, innermost over completions.
  auto sweep = [&](auto&& self, std::size_t k) -> bool {
    if (k == ex.keys.size()) {
      while (true) {
        if (!emit()) return false;
        std::size_t u = 0;
        for (; u < pick.size(); ++u) {
          if (++pick[u] < choices[u].size()) break;
          pick[u] = 0;
        }
        if (u == pick.size()) return true;
      }
    }
    auto& versions = perm[k];
    auto begin = versions.begin() + (ex.keys[k].has_initial ? 1 : 0);
    std::sort(begin, versions.end());
    do {
      if (!self(self, k + 1)) return false;
    } while (std::next_permutation(begin, versions.end()));
    return true;
  };
  sweep(sweep, 0);
}

OracleVerdict is_serializable_bruteforce(const ObservedHistory& h,
                                         std::uint64_t cap) {
  if (!detect_read_anomalies(h).empty()) return OracleVerdict::NotSerializable;
  bool found = false;
  enumerate_complete_histories(
      h,
      [&](const CompleteHistory& ch) {
        if (!build_dsg(h, ch).has_cycle()) {
          found = true;
          return false;
        }
        return true;
      },
      cap);
  return found ? OracleVerdict::Serializable : OracleVerdict::NotSerializable;
}

std::vector<std::vector<bool>> warshall_closure(
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
    std::uint32_t n) {
  if (n > 2000) throw std::invalid_argument("warshall_closure: n > 2000");
  const std::size_t words = (n + 63) / 64;
  std::vector<std::vector<std::uint64_t>> row(n,
                                              std::vector<std::uint64_t>(words));
  for (std::uint32_t i = 0; i < n; ++i) row[i][i >> 6] |= 1ull << (i & 63);
  for (auto [u, v] : edges) row[u][v >> 6] |= 1ull << (v & 63);
  for (std::uint32_t k = 0; k < n; ++k)
    for (std::uint32_t i = 0; i < n; ++i)
      if (row[i][k >> 6] >> (k & 63) & 1)
        for (std::size_t w = 0; w < words; ++w) row[i][w] |= row[k][w];
  std::vector<std::vector<bool>> out(n, std::vector<bool>(n));
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      out[i][j] = row[i][j >> 6] >> (j & 63) & 1;
  return out;
}

}  // namespace serval::oracle
