#include "support.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <variant>

namespace serval::testing {

namespace {

std::uint64_t pick(std::mt19937_64& rng, std::uint64_t bound) {
  return rng() % bound;
}

Predicate random_pred(std::mt19937_64& rng) {
  static const CmpOp ops[] = {CmpOp::Eq, CmpOp::Le, CmpOp::Ge, CmpOp::Ne};
  return {"f", {{"v", ops[pick(rng, 4)], static_cast<std::int64_t>(pick(rng, 4))}}};
}

}  // namespace

ObservedHistory fuzz_history(std::mt19937_64& rng, const FuzzParams& p) {
  ObservedHistory h;
  std::uint32_t n_keys = 1 + static_cast<std::uint32_t>(pick(rng, p.max_keys));
  std::uint32_t n_txns = 2 + static_cast<std::uint32_t>(pick(rng, p.max_txns - 1));

  struct KeyState {
    std::string name;
    std::vector<std::pair<Vid, Attrs>> versions;  // all written or initial
    Vid next_vid = 1;
  };
  std::vector<KeyState> keys(n_keys);
  for (std::uint32_t k = 0; k < n_keys; ++k) {
    keys[k].name = "f.k" + std::to_string(k);
    if (p.with_initial && pick(rng, 10) < 8) {
      Attrs a{{"v", static_cast<std::int64_t>(pick(rng, 4))}};
      keys[k].versions.push_back({0, a});
      h.initial.push_back({keys[k].name, a});
    }
  }
  auto key_full = [&](std::uint32_t k) {
    return keys[k].versions.size() >= p.max_versions_per_key;
  };
  auto any_version = [&](std::uint32_t k) -> std::optional<Vid> {
    if (keys[k].versions.empty()) return std::nullopt;
    return keys[k].versions[pick(rng, keys[k].versions.size())].first;
  };
  auto true_version = [&](std::uint32_t k,
                          const Predicate& pred) -> std::optional<Vid> {
    std::vector<Vid> hits;
    for (const auto& [vid, attrs] : keys[k].versions)
      if (eval_predicate(pred, attrs)) hits.push_back(vid);
    if (hits.empty()) return std::nullopt;
    return hits[pick(rng, hits.size())];
  };

  for (std::uint32_t i = 0; i < n_txns; ++i) {
    Transaction t;
    t.id = i + 1;
    t.session = i;
    t.start = 10 + i;
    t.end = 1000 + i;
    bool aborted = (rng() % 1000) / 1000.0 < p.abort_ratio;
    t.status = aborted ? TxnStatus::Aborted : TxnStatus::Committed;

    std::uint32_t n_ops = 1 + static_cast<std::uint32_t>(pick(rng, p.max_ops_per_txn));
    for (std::uint32_t o = 0; o < n_ops; ++o) {
      double roll = (rng() % 1000) / 1000.0;
      std::uint32_t k = static_cast<std::uint32_t>(pick(rng, n_keys));
      if (roll < p.pred_ratio / 2) {
        Predicate pred = random_pred(rng);
        PredReadOp op{pred, {}};
        for (std::uint32_t kk = 0; kk < n_keys; ++kk) {
          if (pick(rng, 2) == 0) continue;  // leave unmatched
          if (auto vid = true_version(kk, pred))
            op.matched.emplace_back(keys[kk].name, *vid);
        }
        t.ops.push_back(std::move(op));
      } else if (roll < p.pred_ratio) {
        Predicate pred = random_pred(rng);
        PredWriteOp op{pred, {}};
        for (std::uint32_t kk = 0; kk < n_keys; ++kk) {
          if (key_full(kk) || pick(rng, 2) == 0) continue;
          if (auto vid = true_version(kk, pred)) {
            PredWriteMatch m;
            m.key = keys[kk].name;
            m.old_vid = *vid;
            m.new_vid = keys[kk].next_vid++;
            m.attrs = {{"v", static_cast<std::int64_t>(pick(rng, 4))}};
            keys[kk].versions.push_back({m.new_vid, m.attrs});
            op.matched.push_back(std::move(m));
          }
        }
        t.ops.push_back(std::move(op));
      } else if (roll < p.pred_ratio + (1.0 - p.pred_ratio) / 2) {
        if (auto vid = any_version(k))
          t.ops.push_back(ReadOp{keys[k].name, *vid});
      } else if (!key_full(k)) {
        WriteOp w{keys[k].name, keys[k].next_vid++,
                  {{"v", static_cast<std::int64_t>(pick(rng, 4))}}};
        keys[k].versions.push_back({w.vid, w.attrs});
        t.ops.push_back(std::move(w));
      }
    }
    if (t.ops.empty()) {
      // Committed transactions must do something.
      std::uint32_t k = 0;
      while (k < n_keys && key_full(k)) ++k;
      if (k == n_keys) {
        t.ops.push_back(ReadOp{keys[0].name, keys[0].versions.front().first});
      } else {
        WriteOp w{keys[k].name, keys[k].next_vid++, {{"v", 0}}};
        keys[k].versions.push_back({w.vid, w.attrs});
        t.ops.push_back(std::move(w));
      }
    }
    h.transactions.push_back(std::move(t));
  }
  return h;
}

namespace {

struct HistView {
  std::map<TxnId, const Transaction*> txns;
  // (key, vid) -> (writer, installed, attrs)
  std::map<std::pair<std::string, Vid>, std::tuple<std::int64_t, bool, Attrs>>
      versions;

  explicit HistView(const ObservedHistory& h) {
    for (const auto& iv : h.initial)
      versions[{iv.key, 0}] = {-1, true, iv.attrs};
    for (const auto& t : h.transactions) {
      txns[t.id] = &t;
      auto last = installed_writes(t);
      auto add = [&](const std::string& key, Vid vid, const Attrs& a) {
        bool installed = t.committed() && last.at(key) == vid;
        versions[{key, vid}] = {static_cast<std::int64_t>(t.id), installed, a};
      };
      for (const auto& op : t.ops) {
        if (const auto* w = std::get_if<WriteOp>(&op)) add(w->key, w->vid, w->attrs);
        else if (const auto* pw = std::get_if<PredWriteOp>(&op))
          for (const auto& m : pw->matched) add(m.key, m.new_vid, m.attrs);
      }
    }
  }

  bool reads(TxnId id, const std::string& key, std::optional<Vid> vid) const {
    const Transaction* t = txns.at(id);
    for (const auto& op : t->ops) {
      if (const auto* r = std::get_if<ReadOp>(&op)) {
        if (r->key == key && (!vid || r->vid == *vid)) return true;
      } else if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        for (const auto& [k, v] : pr->matched)
          if (k == key && (!vid || v == *vid)) return true;
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        for (const auto& m : pw->matched)
          if (m.key == key && (!vid || m.old_vid == *vid)) return true;
      }
    }
    return false;
  }

  bool installs(TxnId id, const std::string& key) const {
    auto last = installed_writes(*txns.at(id));
    return last.count(key) > 0;
  }

  // Unknown filtered read of `key` under `pred` in transaction `id`.
  bool has_unknown_read(TxnId id, const std::string& pred,
                        const std::string& key) const {
    const Transaction* t = txns.at(id);
    for (const auto& op : t->ops) {
      const Predicate* p = nullptr;
      std::vector<std::string> matched;
      if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        p = &pr->pred;
        for (const auto& [k, v] : pr->matched) matched.push_back(k);
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        p = &pw->pred;
        for (const auto& m : pw->matched) matched.push_back(m.key);
      }
      if (!p || to_string(*p) != pred) continue;
      if (key.rfind(p->table + ".", 0) != 0) continue;
      if (std::find(matched.begin(), matched.end(), key) == matched.end())
        return true;
    }
    return false;
  }
};

}  // namespace

bool replay_cycle(const ObservedHistory& h,
                  const std::vector<WitnessEdgeView>& cycle,
                  std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (cycle.size() < 2) return fail("cycle too short");
  HistView view(h);

  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const auto& e = cycle[i];
    const auto& next = cycle[(i + 1) % cycle.size()];
    if (e.to != next.from) return fail("walk is not closed");
    if (!view.txns.count(e.from) || !view.txns.count(e.to))
      return fail("unknown transaction id");
    if (!view.txns.at(e.from)->committed() || !view.txns.at(e.to)->committed())
      return fail("edge touches an uncommitted transaction");

    if (e.kind == "time") {
      if (view.txns.at(e.from)->end > view.txns.at(e.to)->start)
        return fail("time edge violates the clocks");
    } else if (e.kind == "wr") {
      auto it = view.versions.find({e.key, e.vid});
      if (it == view.versions.end()) return fail("wr edge on unknown version");
      auto [writer, installed, attrs] = it->second;
      if (writer != static_cast<std::int64_t>(e.from) || !installed)
        return fail("wr edge writer mismatch");
      if (!view.reads(e.to, e.key, e.vid)) return fail("wr edge reader mismatch");
    } else if (e.kind == "ww") {
      if (!view.installs(e.from, e.key) || !view.installs(e.to, e.key))
        return fail("ww edge endpoints do not both install the key");
    } else if (e.kind == "rw") {
      if (!view.reads(e.from, e.key, std::nullopt))
        return fail("rw edge source does not read the key");
      if (!view.installs(e.to, e.key))
        return fail("rw edge target does not install the key");
    } else if (e.kind == "pred-wr") {
      if (!view.has_unknown_read(e.to, e.pred, e.key))
        return fail("pred-wr edge target lacks the unknown read");
      if (!view.installs(e.from, e.key))
        return fail("pred-wr edge source does not install the key");
    } else if (e.kind == "pred-rw") {
      if (!view.has_unknown_read(e.from, e.pred, e.key))
        return fail("pred-rw edge source lacks the unknown read");
      if (!view.installs(e.to, e.key))
        return fail("pred-rw edge target does not install the key");
    } else {
      return fail("unknown edge kind " + e.kind);
    }
  }
  return true;
}

}  // namespace serval::testing
