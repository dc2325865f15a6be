#include "serval/workload.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace serval::workload {

namespace {

// Bounded sampling off the raw engine; keeps generated files identical
// across platforms, unlike the standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  std::uint64_t next(std::uint64_t bound) { return eng_() % bound; }
  std::int64_t value() { return static_cast<std::int64_t>(eng_() % 100); }
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 eng_;
};

struct Store {
  struct Row {
    Vid vid = 0;
    Attrs attrs;
  };
  std::vector<std::string> keys;     // key names
  std::vector<std::string> tables;   // table of key i
  std::vector<std::vector<std::size_t>> by_table;
  std::vector<Row> rows;
  std::vector<Vid> next_vid;
};

Attrs random_attrs(Rng& rng) {
  return {{"v1", rng.value()}, {"v2", rng.value()}};
}

Predicate random_range_pred(Rng& rng, const std::string& table) {
  // Narrow range filter on one of the two value columns.
  std::string attr = rng.next(2) ? "v1" : "v2";
  std::int64_t lo = static_cast<std::int64_t>(rng.next(96));
  std::int64_t width = static_cast<std::int64_t>(rng.next(4));
  return {table,
          {{attr, CmpOp::Ge, lo}, {attr, CmpOp::Le, lo + width}}};
}

}  // namespace

std::optional<GenParams> preset(const std::string& name,
                                std::uint64_t txn_count, std::uint64_t seed) {
  GenParams p;
  p.txn_count = txn_count;
  p.seed = seed;
  p.session_count = 24;
  p.object_count = std::clamp<std::uint64_t>(txn_count, 100, 10000);
  p.overlap_factor = std::min(1.0, 48.0 / static_cast<double>(txn_count));
  if (name == "blindw-rh") {
    p.read_ratio = 0.8;
    p.write_ratio = 0.2;
  } else if (name == "blindw-wr") {
    p.read_ratio = 0.5;
    p.write_ratio = 0.5;
  } else if (name == "blindw-wh") {
    p.read_ratio = 0.2;
    p.write_ratio = 0.8;
  } else if (name == "blindw-pred") {
    p.read_ratio = p.write_ratio = 0.0;
    p.pred_read_ratio = p.pred_write_ratio = 0.5;
    p.ops_per_txn = 2;
  } else if (name == "ctwitter") {
    p.read_ratio = 0.5;
    p.write_ratio = 0.5;
    p.ops_per_txn = 6;
    p.hot_key_fraction = 0.5;
  } else if (name == "tpcc") {
    p.read_ratio = 0.4;
    p.write_ratio = 0.6;
    p.ops_per_txn = 8;
    p.table_count = 3;
    p.hot_key_fraction = 0.3;
  } else {
    return std::nullopt;
  }
  return p;
}

std::string preset_names() {
  return "blindw-rh, blindw-wr, blindw-wh, blindw-pred, ctwitter, tpcc";
}

ObservedHistory generate_serializable(const GenParams& p) {
  if (p.txn_count == 0) return {};
  double mix = p.read_ratio + p.write_ratio + p.pred_read_ratio +
               p.pred_write_ratio;
  if (p.read_ratio < 0 || p.write_ratio < 0 || p.pred_read_ratio < 0 ||
      p.pred_write_ratio < 0 || std::abs(mix - 1.0) > 1e-9)
    throw std::invalid_argument("operation mix must be nonnegative and sum to 1");
  if (p.object_count == 0 || p.table_count == 0 || p.session_count == 0 ||
      p.ops_per_txn == 0)
    throw std::invalid_argument("counts must be at least 1");

  Rng rng(p.seed);
  ObservedHistory h;

  Store store;
  store.by_table.resize(p.table_count);
  for (std::uint64_t i = 0; i < p.object_count; ++i) {
    std::uint32_t table = static_cast<std::uint32_t>(i % p.table_count);
    std::string tname = "t" + std::to_string(table);
    store.keys.push_back(tname + ".k" + std::to_string(i / p.table_count));
    store.tables.push_back(tname);
    store.by_table[table].push_back(i);
    store.rows.push_back({0, random_attrs(rng)});
    store.next_vid.push_back(1);
    h.initial.push_back({store.keys.back(), store.rows.back().attrs});
  }

  // Serial commit points spaced on an integer clock; client intervals
  // contain their commit point, widened for overlap but capped so that a
  // session never has two transactions open at once.
  const Tick spacing = 1000;
  const std::uint64_t sessions = p.session_count;
  Tick max_widen = static_cast<Tick>(
      p.overlap_factor * static_cast<double>(p.txn_count) * spacing / 2);
  Tick cap = sessions * spacing / 2 - 2;
  max_widen = std::min(max_widen, cap);

  std::size_t hot_keys =
      std::max<std::size_t>(1, store.keys.size() / 20);  // hottest 5%

  auto pick_key = [&]() -> std::size_t {
    if (p.hot_key_fraction > 0 && rng.unit() < p.hot_key_fraction)
      return rng.next(hot_keys);
    return rng.next(store.keys.size());
  };

  for (std::uint64_t k = 0; k < p.txn_count; ++k) {
    Transaction t;
    t.id = k + 1;
    t.session = static_cast<std::uint32_t>(k % sessions);
    Tick commit_at = (k + 1) * spacing;
    Tick before = max_widen ? rng.next(max_widen + 1) : 0;
    Tick after = max_widen ? rng.next(max_widen + 1) : 0;
    t.start = commit_at - 1 - std::min(before, commit_at - 1);
    t.end = commit_at + 1 + after;
    t.status = TxnStatus::Committed;

    for (std::uint32_t o = 0; o < p.ops_per_txn; ++o) {
      double roll = rng.unit();
      if (roll < p.read_ratio) {
        std::size_t key = pick_key();
        t.ops.push_back(ReadOp{store.keys[key], store.rows[key].vid});
      } else if (roll < p.read_ratio + p.write_ratio) {
        std::size_t key = pick_key();
        WriteOp w{store.keys[key], store.next_vid[key]++, random_attrs(rng)};
        store.rows[key] = {w.vid, w.attrs};
        t.ops.push_back(std::move(w));
      } else {
        std::uint32_t table = static_cast<std::uint32_t>(rng.next(p.table_count));
        Predicate pred = random_range_pred(rng, "t" + std::to_string(table));
        bool is_read = roll < p.read_ratio + p.write_ratio + p.pred_read_ratio;
        if (is_read) {
          PredReadOp op{pred, {}};
          for (std::size_t key : store.by_table[table])
            if (eval_predicate(pred, store.rows[key].attrs))
              op.matched.emplace_back(store.keys[key], store.rows[key].vid);
          t.ops.push_back(std::move(op));
        } else {
          PredWriteOp op{pred, {}};
          for (std::size_t key : store.by_table[table]) {
            if (!eval_predicate(pred, store.rows[key].attrs)) continue;
            PredWriteMatch m;
            m.key = store.keys[key];
            m.old_vid = store.rows[key].vid;
            m.new_vid = store.next_vid[key]++;
            m.attrs = random_attrs(rng);
            store.rows[key] = {m.new_vid, m.attrs};
            op.matched.push_back(std::move(m));
          }
          t.ops.push_back(std::move(op));
        }
      }
    }
    h.transactions.push_back(std::move(t));
  }
  return h;
}

std::optional<AnomalyKind> anomaly_kind_from(const std::string& name) {
  if (name == "aborted-read") return AnomalyKind::AbortedRead;
  if (name == "intermediate-read") return AnomalyKind::IntermediateRead;
  if (name == "lost-update") return AnomalyKind::LostUpdate;
  if (name == "write-skew") return AnomalyKind::WriteSkew;
  if (name == "dirty-write-cycle") return AnomalyKind::DirtyWriteCycle;
  if (name == "phantom") return AnomalyKind::Phantom;
  return std::nullopt;
}

const char* to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::AbortedRead: return "aborted-read";
    case AnomalyKind::IntermediateRead: return "intermediate-read";
    case AnomalyKind::LostUpdate: return "lost-update";
    case AnomalyKind::WriteSkew: return "write-skew";
    case AnomalyKind::DirtyWriteCycle: return "dirty-write-cycle";
    case AnomalyKind::Phantom: return "phantom";
  }
  return "?";
}

namespace {

// Gadget scaffolding: overlapping transactions on a fresh table, placed
// after everything in the base history.
struct Gadget {
  ObservedHistory out;
  TxnId next_id;
  Tick base;
  std::uint32_t session;
  std::uint32_t made = 0;

  Transaction& txn() {
    Transaction t;
    t.id = next_id++;
    t.session = session + made;
    t.start = base + 2 * made;
    t.end = base + 40 + 2 * made;
    ++made;
    out.transactions.push_back(std::move(t));
    return out.transactions.back();
  }
};

Gadget start_gadget(const ObservedHistory& h) {
  if (h.transactions.empty())
    throw HistoryError("history too small to host an anomaly");
  Gadget g;
  g.out = h;
  g.next_id = 0;
  g.base = 0;
  g.session = 0;
  for (const auto& t : h.transactions) {
    g.next_id = std::max(g.next_id, t.id + 1);
    g.base = std::max(g.base, t.end + 10);
    g.session = std::max(g.session, t.session + 1);
  }
  return g;
}

ObservedHistory build_gadget(const ObservedHistory& h, AnomalyKind kind,
                             bool control, std::uint64_t seed) {
  (void)seed;
  Gadget g = start_gadget(h);
  auto attrs = [](std::int64_t v) { return Attrs{{"v", v}}; };

  switch (kind) {
    case AnomalyKind::AbortedRead: {
      g.out.initial.push_back({"an.a", attrs(0)});
      Transaction& x = g.txn();
      x.status = TxnStatus::Aborted;
      x.ops.push_back(WriteOp{"an.a", 1, attrs(1)});
      Transaction& y = g.txn();
      y.ops.push_back(ReadOp{"an.a", control ? 0u : 1u});
      break;
    }
    case AnomalyKind::IntermediateRead: {
      Transaction& x = g.txn();
      x.ops.push_back(WriteOp{"an.b", 1, attrs(1)});
      x.ops.push_back(WriteOp{"an.b", 2, attrs(2)});
      Transaction& y = g.txn();
      y.ops.push_back(ReadOp{"an.b", control ? 2u : 1u});
      break;
    }
    case AnomalyKind::LostUpdate: {
      g.out.initial.push_back({"an.c", attrs(0)});
      Transaction& t1 = g.txn();
      t1.ops.push_back(ReadOp{"an.c", 0});
      t1.ops.push_back(WriteOp{"an.c", 1, attrs(1)});
      Transaction& t2 = g.txn();
      t2.ops.push_back(ReadOp{"an.c", control ? 1u : 0u});
      t2.ops.push_back(WriteOp{"an.c", 2, attrs(2)});
      break;
    }
    case AnomalyKind::WriteSkew: {
      g.out.initial.push_back({"an.x", attrs(0)});
      g.out.initial.push_back({"an.y", attrs(0)});
      Transaction& t1 = g.txn();
      t1.ops.push_back(ReadOp{"an.x", 0});
      t1.ops.push_back(WriteOp{"an.y", 1, attrs(1)});
      Transaction& t2 = g.txn();
      t2.ops.push_back(ReadOp{"an.y", control ? 1u : 0u});
      t2.ops.push_back(WriteOp{"an.x", 1, attrs(1)});
      break;
    }
    case AnomalyKind::DirtyWriteCycle: {
      Transaction& t1 = g.txn();
      t1.ops.push_back(WriteOp{"an.p", 1, attrs(1)});
      t1.ops.push_back(WriteOp{"an.q", 1, attrs(1)});
      Transaction& t2 = g.txn();
      t2.ops.push_back(WriteOp{"an.p", 2, attrs(2)});
      t2.ops.push_back(WriteOp{"an.q", 2, attrs(2)});
      Transaction& r1 = g.txn();
      r1.ops.push_back(ReadOp{"an.p", 1});
      r1.ops.push_back(ReadOp{"an.q", control ? 1u : 2u});
      Transaction& r2 = g.txn();
      r2.ops.push_back(ReadOp{"an.p", 2});
      r2.ops.push_back(ReadOp{"an.q", control ? 2u : 1u});
      break;
    }
    case AnomalyKind::Phantom: {
      // Three writers install versions of two rows; a fourth runs a
      // filtered read that matched only one row, leaving the other row's
      // evaluation unwitnessed.
      Transaction& t0 = g.txn();
      t0.ops.push_back(WriteOp{"an.fx", 3, attrs(0)});
      t0.ops.push_back(WriteOp{"an.fy", 3, attrs(0)});
      Transaction& t2 = g.txn();
      t2.ops.push_back(ReadOp{"an.fy", 3});
      t2.ops.push_back(WriteOp{"an.fx", 2, attrs(2)});
      t2.ops.push_back(WriteOp{"an.fy", 2, attrs(2)});
      Transaction& t1 = g.txn();
      t1.ops.push_back(ReadOp{"an.fy", 2});
      t1.ops.push_back(WriteOp{"an.fx", 1, attrs(1)});
      t1.ops.push_back(WriteOp{"an.fy", 1, attrs(1)});
      Transaction& t3 = g.txn();
      Predicate pred{"an", {{"v", CmpOp::Eq, 1}}};
      PredReadOp pr{pred, {{"an.fx", 1}}};
      if (control) pr.matched.emplace_back("an.fy", 1);
      t3.ops.push_back(std::move(pr));
      break;
    }
  }
  return g.out;
}

}  // namespace

ObservedHistory inject_anomaly(const ObservedHistory& h, AnomalyKind kind,
                               std::uint64_t seed) {
  return build_gadget(h, kind, false, seed);
}

ObservedHistory inject_control(const ObservedHistory& h, AnomalyKind kind,
                               std::uint64_t seed) {
  return build_gadget(h, kind, true, seed);
}

}  // namespace serval::workload
