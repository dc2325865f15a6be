#include "serval/history.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace serval {

namespace {

const char* op_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line;

  void skip_ws() {
    while (pos < text.size() && text[pos] == ' ') ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= text.size();
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw HistoryError(msg, line);
  }
  std::string_view token() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of line");
    std::size_t b = pos;
    while (pos < text.size() && text[pos] != ' ') ++pos;
    return text.substr(b, pos - b);
  }
};

std::uint64_t parse_u64(std::string_view s, Cursor& c, const char* what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    c.fail(std::string("malformed ") + what + " '" + std::string(s) + "'");
  return v;
}

std::int64_t parse_i64(std::string_view s, Cursor& c, const char* what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    c.fail(std::string("malformed ") + what + " '" + std::string(s) + "'");
  return v;
}

std::pair<std::string, std::int64_t> parse_attr(std::string_view s, Cursor& c) {
  auto eq = s.find('=');
  if (eq == std::string_view::npos || eq == 0)
    c.fail("malformed attribute '" + std::string(s) + "'");
  return {std::string(s.substr(0, eq)),
          parse_i64(s.substr(eq + 1), c, "attribute value")};
}

Attrs parse_attr_list(Cursor& c) {
  Attrs attrs;
  while (!c.done()) attrs.push_back(parse_attr(c.token(), c));
  return attrs;
}

void check_key(std::string_view key, Cursor& c) {
  auto dot = key.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == key.size())
    c.fail("key '" + std::string(key) + "' is not of the form table.name");
}

Predicate parse_predicate(std::string_view s, Cursor& c) {
  constexpr std::string_view kPrefix = "table:";
  if (s.substr(0, kPrefix.size()) != kPrefix)
    c.fail("predicate must start with 'table:'");
  auto semi = s.find(';');
  if (semi == std::string_view::npos || semi == kPrefix.size())
    c.fail("predicate missing ';' after table name");
  Predicate pred;
  pred.table = std::string(s.substr(kPrefix.size(), semi - kPrefix.size()));
  std::string_view rest = s.substr(semi + 1);
  while (!rest.empty()) {
    auto amp = rest.find('&');
    std::string_view clause =
        amp == std::string_view::npos ? rest : rest.substr(0, amp);
    rest = amp == std::string_view::npos ? std::string_view{}
                                         : rest.substr(amp + 1);
    std::size_t i = 0;
    while (i < clause.size() && clause[i] != '=' && clause[i] != '!' &&
           clause[i] != '<' && clause[i] != '>')
      ++i;
    if (i == 0 || i == clause.size())
      c.fail("malformed predicate clause '" + std::string(clause) + "'");
    PredClause pc;
    pc.attr = std::string(clause.substr(0, i));
    if (clause[i] == '=') {
      pc.op = CmpOp::Eq;
      ++i;
    } else if (clause[i] == '!') {
      if (i + 1 >= clause.size() || clause[i + 1] != '=')
        c.fail("malformed operator in '" + std::string(clause) + "'");
      pc.op = CmpOp::Ne;
      i += 2;
    } else if (clause[i] == '<') {
      if (i + 1 < clause.size() && clause[i + 1] == '=') {
        pc.op = CmpOp::Le;
        i += 2;
      } else {
        pc.op = CmpOp::Lt;
        ++i;
      }
    } else {
      if (i + 1 < clause.size() && clause[i + 1] == '=') {
        pc.op = CmpOp::Ge;
        i += 2;
      } else {
        pc.op = CmpOp::Gt;
        ++i;
      }
    }
    pc.value = parse_i64(clause.substr(i), c, "predicate constant");
    pred.clauses.push_back(std::move(pc));
  }
  if (pred.clauses.empty()) c.fail("predicate has no clauses");
  return pred;
}

// Collects the tokens between '[' and ']'.  Splits on spaces that are not
// inside parentheses, so PW entries keep their attribute lists intact.
std::vector<std::string> bracket_items(Cursor& c) {
  c.skip_ws();
  if (c.pos >= c.text.size() || c.text[c.pos] != '[')
    c.fail("expected '['");
  ++c.pos;
  auto close = std::string_view::npos;
  int depth = 0;
  for (std::size_t i = c.pos; i < c.text.size(); ++i) {
    if (c.text[i] == '(') ++depth;
    else if (c.text[i] == ')') --depth;
    else if (c.text[i] == ']' && depth == 0) {
      close = i;
      break;
    }
  }
  if (close == std::string_view::npos) c.fail("missing ']'");
  std::string_view body = c.text.substr(c.pos, close - c.pos);
  c.pos = close + 1;
  std::vector<std::string> items;
  std::size_t b = 0;
  depth = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i < body.size() && body[i] == '(') ++depth;
    if (i < body.size() && body[i] == ')') --depth;
    if (i == body.size() || (body[i] == ' ' && depth == 0)) {
      if (i > b) items.emplace_back(body.substr(b, i - b));
      b = i + 1;
    }
  }
  return items;
}

struct OpenTxn {
  Transaction txn;
  std::size_t begin_line;
};

void write_attrs(std::ostream& out, const Attrs& attrs) {
  for (const auto& [name, value] : attrs) out << ' ' << name << '=' << value;
}

}  // namespace

std::string to_string(const Predicate& p) {
  std::string s = "table:" + p.table + ";";
  for (std::size_t i = 0; i < p.clauses.size(); ++i) {
    if (i) s += '&';
    s += p.clauses[i].attr;
    s += op_text(p.clauses[i].op);
    s += std::to_string(p.clauses[i].value);
  }
  return s;
}

ObservedHistory parse_history(std::istream& in) {
  ObservedHistory h;
  std::unordered_map<TxnId, OpenTxn> open;
  std::unordered_set<TxnId> closed;
  std::unordered_set<std::string> initial_keys;
  std::string raw;
  std::size_t lineno = 0;

  auto find_open = [&](TxnId id, Cursor& c) -> Transaction& {
    auto it = open.find(id);
    if (it == open.end()) {
      if (closed.count(id))
        c.fail("transaction " + std::to_string(id) + " already finished");
      c.fail("transaction " + std::to_string(id) + " has no begin");
    }
    return it->second.txn;
  };

  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos)
      raw.resize(hash);
    Cursor c{raw, 0, lineno};
    if (c.done()) continue;
    std::string_view tag = c.token();

    if (tag == "I") {
      std::string key(c.token());
      check_key(key, c);
      if (!initial_keys.insert(key).second)
        c.fail("duplicate initial version for key '" + key + "'");
      h.initial.push_back({std::move(key), parse_attr_list(c)});
    } else if (tag == "B") {
      TxnId id = parse_u64(c.token(), c, "txn id");
      if (open.count(id) || closed.count(id))
        c.fail("duplicate transaction id " + std::to_string(id));
      Transaction t;
      t.id = id;
      t.session = static_cast<std::uint32_t>(parse_u64(c.token(), c, "session"));
      t.start = parse_u64(c.token(), c, "start ticks");
      if (!c.done()) c.fail("trailing tokens");
      open.emplace(id, OpenTxn{std::move(t), lineno});
    } else if (tag == "R") {
      Transaction& t = find_open(parse_u64(c.token(), c, "txn id"), c);
      ReadOp op;
      op.key = std::string(c.token());
      check_key(op.key, c);
      op.vid = parse_u64(c.token(), c, "vid");
      if (!c.done()) c.fail("trailing tokens");
      t.ops.emplace_back(std::move(op));
    } else if (tag == "W") {
      Transaction& t = find_open(parse_u64(c.token(), c, "txn id"), c);
      WriteOp op;
      op.key = std::string(c.token());
      check_key(op.key, c);
      op.vid = parse_u64(c.token(), c, "vid");
      if (op.vid == 0) c.fail("vid 0 is reserved for initial versions");
      op.attrs = parse_attr_list(c);
      t.ops.emplace_back(std::move(op));
    } else if (tag == "PR") {
      Transaction& t = find_open(parse_u64(c.token(), c, "txn id"), c);
      PredReadOp op;
      op.pred = parse_predicate(c.token(), c);
      for (const std::string& item : bracket_items(c)) {
        auto colon = item.rfind(':');
        if (colon == std::string::npos)
          c.fail("malformed matched entry '" + item + "'");
        std::string key = item.substr(0, colon);
        check_key(key, c);
        Cursor ic{item, 0, lineno};
        op.matched.emplace_back(
            std::move(key),
            parse_u64(std::string_view(item).substr(colon + 1), ic, "vid"));
      }
      if (!c.done()) c.fail("trailing tokens");
      t.ops.emplace_back(std::move(op));
    } else if (tag == "PW") {
      Transaction& t = find_open(parse_u64(c.token(), c, "txn id"), c);
      PredWriteOp op;
      op.pred = parse_predicate(c.token(), c);
      for (const std::string& item : bracket_items(c)) {
        Cursor ic{item, 0, lineno};
        auto colon = item.find(':');
        auto arrow = item.find("->");
        auto paren = item.find('(');
        if (colon == std::string::npos || arrow == std::string::npos ||
            paren == std::string::npos || item.back() != ')' ||
            !(colon < arrow && arrow < paren))
          ic.fail("malformed predicate-write entry '" + item + "'");
        PredWriteMatch m;
        m.key = item.substr(0, colon);
        check_key(m.key, ic);
        std::string_view sv = item;
        m.old_vid = parse_u64(sv.substr(colon + 1, arrow - colon - 1), ic,
                              "old vid");
        m.new_vid =
            parse_u64(sv.substr(arrow + 2, paren - arrow - 2), ic, "new vid");
        if (m.new_vid == 0) ic.fail("vid 0 is reserved for initial versions");
        Cursor ac{sv.substr(paren + 1, item.size() - paren - 2), 0, lineno};
        m.attrs = parse_attr_list(ac);
        op.matched.push_back(std::move(m));
      }
      if (!c.done()) c.fail("trailing tokens");
      t.ops.emplace_back(std::move(op));
    } else if (tag == "C" || tag == "A") {
      TxnId id = parse_u64(c.token(), c, "txn id");
      Transaction& t = find_open(id, c);
      t.end = parse_u64(c.token(), c, "end ticks");
      t.status = tag == "C" ? TxnStatus::Committed : TxnStatus::Aborted;
      if (!c.done()) c.fail("trailing tokens");
      h.transactions.push_back(std::move(t));
      open.erase(id);
      closed.insert(id);
    } else {
      c.fail("unknown event tag '" + std::string(tag) + "'");
    }
  }

  if (!open.empty()) {
    const OpenTxn& t = open.begin()->second;
    throw HistoryError("transaction " + std::to_string(t.txn.id) +
                           " never commits or aborts",
                       t.begin_line);
  }
  return h;
}

ObservedHistory parse_history_text(const std::string& text) {
  std::istringstream in(text);
  return parse_history(in);
}

ObservedHistory load_history_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HistoryError("cannot open '" + path + "'");
  return parse_history(in);
}

void serialize_history(const ObservedHistory& h, std::ostream& out) {
  std::vector<const InitialVersion*> init;
  init.reserve(h.initial.size());
  for (const auto& iv : h.initial) init.push_back(&iv);
  std::sort(init.begin(), init.end(),
            [](auto* a, auto* b) { return a->key < b->key; });
  for (const auto* iv : init) {
    out << "I " << iv->key;
    write_attrs(out, iv->attrs);
    out << '\n';
  }

  std::vector<const Transaction*> txns;
  txns.reserve(h.transactions.size());
  for (const auto& t : h.transactions) txns.push_back(&t);
  std::sort(txns.begin(), txns.end(), [](auto* a, auto* b) {
    return std::pair(a->start, a->id) < std::pair(b->start, b->id);
  });

  for (const auto* t : txns) {
    out << "B " << t->id << ' ' << t->session << ' ' << t->start << '\n';
    for (const auto& op : t->ops) {
      if (const auto* r = std::get_if<ReadOp>(&op)) {
        out << "R " << t->id << ' ' << r->key << ' ' << r->vid << '\n';
      } else if (const auto* w = std::get_if<WriteOp>(&op)) {
        out << "W " << t->id << ' ' << w->key << ' ' << w->vid;
        write_attrs(out, w->attrs);
        out << '\n';
      } else if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        out << "PR " << t->id << ' ' << to_string(pr->pred) << " [";
        for (std::size_t i = 0; i < pr->matched.size(); ++i) {
          if (i) out << ' ';
          out << pr->matched[i].first << ':' << pr->matched[i].second;
        }
        out << "]\n";
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        out << "PW " << t->id << ' ' << to_string(pw->pred) << " [";
        for (std::size_t i = 0; i < pw->matched.size(); ++i) {
          if (i) out << ' ';
          const auto& m = pw->matched[i];
          out << m.key << ':' << m.old_vid << "->" << m.new_vid << '(';
          for (std::size_t j = 0; j < m.attrs.size(); ++j) {
            if (j) out << ' ';
            out << m.attrs[j].first << '=' << m.attrs[j].second;
          }
          out << ')';
        }
        out << "]\n";
      }
    }
    out << (t->committed() ? "C " : "A ") << t->id << ' ' << t->end << '\n';
  }
}

std::string serialize_history(const ObservedHistory& h) {
  std::ostringstream out;
  serialize_history(h, out);
  return out.str();
}

bool eval_predicate(const Predicate& pred, const Attrs& attrs) {
  for (const auto& clause : pred.clauses) {
    const std::int64_t* found = nullptr;
    for (const auto& [name, value] : attrs) {
      if (name == clause.attr) {
        found = &value;
        break;
      }
    }
    if (!found)
      throw HistoryError("attribute '" + clause.attr +
                         "' missing from version payload");
    bool ok = false;
    switch (clause.op) {
      case CmpOp::Eq: ok = *found == clause.value; break;
      case CmpOp::Ne: ok = *found != clause.value; break;
      case CmpOp::Lt: ok = *found < clause.value; break;
      case CmpOp::Le: ok = *found <= clause.value; break;
      case CmpOp::Gt: ok = *found > clause.value; break;
      case CmpOp::Ge: ok = *found >= clause.value; break;
    }
    if (!ok) return false;
  }
  return true;
}

std::map<std::string, Vid> installed_writes(const Transaction& t) {
  std::map<std::string, Vid> installed;
  for (const auto& op : t.ops) {
    if (const auto* w = std::get_if<WriteOp>(&op)) {
      installed[w->key] = w->vid;
    } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
      for (const auto& m : pw->matched) installed[m.key] = m.new_vid;
    }
  }
  return installed;
}

namespace {

struct VersionInfo {
  TxnId writer;
  bool writer_committed;
  bool installed;  // last write of its writer, or an initial version
  const Attrs* attrs;
};

// All versions of all keys, with writer status; also the key universe.
struct VersionMap {
  std::unordered_map<std::string, std::unordered_map<Vid, VersionInfo>> keys;

  const VersionInfo* find(const std::string& key, Vid vid) const {
    auto kit = keys.find(key);
    if (kit == keys.end()) return nullptr;
    auto vit = kit->second.find(vid);
    return vit == kit->second.end() ? nullptr : &vit->second;
  }
};

constexpr TxnId kInitialWriter = static_cast<TxnId>(-1);

VersionMap build_version_map(const ObservedHistory& h) {
  VersionMap vm;
  for (const auto& iv : h.initial)
    vm.keys[iv.key][0] = {kInitialWriter, true, true, &iv.attrs};
  for (const auto& t : h.transactions) {
    std::map<std::string, Vid> last = installed_writes(t);
    auto add = [&](const std::string& key, Vid vid, const Attrs& attrs) {
      auto& slot = vm.keys[key][vid];
      if (slot.attrs != nullptr)
        throw HistoryError("version " + key + ":" + std::to_string(vid) +
                           " written more than once");
      slot = {t.id, t.committed(), last.at(key) == vid, &attrs};
    };
    for (const auto& op : t.ops) {
      if (const auto* w = std::get_if<WriteOp>(&op)) {
        add(w->key, w->vid, w->attrs);
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        for (const auto& m : pw->matched) add(m.key, m.new_vid, m.attrs);
      }
    }
  }
  return vm;
}

void for_each_read(const Transaction& t,
                   const std::function<void(const std::string&, Vid)>& fn) {
  for (const auto& op : t.ops) {
    if (const auto* r = std::get_if<ReadOp>(&op)) {
      fn(r->key, r->vid);
    } else if (const auto* pr = std::get_if<PredReadOp>(&op)) {
      for (const auto& [key, vid] : pr->matched) fn(key, vid);
    } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
      for (const auto& m : pw->matched) fn(m.key, m.old_vid);
    }
  }
}

}  // namespace

void validate_history(const ObservedHistory& h) {
  std::unordered_set<TxnId> ids;
  for (const auto& t : h.transactions) {
    if (!ids.insert(t.id).second)
      throw HistoryError("duplicate transaction id " + std::to_string(t.id));
    if (t.start >= t.end)
      throw HistoryError("transaction " + std::to_string(t.id) +
                         " has start >= end");
    if (t.committed() && t.ops.empty())
      throw HistoryError("committed transaction " + std::to_string(t.id) +
                         " has no operations");
  }

  VersionMap vm = build_version_map(h);

  // Predicate scope: every key of the predicate's table anywhere in the
  // history.  Matched entries must satisfy the predicate, and predicate
  // attributes must exist in every in-scope payload; the existence check
  // runs once per (table, attribute) rather than once per operation.
  auto table_of = [](const std::string& key) {
    return key.substr(0, key.find('.'));
  };
  std::set<std::pair<std::string, std::string>> referenced;  // (table, attr)
  for (const auto& t : h.transactions) {
    for (const auto& op : t.ops) {
      const Predicate* pred = nullptr;
      if (const auto* pr = std::get_if<PredReadOp>(&op)) pred = &pr->pred;
      if (const auto* pw = std::get_if<PredWriteOp>(&op)) pred = &pw->pred;
      if (!pred) continue;
      for (const auto& clause : pred->clauses)
        referenced.insert({pred->table, clause.attr});
    }
  }
  for (const auto& [key, versions] : vm.keys) {
    std::string table = table_of(key);
    auto lo = referenced.lower_bound({table, ""});
    for (auto it = lo; it != referenced.end() && it->first == table; ++it) {
      for (const auto& [vid, info] : versions) {
        bool found = false;
        for (const auto& [name, value] : *info.attrs)
          if (name == it->second) found = true;
        if (!found)
          throw HistoryError("attribute '" + it->second +
                             "' missing from version " + key + ":" +
                             std::to_string(vid));
      }
    }
  }
  for (const auto& t : h.transactions) {
    for (const auto& op : t.ops) {
      if (const auto* pr = std::get_if<PredReadOp>(&op)) {
        for (const auto& [key, vid] : pr->matched) {
          if (table_of(key) != pr->pred.table)
            throw HistoryError("matched key '" + key +
                               "' is outside the predicate's table");
          const VersionInfo* info = vm.find(key, vid);
          if (!info)
            throw HistoryError("matched version " + key + ":" +
                               std::to_string(vid) + " was never written");
          if (!eval_predicate(pr->pred, *info->attrs))
            throw HistoryError("matched version " + key + ":" +
                               std::to_string(vid) +
                               " does not satisfy the predicate");
        }
      } else if (const auto* pw = std::get_if<PredWriteOp>(&op)) {
        for (const auto& m : pw->matched) {
          if (table_of(m.key) != pw->pred.table)
            throw HistoryError("matched key '" + m.key +
                               "' is outside the predicate's table");
          const VersionInfo* info = vm.find(m.key, m.old_vid);
          if (!info)
            throw HistoryError("matched version " + m.key + ":" +
                               std::to_string(m.old_vid) +
                               " was never written");
          if (!eval_predicate(pw->pred, *info->attrs))
            throw HistoryError("matched version " + m.key + ":" +
                               std::to_string(m.old_vid) +
                               " does not satisfy the predicate");
        }
      }
    }
  }
}

std::vector<ReadAnomaly> detect_read_anomalies(const ObservedHistory& h) {
  VersionMap vm = build_version_map(h);
  std::vector<ReadAnomaly> anomalies;
  for (const auto& t : h.transactions) {
    if (!t.committed()) continue;
    for_each_read(t, [&](const std::string& key, Vid vid) {
      const VersionInfo* info = vm.find(key, vid);
      if (!info)
        throw HistoryError("read of " + key + ":" + std::to_string(vid) +
                           " which was never written and is not initial");
      if (info->writer == t.id || info->writer == kInitialWriter) return;
      if (!info->writer_committed) {
        anomalies.push_back({ReadAnomaly::Kind::AbortedRead, t.id,
                             info->writer, key, vid});
      } else if (!info->installed) {
        anomalies.push_back({ReadAnomaly::Kind::IntermediateRead, t.id,
                             info->writer, key, vid});
      }
    });
  }
  return anomalies;
}

}  // namespace serval
