#include <doctest.h>

#include <random>
#include <sstream>

#include "serval/history.hpp"
#include "serval/workload.hpp"
#include "support.hpp"

using namespace serval;

TEST_CASE("empty input parses to an empty history") {
  ObservedHistory h = parse_history_text("");
  CHECK(h.transactions.empty());
  CHECK(h.initial.empty());
  h = parse_history_text("# nothing but comments\n\n  \n");
  CHECK(h.transactions.empty());
}

TEST_CASE("quartet fixture parses with the matched filtered read") {
  ObservedHistory h = testing::load_fixture("pred_cycle4.hist");
  REQUIRE(h.transactions.size() == 4);
  for (const auto& t : h.transactions) CHECK(t.committed());
  const Transaction* t3 = nullptr;
  for (const auto& t : h.transactions)
    if (t.id == 3) t3 = &t;
  REQUIRE(t3 != nullptr);
  REQUIRE(t3->ops.size() == 1);
  const auto* pr = std::get_if<PredReadOp>(&t3->ops[0]);
  REQUIRE(pr != nullptr);
  CHECK(pr->pred.table == "t");
  REQUIRE(pr->pred.clauses.size() == 1);
  CHECK(pr->pred.clauses[0].attr == "v");
  CHECK(pr->pred.clauses[0].op == CmpOp::Eq);
  CHECK(pr->pred.clauses[0].value == 1);
  REQUIRE(pr->matched.size() == 1);
  CHECK(pr->matched[0].first == "t.x");
  CHECK(pr->matched[0].second == 1);
}

TEST_CASE("parse errors carry line numbers") {
  CHECK_THROWS_AS(parse_history_text("B 1 0 10\nB 1 0 20\n"), HistoryError);
  CHECK_THROWS_AS(parse_history_text("R 1 t.x 1\n"), HistoryError);  // no begin
  CHECK_THROWS_AS(parse_history_text("B 1 0 10\nW 1 t.x 0 v=1\nC 1 20\n"),
                  HistoryError);  // vid 0 reserved
  CHECK_THROWS_AS(parse_history_text("B 1 0 10\n"), HistoryError);  // dangling
  CHECK_THROWS_AS(parse_history_text("Z 1\n"), HistoryError);
  CHECK_THROWS_AS(parse_history_text("B 1 0 10\nR 1 nodot 1\nC 1 20\n"),
                  HistoryError);
  try {
    parse_history_text("B 1 0 10\nW 1 t.x 0 v=1\nC 1 20\n");
  } catch (const HistoryError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("serialize round-trips generated files byte for byte") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    workload::GenParams p;
    p.txn_count = 20;
    p.object_count = 10;
    p.pred_read_ratio = 0.2;
    p.pred_write_ratio = 0.2;
    p.read_ratio = 0.3;
    p.write_ratio = 0.3;
    p.seed = seed;
    std::string canonical = serialize_history(workload::generate_serializable(p));
    CHECK(serialize_history(parse_history_text(canonical)) == canonical);
  }
}

TEST_CASE("eval_predicate evaluates conjunctions") {
  Predicate eq{"t", {{"v", CmpOp::Eq, 1}}};
  CHECK(eval_predicate(eq, {{"v", 1}}));
  CHECK_FALSE(eval_predicate(eq, {{"v", 0}}));
  Predicate range{"t", {{"v", CmpOp::Ge, 2}, {"v", CmpOp::Le, 5}}};
  CHECK(eval_predicate(range, {{"v", 3}}));
  CHECK_FALSE(eval_predicate(range, {{"v", 6}}));
  CHECK_THROWS_AS(eval_predicate(eq, {{"w", 1}}), HistoryError);
}

TEST_CASE("eval_predicate agrees with a naive clause loop") {
  std::mt19937_64 rng(7);
  static const CmpOp ops[] = {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt,
                              CmpOp::Le, CmpOp::Gt, CmpOp::Ge};
  for (int i = 0; i < 1000; ++i) {
    Predicate p{"t", {}};
    std::size_t n = 1 + rng() % 3;
    for (std::size_t c = 0; c < n; ++c)
      p.clauses.push_back({"v" + std::to_string(rng() % 2), ops[rng() % 6],
                           static_cast<std::int64_t>(rng() % 10)});
    Attrs attrs{{"v0", static_cast<std::int64_t>(rng() % 10)},
                {"v1", static_cast<std::int64_t>(rng() % 10)}};
    bool naive = true;
    for (const auto& cl : p.clauses) {
      std::int64_t lhs = cl.attr == "v0" ? attrs[0].second : attrs[1].second;
      bool ok = false;
      switch (cl.op) {
        case CmpOp::Eq: ok = lhs == cl.value; break;
        case CmpOp::Ne: ok = lhs != cl.value; break;
        case CmpOp::Lt: ok = lhs < cl.value; break;
        case CmpOp::Le: ok = lhs <= cl.value; break;
        case CmpOp::Gt: ok = lhs > cl.value; break;
        case CmpOp::Ge: ok = lhs >= cl.value; break;
      }
      naive = naive && ok;
    }
    CHECK(eval_predicate(p, attrs) == naive);
  }
}

TEST_CASE("installed_writes keeps the last write per key") {
  Transaction t;
  t.id = 1;
  t.ops.push_back(WriteOp{"t.x", 5, {{"v", 1}}});
  t.ops.push_back(WriteOp{"t.x", 7, {{"v", 2}}});
  t.ops.push_back(WriteOp{"t.y", 3, {{"v", 9}}});
  auto installed = installed_writes(t);
  CHECK(installed.at("t.x") == 7);
  CHECK(installed.at("t.y") == 3);
}

TEST_CASE("installed_writes matches a scan from the end") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    Transaction t;
    t.id = 1;
    std::size_t n = 1 + rng() % 6;
    for (std::size_t o = 0; o < n; ++o)
      t.ops.push_back(WriteOp{"t.k" + std::to_string(rng() % 3),
                              static_cast<Vid>(o + 1),
                              {{"v", 0}}});
    auto installed = installed_writes(t);
    // Scan from the end: the first write seen per key wins.
    std::map<std::string, Vid> expect;
    for (auto it = t.ops.rbegin(); it != t.ops.rend(); ++it) {
      const auto& w = std::get<WriteOp>(*it);
      expect.emplace(w.key, w.vid);
    }
    CHECK(installed == expect);
  }
}

TEST_CASE("aborted and intermediate reads are detected") {
  const char* aborted =
      "B 1 0 10\nW 1 t.x 3 v=1\nA 1 20\n"
      "B 2 1 15\nR 2 t.x 3\nC 2 30\n";
  auto a = detect_read_anomalies(parse_history_text(aborted));
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == ReadAnomaly::Kind::AbortedRead);
  CHECK(a[0].reader == 2);
  CHECK(a[0].writer == 1);
  CHECK(a[0].key == "t.x");
  CHECK(a[0].vid == 3);

  const char* intermediate =
      "B 1 0 10\nW 1 t.x 3 v=1\nW 1 t.x 4 v=2\nC 1 20\n"
      "B 2 1 15\nR 2 t.x 3\nC 2 30\n";
  auto b = detect_read_anomalies(parse_history_text(intermediate));
  REQUIRE(b.size() == 1);
  CHECK(b[0].kind == ReadAnomaly::Kind::IntermediateRead);

  // Reading your own earlier write is not an anomaly.
  const char* own =
      "B 1 0 10\nW 1 t.x 3 v=1\nR 1 t.x 3\nW 1 t.x 4 v=2\nC 1 20\n";
  CHECK(detect_read_anomalies(parse_history_text(own)).empty());

  CHECK(detect_read_anomalies(testing::load_fixture("pred_cycle4.hist"))
            .empty());

  const char* dangling = "B 1 0 10\nR 1 t.x 9\nC 1 20\n";
  CHECK_THROWS_AS(detect_read_anomalies(parse_history_text(dangling)),
                  HistoryError);
}

TEST_CASE("validation rejects structural violations") {
  // Matched version fails the filter.
  const char* bad_match =
      "B 1 0 10\nW 1 t.x 1 v=5\nC 1 20\n"
      "B 2 1 15\nPR 2 table:t;v=1 [t.x:1]\nC 2 30\n";
  CHECK_THROWS_AS(validate_history(parse_history_text(bad_match)),
                  HistoryError);
  // Predicate references an attribute missing from an in-scope payload.
  const char* missing_attr =
      "B 1 0 10\nW 1 t.x 1 w=5\nC 1 20\n"
      "B 2 1 15\nPR 2 table:t;v=1 []\nC 2 30\n";
  CHECK_THROWS_AS(validate_history(parse_history_text(missing_attr)),
                  HistoryError);
  // Duplicate vid on one key.
  const char* dup_vid =
      "B 1 0 10\nW 1 t.x 1 v=1\nC 1 20\n"
      "B 2 1 15\nW 2 t.x 1 v=2\nC 2 30\n";
  CHECK_THROWS_AS(validate_history(parse_history_text(dup_vid)), HistoryError);
  // start >= end.
  const char* clock = "B 1 0 30\nW 1 t.x 1 v=1\nC 1 30\n";
  CHECK_THROWS_AS(validate_history(parse_history_text(clock)), HistoryError);
  // Committed transaction with no operations.
  const char* empty_txn = "B 1 0 10\nC 1 20\n";
  CHECK_THROWS_AS(validate_history(parse_history_text(empty_txn)),
                  HistoryError);
}

TEST_CASE("fuzzed histories validate cleanly") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    ObservedHistory h = testing::fuzz_history(rng);
    CHECK_NOTHROW(validate_history(h));
    std::string text = serialize_history(h);
    CHECK(serialize_history(parse_history_text(text)) == text);
  }
}
