#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// Observed transaction histories: the data model, the on-disk line format,
// predicate evaluation, and detection of aborted/intermediate reads.
//
// File format (UTF-8, one event per line, '#' starts a comment):
//
//   I <key> <attr>=<int>...                       initial version (vid 0)
//   B <txn> <session> <start_ticks>
//   R <txn> <key> <vid>
//   W <txn> <key> <vid> <attr>=<int>...
//   PR <txn> <pred> [<key>:<vid> ...]             matched set, may be []
//   PW <txn> <pred> [<key>:<old>-><new>(<attr>=<int>...) ...]
//   C <txn> <end_ticks>
//   A <txn> <end_ticks>
//
// Keys are "<table>.<name>".  Predicates follow the grammar
//   table:<name>;<attr><op><int>(&<attr><op><int>)*
// with op one of = != < <= > >=.  Ticks are decimal unsigned 64-bit.
// Version ids are unique per key; vid 0 is reserved for initial versions.

namespace serval {

using Tick = std::uint64_t;
using TxnId = std::uint64_t;
using Vid = std::uint64_t;

// Attribute record of one version.  Order is preserved from the input.
using Attrs = std::vector<std::pair<std::string, std::int64_t>>;

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct PredClause {
  std::string attr;
  CmpOp op;
  std::int64_t value;

  bool operator==(const PredClause&) const = default;
};

// Conjunction of integer comparisons over one table's rows.
struct Predicate {
  std::string table;
  std::vector<PredClause> clauses;

  bool operator==(const Predicate&) const = default;
};

std::string to_string(const Predicate& p);

struct ReadOp {
  std::string key;
  Vid vid;
};

struct WriteOp {
  std::string key;
  Vid vid;
  Attrs attrs;
};

struct PredReadOp {
  Predicate pred;
  std::vector<std::pair<std::string, Vid>> matched;  // versions with pred true
};

struct PredWriteMatch {
  std::string key;
  Vid old_vid;  // version the filter matched
  Vid new_vid;  // version created
  Attrs attrs;
};

struct PredWriteOp {
  Predicate pred;
  std::vector<PredWriteMatch> matched;
};

using Operation = std::variant<ReadOp, WriteOp, PredReadOp, PredWriteOp>;

enum class TxnStatus { Committed, Aborted };

struct Transaction {
  TxnId id = 0;
  std::uint32_t session = 0;
  Tick start = 0;
  Tick end = 0;
  TxnStatus status = TxnStatus::Committed;
  std::vector<Operation> ops;

  bool committed() const { return status == TxnStatus::Committed; }
};

struct InitialVersion {
  std::string key;
  Attrs attrs;  // vid 0 payload
};

struct ObservedHistory {
  std::vector<InitialVersion> initial;
  std::vector<Transaction> transactions;
};

// Parse or validation failure; maps to the INVALID_HISTORY verdict.
class HistoryError : public std::runtime_error {
 public:
  explicit HistoryError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg
                                : msg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

ObservedHistory parse_history(std::istream& in);
ObservedHistory parse_history_text(const std::string& text);
ObservedHistory load_history_file(const std::string& path);

// Canonical serialization: initial versions sorted by key, then each
// transaction's block (B, ops, C/A) ordered by (start, id).
void serialize_history(const ObservedHistory& h, std::ostream& out);
std::string serialize_history(const ObservedHistory& h);

// True iff every clause holds.  Throws HistoryError if a referenced
// attribute is missing from the record.
bool eval_predicate(const Predicate& pred, const Attrs& attrs);

// Last written version per key (plain and predicate writes).
std::map<std::string, Vid> installed_writes(const Transaction& t);

struct ReadAnomaly {
  enum class Kind { AbortedRead, IntermediateRead };
  Kind kind;
  TxnId reader;
  TxnId writer;
  std::string key;
  Vid vid;
};

// Structural checks beyond what the parser enforces: timestamps, version
// uniqueness, matched sets satisfying their predicates, predicate
// attributes present in every in-scope payload.  Throws HistoryError.
void validate_history(const ObservedHistory& h);

// One entry per committed read of an aborted write or of a non-final
// write.  Reads of a transaction's own writes are ignored.  Throws
// HistoryError for reads of versions that were never written.
std::vector<ReadAnomaly> detect_read_anomalies(const ObservedHistory& h);

}  // namespace serval
