#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "serval/closure.hpp"
#include "serval/deps.hpp"
#include "serval/history.hpp"

// The dependency edges derivable from the observation alone, plus the
// per-key indexes the constraint generator works from.  Time-implied
// write and anti dependencies between non-overlapping transactions are
// not stored as edges; the closure answers them from timestamps.

namespace serval {

struct InstalledVersion {
  TxnIdx writer;  // kInitTxn for vid 0
  Vid vid;
  const Attrs* attrs;
};

class KeySpace {
 public:
  KeyId intern(const std::string& key);
  KeyId find(const std::string& key) const;  // kNoKey if absent
  const std::string& name(KeyId id) const { return names_[id]; }
  const std::string& table(KeyId id) const { return tables_[id]; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(names_.size()); }
  const std::vector<KeyId>& keys_of_table(const std::string& table) const;

 private:
  std::vector<std::string> names_, tables_;
  std::unordered_map<std::string, KeyId> by_name_;
  std::unordered_map<std::string, std::vector<KeyId>> by_table_;
};

// One unknown filtered read: transaction `reader` evaluated `pred` over
// key `key` without observing a matching version.
struct UnknownThetaRead {
  TxnIdx reader;
  PredId pred;
  KeyId key;
};

struct KnownGraph {
  const TxnOrder* ord = nullptr;
  KeySpace keys;
  std::vector<Predicate> preds;  // indexed by PredId

  AdjList adj;                      // explicit labeled edges
  std::vector<std::vector<InstalledVersion>> installed;  // per key
  // Readers (committed, plain or matched filtered reads) per installed
  // version, keyed by (key, writer); vid-0 readers keyed by kInitTxn.
  std::unordered_map<std::uint64_t, std::vector<TxnIdx>> readers;
  std::vector<UnknownThetaRead> unknown_reads;

  bool has_edge(TxnIdx u, TxnIdx v) const;
  const std::vector<TxnIdx>& readers_of(KeyId key, TxnIdx writer) const;
  // Installed-version writers of a key; includes kInitTxn for vid 0.
  const std::vector<InstalledVersion>& writers_of(KeyId key) const;

  // Predicate value of an installed version.
  bool theta(PredId pred, KeyId key, TxnIdx writer) const;

  // Predicate values for every installed version of a key, aligned with
  // writers_of(key); evaluated over per-key attribute columns.
  std::vector<char> theta_all(PredId pred, KeyId key) const;
  void theta_into(PredId pred, KeyId key, std::vector<char>& out) const;

  void dump_dot(std::ostream& out) const;

 private:
  friend KnownGraph build_known_graph(const ObservedHistory&, const TxnOrder&,
                                      bool);
  std::unordered_map<std::uint64_t, const Attrs*> attrs_by_writer_;
  // Column store per key: attribute name -> (value, present) cells
  // aligned with the installed-version list.
  struct ColumnCell {
    std::int64_t value = 0;
    bool present = false;
  };
  std::vector<std::vector<std::pair<std::string, std::vector<ColumnCell>>>>
      columns_;
};

// Derives read dependencies for every committed read (including matched
// filtered reads) and the anti-dependencies that follow from a read whose
// writer provably precedes another writer of the same key.  With
// derive_time_deps off, only the vid-0-rooted facts are kept.
// Precondition: validate_history passed and detect_read_anomalies is
// empty.
KnownGraph build_known_graph(const ObservedHistory& h, const TxnOrder& ord,
                             bool derive_time_deps = true);

}  // namespace serval
