#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "serval/history.hpp"

// Ground-truth engines, kept independent of the main verification path:
// exhaustive serializability decision by enumerating every complete
// history, and a dense reference transitive closure.

namespace serval::oracle {

// A complete history: a total order over each key's installed versions
// (vid 0 pinned first when present) plus one chosen version, with the
// filter false, for every unknown filtered read.
struct CompleteHistory {
  // Per key, installed versions in chosen order, as (writer id, vid);
  // writer id -1 marks the initial version.
  std::map<std::string, std::vector<std::pair<std::int64_t, Vid>>> orders;
  // Chosen version per unknown filtered read, aligned with the
  // enumeration's read list: (reader id, predicate, key, chosen vid).
  std::vector<std::tuple<TxnId, Predicate, std::string, Vid>> completions;
};

struct DsgEdge {
  std::int64_t from, to;  // transaction ids; -1 is the initial writer
};

struct Dsg {
  std::vector<std::int64_t> vertices;
  std::vector<DsgEdge> edges;
  bool has_cycle() const;
};

// Applies the dependency definitions literally to one complete history.
Dsg build_dsg(const ObservedHistory& h, const CompleteHistory& ch);

struct EnumerationCap : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Number of complete histories: the product over keys of the version
// permutation counts times the product over unknown reads of their
// false-version choice counts.  nullopt if it exceeds `cap`.
std::optional<std::uint64_t> count_complete_histories(
    const ObservedHistory& h, std::uint64_t cap = 10'000'000);

// Deterministic enumeration; the callback may return false to stop.
// Throws EnumerationCap if the count exceeds `cap`.
void enumerate_complete_histories(
    const ObservedHistory& h,
    const std::function<bool(const CompleteHistory&)>& fn,
    std::uint64_t cap = 10'000'000);

enum class OracleVerdict { Serializable, NotSerializable };

// Serializable iff some complete history has an acyclic DSG and the
// history has no aborted or intermediate reads.
OracleVerdict is_serializable_bruteforce(const ObservedHistory& h,
                                         std::uint64_t cap = 10'000'000);

// Dense reference closure (reflexive); n capped at 2000.
std::vector<std::vector<bool>> warshall_closure(
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
    std::uint32_t n);

}  // namespace serval::oracle
