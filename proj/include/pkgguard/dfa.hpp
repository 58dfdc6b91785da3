#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pkgguard/package_list.hpp"

namespace pkgguard {

using StateId = std::uint32_t;

enum class StepResult { Advanced, Infeasible };

class DfaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One state of the automaton: its outgoing transitions sorted by label.
struct StateRecord {
  std::span<const char> labels;
  std::span<const StateId> targets;
  bool is_accepting = false;
};

/// Raw arrays of a compiled automaton in CSR layout.
///
/// `edge_begin` has `state_count + 1` entries; the transitions of state s are
/// `[edge_begin[s], edge_begin[s+1])` in `labels`/`targets`, strictly increasing by
/// label. Labels are canonical characters drawn from `alphabet`. When `fold` is set,
/// input characters pass through `fold_name_char` before lookup.
struct DfaParts {
  std::string alphabet;
  bool fold = false;
  std::uint32_t name_count = 0;
  Sha256 list_digest{};
  std::vector<std::uint32_t> edge_begin;
  std::vector<char> labels;
  std::vector<StateId> targets;
  std::vector<std::uint64_t> accepting;  // bitset over state ids
};

/// Character-level automaton accepting exactly the keys of a PackageList.
///
/// Built as a trie in depth-first preorder: the start state is 0 and every other
/// state has exactly one predecessor. Immutable after construction.
class Dfa {
 public:
  static constexpr StateId kStart = 0;

  Dfa() = default;

  /// Adopts prebuilt arrays after checking structural consistency.
  /// `edges_checked` skips the per-edge label/target checks when the caller has
  /// already validated them while decoding.
  static Dfa from_parts(DfaParts parts, bool edges_checked = false);

  std::size_t state_count() const noexcept { return parts_.edge_begin.empty() ? 0 : parts_.edge_begin.size() - 1; }
  std::size_t edge_count() const noexcept { return parts_.targets.size(); }
  const std::string& alphabet() const noexcept { return parts_.alphabet; }
  bool folds() const noexcept { return parts_.fold; }
  std::uint32_t name_count() const noexcept { return parts_.name_count; }
  const Sha256& list_digest() const noexcept { return parts_.list_digest; }
  const DfaParts& parts() const noexcept { return parts_; }

  /// Canonical label for an input character, or '\0' when it is outside the alphabet.
  char label_of(char c) const noexcept { return label_map_[static_cast<unsigned char>(c)]; }

  bool is_accepting(StateId s) const noexcept {
    return (parts_.accepting[s >> 6] >> (s & 63)) & 1u;
  }

  StateRecord state(StateId s) const noexcept;

  /// Successor by canonical label; returns false when no transition exists.
  bool next_label(StateId s, char label, StateId& out) const noexcept;

  /// Successor by input character (folded when the automaton folds).
  bool next(StateId s, char c, StateId& out) const noexcept {
    const char label = label_of(c);
    return label != '\0' && next_label(s, label, out);
  }

 private:
  friend Dfa build_dfa(const PackageList& list);
  void build_label_map();

  DfaParts parts_;
  std::array<char, 256> label_map_{};
};

/// Compiles a non-empty list. Throws DfaError on an empty list or a key outside the
/// registry alphabet.
Dfa build_dfa(const PackageList& list);

/// Number of build_dfa invocations in this process (cache diagnostics).
std::uint64_t dfa_build_count() noexcept;

/// Verifies determinism, reachability from the start state and co-reachability of
/// an accepting state from every state. Returns a description of the first
/// violation, or an empty string.
std::string check_invariants(const Dfa& dfa);

/// Position of a name prefix inside the automaton.
struct DfaCursor {
  const Dfa* dfa = nullptr;
  StateId state = Dfa::kStart;
  std::size_t consumed = 0;

  static DfaCursor at_root(const Dfa& d) noexcept { return DfaCursor{&d, Dfa::kStart, 0}; }
  friend bool operator==(const DfaCursor&, const DfaCursor&) = default;
};

StepResult step(DfaCursor& cursor, char c) noexcept;

/// All-or-nothing: on Infeasible the cursor is left exactly as it was.
StepResult step_string(DfaCursor& cursor, std::string_view s) noexcept;

inline bool is_accepting(const DfaCursor& cursor) noexcept {
  return cursor.dfa->is_accepting(cursor.state);
}

/// Whole-string membership test from the start state.
bool accepts(const Dfa& dfa, std::string_view s) noexcept;

}  // namespace pkgguard
