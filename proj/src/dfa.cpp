#include "pkgguard/dfa.hpp"

#include <algorithm>
#include <atomic>
#include <bit>

namespace pkgguard {

namespace {

std::atomic<std::uint64_t> g_build_count{0};

}  // namespace

std::uint64_t dfa_build_count() noexcept { return g_build_count.load(); }

void Dfa::build_label_map() {
  label_map_.fill('\0');
  for (char a : parts_.alphabet) label_map_[static_cast<unsigned char>(a)] = a;
  if (parts_.fold) {
    for (int c = 0; c < 256; ++c) {
      const char raw = static_cast<char>(c);
      if (!is_name_char(raw)) continue;
      const char canon = fold_name_char(raw);
      if (parts_.alphabet.find(canon) != std::string::npos) label_map_[c] = canon;
    }
  }
}

Dfa Dfa::from_parts(DfaParts parts, bool edges_checked) {
  const auto& a = parts.alphabet;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!is_name_char(a[i])) throw DfaError("alphabet contains a non-name character");
    if (parts.fold && fold_name_char(a[i]) != a[i]) {
      throw DfaError("folding automaton with a non-canonical alphabet character");
    }
    if (i > 0 && a[i - 1] >= a[i]) throw DfaError("alphabet not strictly sorted");
  }
  if (parts.edge_begin.empty() || parts.edge_begin.front() != 0) {
    throw DfaError("edge offsets must start at zero");
  }
  const std::size_t n = parts.edge_begin.size() - 1;
  if (n == 0) throw DfaError("automaton has no states");
  if (parts.edge_begin.back() != parts.targets.size() || parts.labels.size() != parts.targets.size()) {
    throw DfaError("edge arrays have inconsistent sizes");
  }
  if (parts.accepting.size() != (n + 63) / 64) throw DfaError("accepting bitset has wrong size");
  if (n % 64 != 0 && (parts.accepting.back() >> (n % 64)) != 0) {
    throw DfaError("accepting bits set beyond the last state");
  }
  std::vector<bool> in_alphabet(256, false);
  for (char c : a) in_alphabet[static_cast<unsigned char>(c)] = true;
  for (std::size_t s = 0; s < n && !edges_checked; ++s) {
    const auto lo = parts.edge_begin[s], hi = parts.edge_begin[s + 1];
    if (lo > hi) throw DfaError("edge offsets not monotone");
    for (auto e = lo; e < hi; ++e) {
      if (!in_alphabet[static_cast<unsigned char>(parts.labels[e])]) {
        throw DfaError("transition label outside the alphabet");
      }
      if (e > lo && parts.labels[e - 1] >= parts.labels[e]) {
        throw DfaError("transitions not strictly sorted by label");
      }
      if (parts.targets[e] >= n) throw DfaError("transition target out of range");
    }
  }
  std::size_t accepting = 0;
  for (auto w : parts.accepting) accepting += static_cast<std::size_t>(std::popcount(w));
  if (accepting != parts.name_count) throw DfaError("name count does not match accepting states");

  Dfa dfa;
  dfa.parts_ = std::move(parts);
  dfa.build_label_map();
  return dfa;
}

StateRecord Dfa::state(StateId s) const noexcept {
  const auto lo = parts_.edge_begin[s], hi = parts_.edge_begin[s + 1];
  return StateRecord{std::span<const char>(parts_.labels.data() + lo, hi - lo),
                     std::span<const StateId>(parts_.targets.data() + lo, hi - lo),
                     is_accepting(s)};
}

bool Dfa::next_label(StateId s, char label, StateId& out) const noexcept {
  auto lo = parts_.edge_begin[s];
  auto hi = parts_.edge_begin[s + 1];
  const char* labels = parts_.labels.data();
  // Most trie states have one or two children.
  if (hi - lo <= 4) {
    for (auto e = lo; e < hi; ++e) {
      if (labels[e] == label) {
        out = parts_.targets[e];
        return true;
      }
    }
    return false;
  }
  const char* it = std::lower_bound(labels + lo, labels + hi, label);
  if (it == labels + hi || *it != label) return false;
  out = parts_.targets[static_cast<std::size_t>(it - labels)];
  return true;
}

Dfa build_dfa(const PackageList& list) {
  if (list.empty()) throw DfaError("cannot build an automaton from an empty package list");
  g_build_count.fetch_add(1);

  const std::size_t count = list.count();
  std::size_t total_chars = 0;
  std::array<bool, 256> seen{};
  for (std::size_t i = 0; i < count; ++i) {
    const auto& k = list.key(i);
    for (char c : k) {
      if (!is_name_char(c) || (list.normalized() && fold_name_char(c) != c)) {
        throw DfaError("package name '" + k + "' contains a character outside the alphabet");
      }
      seen[static_cast<unsigned char>(c)] = true;
    }
    total_chars += k.size();
  }

  // Trie in depth-first preorder. Keys are sorted, so the children of every state are
  // created in increasing label order and a state's first child is always state+1.
  std::vector<StateId> parent;
  std::vector<char> label;
  parent.reserve(total_chars + 1);
  label.reserve(total_chars + 1);
  parent.push_back(0);
  label.push_back('\0');
  std::vector<bool> accepting_flags;
  accepting_flags.reserve(total_chars + 1);
  accepting_flags.push_back(false);

  std::vector<StateId> path{Dfa::kStart};
  std::string_view prev;
  for (std::size_t i = 0; i < count; ++i) {
    std::string_view key = list.key(i);
    std::size_t lcp = 0;
    while (lcp < prev.size() && lcp < key.size() && prev[lcp] == key[lcp]) ++lcp;
    path.resize(lcp + 1);
    for (std::size_t j = lcp; j < key.size(); ++j) {
      const auto id = static_cast<StateId>(parent.size());
      parent.push_back(path.back());
      label.push_back(key[j]);
      accepting_flags.push_back(false);
      path.push_back(id);
    }
    accepting_flags[path.back()] = true;
    prev = key;
  }

  const std::size_t n = parent.size();
  DfaParts parts;
  for (int c = 0; c < 256; ++c) {
    if (seen[c]) parts.alphabet.push_back(static_cast<char>(c));
  }
  parts.fold = list.normalized();
  parts.name_count = static_cast<std::uint32_t>(count);
  parts.list_digest = list.digest();

  parts.edge_begin.assign(n + 1, 0);
  for (std::size_t s = 1; s < n; ++s) ++parts.edge_begin[parent[s] + 1];
  for (std::size_t s = 0; s < n; ++s) parts.edge_begin[s + 1] += parts.edge_begin[s];
  parts.labels.resize(n - 1);
  parts.targets.resize(n - 1);
  std::vector<std::uint32_t> fill(parts.edge_begin.begin(), parts.edge_begin.end() - 1);
  for (std::size_t s = 1; s < n; ++s) {
    const auto e = fill[parent[s]]++;
    parts.labels[e] = label[s];
    parts.targets[e] = static_cast<StateId>(s);
  }
  parts.accepting.assign((n + 63) / 64, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (accepting_flags[s]) parts.accepting[s >> 6] |= std::uint64_t{1} << (s & 63);
  }

  Dfa dfa;
  dfa.parts_ = std::move(parts);
  dfa.build_label_map();
  return dfa;
}

std::string check_invariants(const Dfa& dfa) {
  const std::size_t n = dfa.state_count();
  if (n == 0) return "empty automaton";
  const auto& p = dfa.parts();
  for (std::size_t s = 0; s < n; ++s) {
    for (auto e = p.edge_begin[s] + 1; e < p.edge_begin[s + 1]; ++e) {
      if (p.labels[e - 1] >= p.labels[e]) return "state " + std::to_string(s) + " is nondeterministic";
    }
  }
  // Forward reachability.
  std::vector<bool> reached(n, false);
  std::vector<StateId> stack{Dfa::kStart};
  reached[Dfa::kStart] = true;
  while (!stack.empty()) {
    const StateId s = stack.back();
    stack.pop_back();
    for (auto e = p.edge_begin[s]; e < p.edge_begin[s + 1]; ++e) {
      if (!reached[p.targets[e]]) {
        reached[p.targets[e]] = true;
        stack.push_back(p.targets[e]);
      }
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!reached[s]) return "state " + std::to_string(s) + " is unreachable";
  }
  // Co-reachability via reverse edges.
  std::vector<std::vector<StateId>> preds(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto e = p.edge_begin[s]; e < p.edge_begin[s + 1]; ++e) {
      preds[p.targets[e]].push_back(static_cast<StateId>(s));
    }
  }
  std::vector<bool> live(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    if (dfa.is_accepting(static_cast<StateId>(s))) {
      live[s] = true;
      stack.push_back(static_cast<StateId>(s));
    }
  }
  while (!stack.empty()) {
    const StateId s = stack.back();
    stack.pop_back();
    for (StateId q : preds[s]) {
      if (!live[q]) {
        live[q] = true;
        stack.push_back(q);
      }
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!live[s]) return "state " + std::to_string(s) + " is a dead end";
  }
  return {};
}

StepResult step(DfaCursor& cursor, char c) noexcept {
  StateId next = 0;
  if (!cursor.dfa->next(cursor.state, c, next)) return StepResult::Infeasible;
  cursor.state = next;
  ++cursor.consumed;
  return StepResult::Advanced;
}

StepResult step_string(DfaCursor& cursor, std::string_view s) noexcept {
  StateId state = cursor.state;
  for (char c : s) {
    if (!cursor.dfa->next(state, c, state)) return StepResult::Infeasible;
  }
  cursor.state = state;
  cursor.consumed += s.size();
  return StepResult::Advanced;
}

bool accepts(const Dfa& dfa, std::string_view s) noexcept {
  auto cursor = DfaCursor::at_root(dfa);
  return step_string(cursor, s) == StepResult::Advanced && is_accepting(cursor);
}

}  // namespace pkgguard
