#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <list>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pkgguard/dfa.hpp"

namespace pkgguard {

using TokenId = std::int32_t;
using TokenSet = std::vector<TokenId>;  // sorted, unique

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoded surface strings of a tokenizer vocabulary, indexed by token id.
///
/// Special (control) tokens carry no text. The end-of-sequence token, when present,
/// is one of them.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> surfaces, std::vector<TokenId> special_ids,
             std::optional<TokenId> eos_id = std::nullopt);

  std::size_t size() const noexcept { return surfaces_.size(); }
  const std::string& surface(TokenId id) const { return surfaces_.at(static_cast<std::size_t>(id)); }
  bool is_special(TokenId id) const { return special_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> eos_id() const noexcept { return eos_id_; }
  const Sha256& digest() const noexcept { return digest_; }

  /// JSON-lines form accepted by load_vocabulary.
  void write_jsonl(std::ostream& out) const;

 private:
  std::vector<std::string> surfaces_;
  std::vector<bool> special_;
  std::optional<TokenId> eos_id_;
  Sha256 digest_{};
};

/// Reads a vocabulary in JSON-lines or tab-separated form (detected from the first
/// record).
///
/// JSON lines, one object per token:
///   {"id": 12, "text": "num"}            decoded surface, JSON-escaped
///   {"id": 13, "bytes": [226, 150]}      raw bytes (byte-fallback pieces)
///   {"id": 0, "special": true, "name": "<eos>", "eos": true}
/// Tab-separated, one token per line:
///   12<TAB>"num"                         JSON string literal
///   0<TAB>null<TAB>eos                   control token, optional eos marker
/// Ids must be dense 0..N-1.
Vocabulary load_vocabulary(std::istream& in);
Vocabulary load_vocabulary(const std::filesystem::path& path);

enum class TokenClass : std::uint8_t { NamePiece, Terminator, Mixed, Control };

const char* to_string(TokenClass c) noexcept;

/// Characters that close a package name in the built-in profiles.
inline constexpr std::string_view kDefaultTerminators = " \t\r\n=<>![~;'\"";

/// Classification of a single surface form.
///
/// NamePiece: every character is a registry-name character. Terminator: the first
/// character is a terminator. Control: special, empty, or not standalone UTF-8.
/// Everything else (name characters followed by other text, or a leading character
/// that is neither) is Mixed.
TokenClass classify_surface(std::string_view surface, bool special,
                            std::string_view terminators = kDefaultTerminators);

/// Character trie over the surfaces of all non-control tokens.
class TokenTrie {
 public:
  struct Node {
    std::vector<std::pair<char, std::uint32_t>> children;  // sorted by char
    std::vector<TokenId> terminals;
  };

  TokenTrie() = default;

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& root() const noexcept { return nodes_.front(); }
  TokenClass token_class(TokenId id) const { return classes_.at(static_cast<std::size_t>(id)); }
  const std::vector<TokenClass>& classes() const noexcept { return classes_; }
  std::size_t vocab_size() const noexcept { return classes_.size(); }
  const Sha256& vocab_digest() const noexcept { return vocab_digest_; }

  /// Node reached by walking `s` from the root, if any.
  std::optional<std::uint32_t> walk(std::string_view s) const;

 private:
  friend TokenTrie build_token_trie(const Vocabulary&, std::string_view);

  std::vector<Node> nodes_;
  std::vector<TokenClass> classes_;
  Sha256 vocab_digest_{};
};

TokenTrie build_token_trie(const Vocabulary& vocab,
                           std::string_view terminators = kDefaultTerminators);

/// Tokens whose whole surface can be consumed by the automaton starting at `state`,
/// found by walking the token trie and the automaton in lockstep.
TokenSet feasible_tokens(const Dfa& dfa, StateId state, const TokenTrie& trie);

/// Bounded LRU cache of feasible sets keyed by automaton state.
///
/// A memo is tied to one (package list, vocabulary) pair; using it with a different
/// automaton or trie throws.
class FeasibleMemo {
 public:
  static constexpr std::size_t kDefaultCapacity = 65536;

  FeasibleMemo(const Dfa& dfa, const TokenTrie& trie, std::size_t capacity = kDefaultCapacity);

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t hits() const noexcept { return hits_; }
  std::uint64_t misses() const noexcept { return misses_; }

 private:
  friend std::shared_ptr<const TokenSet> feasible_with_memo(const Dfa&, StateId, const TokenTrie&,
                                                            FeasibleMemo&);
  using Entry = std::pair<StateId, std::shared_ptr<const TokenSet>>;

  Sha256 list_digest_;
  Sha256 vocab_digest_;
  std::size_t capacity_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<StateId, std::list<Entry>::iterator> index_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

std::shared_ptr<const TokenSet> feasible_with_memo(const Dfa& dfa, StateId state,
                                                   const TokenTrie& trie, FeasibleMemo& memo);

}  // namespace pkgguard
