#include "pkgguard/token_trie.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace pkgguard {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> surfaces, std::vector<TokenId> special_ids,
                       std::optional<TokenId> eos_id)
    : surfaces_(std::move(surfaces)), special_(surfaces_.size(), false), eos_id_(eos_id) {
  for (TokenId id : special_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size()) {
      throw VocabularyError("special token id out of range: " + std::to_string(id));
    }
    special_[static_cast<std::size_t>(id)] = true;
    surfaces_[static_cast<std::size_t>(id)].clear();
  }
  if (eos_id_) {
    if (*eos_id_ < 0 || static_cast<std::size_t>(*eos_id_) >= surfaces_.size()) {
      throw VocabularyError("eos token id out of range");
    }
    special_[static_cast<std::size_t>(*eos_id_)] = true;
    surfaces_[static_cast<std::size_t>(*eos_id_)].clear();
  }

  std::string blob = "pkgguard-vocab\n";
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    blob += special_[i] ? 'S' : 'T';
    blob += std::to_string(surfaces_[i].size());
    blob += ':';
    blob += surfaces_[i];
  }
  blob += "\neos=" + (eos_id_ ? std::to_string(*eos_id_) : std::string("none"));
  digest_ = sha256(blob);
}

void Vocabulary::write_jsonl(std::ostream& out) const {
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    json rec;
    rec["id"] = i;
    if (special_[i]) {
      rec["special"] = true;
      if (eos_id_ && static_cast<std::size_t>(*eos_id_) == i) rec["eos"] = true;
    } else if (valid_utf8(surfaces_[i])) {
      rec["text"] = surfaces_[i];
    } else {
      std::vector<int> bytes;
      for (unsigned char b : surfaces_[i]) bytes.push_back(b);
      rec["bytes"] = bytes;
    }
    out << rec.dump() << '\n';
  }
}

namespace {

struct RawToken {
  long long id = -1;
  std::string surface;
  bool special = false;
  bool eos = false;
};

RawToken parse_jsonl_record(const json& rec, std::size_t lineno) {
  RawToken t;
  if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_number_integer()) {
    throw VocabularyError("line " + std::to_string(lineno) + ": record needs an integer \"id\"");
  }
  t.id = rec["id"].get<long long>();
  t.special = rec.value("special", false);
  t.eos = rec.value("eos", false);
  if (t.eos) t.special = true;
  if (t.special) return t;
  if (rec.contains("text")) {
    t.surface = rec["text"].get<std::string>();
  } else if (rec.contains("bytes")) {
    for (const auto& b : rec["bytes"]) {
      const int v = b.get<int>();
      if (v < 0 || v > 255) throw VocabularyError("line " + std::to_string(lineno) + ": byte out of range");
      t.surface.push_back(static_cast<char>(v));
    }
  } else {
    throw VocabularyError("line " + std::to_string(lineno) + ": token has neither text nor bytes");
  }
  return t;
}

RawToken parse_tsv_record(std::string_view line, std::size_t lineno) {
  RawToken t;
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) {
    throw VocabularyError("line " + std::to_string(lineno) + ": expected <id>\\t<json string>");
  }
  try {
    t.id = std::stoll(std::string(line.substr(0, tab)));
  } catch (const std::exception&) {
    throw VocabularyError("line " + std::to_string(lineno) + ": bad token id");
  }
  auto rest = line.substr(tab + 1);
  std::string_view marker;
  if (auto tab2 = rest.find('\t'); tab2 != std::string_view::npos) {
    marker = rest.substr(tab2 + 1);
    rest = rest.substr(0, tab2);
  }
  json value;
  try {
    value = json::parse(rest);
  } catch (const json::exception& e) {
    throw VocabularyError("line " + std::to_string(lineno) + ": " + e.what());
  }
  if (value.is_null()) {
    t.special = true;
    t.eos = marker == "eos";
  } else if (value.is_string()) {
    t.surface = value.get<std::string>();
  } else {
    throw VocabularyError("line " + std::to_string(lineno) + ": surface must be a string or null");
  }
  return t;
}

}  // namespace

Vocabulary load_vocabulary(std::istream& in) {
  std::vector<RawToken> raw;
  std::string line;
  std::size_t lineno = 0;
  int format = 0;  // 1 = jsonl, 2 = tsv
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (format == 0) format = line.front() == '{' ? 1 : 2;
    if (format == 1) {
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw VocabularyError("line " + std::to_string(lineno) + ": " + e.what());
      }
      raw.push_back(parse_jsonl_record(rec, lineno));
    } else {
      raw.push_back(parse_tsv_record(line, lineno));
    }
  }
  if (raw.empty()) throw VocabularyError("vocabulary is empty");

  std::vector<std::string> surfaces(raw.size());
  std::vector<bool> seen(raw.size(), false);
  std::vector<TokenId> special;
  std::optional<TokenId> eos;
  for (auto& t : raw) {
    if (t.id < 0 || static_cast<std::size_t>(t.id) >= raw.size()) {
      throw VocabularyError("token ids must be dense 0..N-1; got " + std::to_string(t.id));
    }
    const auto idx = static_cast<std::size_t>(t.id);
    if (seen[idx]) throw VocabularyError("duplicate token id " + std::to_string(t.id));
    seen[idx] = true;
    surfaces[idx] = std::move(t.surface);
    if (t.special) special.push_back(static_cast<TokenId>(t.id));
    if (t.eos) {
      if (eos) throw VocabularyError("more than one eos token");
      eos = static_cast<TokenId>(t.id);
    }
  }
  return Vocabulary(std::move(surfaces), std::move(special), eos);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabularyError("cannot open vocabulary: " + path.string());
  return load_vocabulary(in);
}

const char* to_string(TokenClass c) noexcept {
  switch (c) {
    case TokenClass::NamePiece: return "name-piece";
    case TokenClass::Terminator: return "terminator";
    case TokenClass::Mixed: return "mixed";
    case TokenClass::Control: return "control";
  }
  return "?";
}

TokenClass classify_surface(std::string_view surface, bool special, std::string_view terminators) {
  if (special || surface.empty() || !valid_utf8(surface)) return TokenClass::Control;
  if (terminators.find(surface.front()) != std::string_view::npos) return TokenClass::Terminator;
  if (std::all_of(surface.begin(), surface.end(), is_name_char)) return TokenClass::NamePiece;
  return TokenClass::Mixed;
}

TokenTrie build_token_trie(const Vocabulary& vocab, std::string_view terminators) {
  TokenTrie trie;
  trie.vocab_digest_ = vocab.digest();
  trie.classes_.resize(vocab.size());
  trie.nodes_.emplace_back();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const auto cls = classify_surface(vocab.surface(id), vocab.is_special(id), terminators);
    trie.classes_[i] = cls;
    if (cls == TokenClass::Control) continue;
    std::uint32_t node = 0;
    for (char c : vocab.surface(id)) {
      auto& kids = trie.nodes_[node].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), c,
                                 [](const auto& kv, char ch) { return kv.first < ch; });
      if (it != kids.end() && it->first == c) {
        node = it->second;
      } else {
        const auto fresh = static_cast<std::uint32_t>(trie.nodes_.size());
        kids.insert(it, {c, fresh});
        trie.nodes_.emplace_back();
        node = fresh;
      }
    }
    trie.nodes_[node].terminals.push_back(id);
  }
  return trie;
}

std::optional<std::uint32_t> TokenTrie::walk(std::string_view s) const {
  std::uint32_t node = 0;
  for (char c : s) {
    const auto& kids = nodes_[node].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), c,
                               [](const auto& kv, char ch) { return kv.first < ch; });
    if (it == kids.end() || it->first != c) return std::nullopt;
    node = it->second;
  }
  return node;
}

TokenSet feasible_tokens(const Dfa& dfa, StateId state, const TokenTrie& trie) {
  TokenSet out;
  if (trie.nodes().empty()) return out;
  const auto& nodes = trie.nodes();
  std::vector<std::pair<std::uint32_t, StateId>> stack{{0u, state}};
  while (!stack.empty()) {
    auto [node, s] = stack.back();
    stack.pop_back();
    if (node != 0) {
      const auto& t = nodes[node].terminals;
      out.insert(out.end(), t.begin(), t.end());
    }
    for (const auto& [c, child] : nodes[node].children) {
      StateId next = 0;
      if (dfa.next(s, c, next)) stack.emplace_back(child, next);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

FeasibleMemo::FeasibleMemo(const Dfa& dfa, const TokenTrie& trie, std::size_t capacity)
    : list_digest_(dfa.list_digest()), vocab_digest_(trie.vocab_digest()), capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("FeasibleMemo capacity must be positive");
}

std::shared_ptr<const TokenSet> feasible_with_memo(const Dfa& dfa, StateId state,
                                                   const TokenTrie& trie, FeasibleMemo& memo) {
  if (dfa.list_digest() != memo.list_digest_ || trie.vocab_digest() != memo.vocab_digest_) {
    throw std::logic_error("feasible-set memo was built for a different automaton or vocabulary");
  }
  if (auto it = memo.index_.find(state); it != memo.index_.end()) {
    ++memo.hits_;
    memo.lru_.splice(memo.lru_.begin(), memo.lru_, it->second);
    return it->second->second;
  }
  ++memo.misses_;
  auto set = std::make_shared<const TokenSet>(feasible_tokens(dfa, state, trie));
  memo.lru_.emplace_front(state, set);
  memo.index_[state] = memo.lru_.begin();
  if (memo.index_.size() > memo.capacity_) {
    memo.index_.erase(memo.lru_.back().first);
    memo.lru_.pop_back();
  }
  return set;
}

}  // namespace pkgguard
