#include "pkgguard/intervenor.hpp"

#include <algorithm>

namespace pkgguard {

namespace {

constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n';
}

// Non-blank text, then a blank, then non-blank text again. Only such a token can
// finish an install prefix, separate it and start a name within a single step.
bool may_cross_into_name(std::string_view s) {
  bool seen_word = false, seen_gap = false;
  for (char c : s) {
    if (is_space(c)) {
      if (seen_word) seen_gap = true;
    } else if (seen_gap) {
      return true;
    } else {
      seen_word = true;
    }
  }
  return false;
}

bool is_newline_token(std::string_view s) {
  return !s.empty() && s.find('\n') != std::string_view::npos &&
         std::all_of(s.begin(), s.end(), is_space);
}

}  // namespace

GuardSession::GuardSession(const Dfa& dfa, const TokenTrie& trie, const Vocabulary& vocab,
                           const EcosystemProfile& profile, SessionOptions options)
    : dfa_(&dfa),
      trie_(&trie),
      vocab_(&vocab),
      options_(std::move(options)),
      parser_(profile, &dfa, ParserOptions{options_.bare_commands}),
      memo_(dfa, trie, options_.memo_capacity) {
  if (trie.vocab_digest() != vocab.digest() || trie.vocab_size() != vocab.size()) {
    throw SessionError("token trie was built from a different vocabulary");
  }
  if (options_.expected_list_digest && *options_.expected_list_digest != dfa.list_digest()) {
    throw SessionError("automaton was built from a different package list");
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const auto& s = vocab.surface(id);
    switch (trie.token_class(id)) {
      case TokenClass::NamePiece:
        if (s.front() == '-') flag_pieces_.push_back(id);
        break;
      case TokenClass::Terminator: terminator_tokens_.push_back(id); break;
      case TokenClass::Mixed: mixed_tokens_.push_back(id); break;
      case TokenClass::Control:
        if (!vocab.is_special(id) && !s.empty()) byte_tokens_.push_back(id);
        break;
    }
    if (!vocab.is_special(id) && may_cross_into_name(s)) crossing_tokens_.push_back(id);
    if (!vocab.is_special(id) && is_newline_token(s)) newline_tokens_.push_back(id);
  }
  mask_ = LogitsMask::ones(static_cast<Eigen::Index>(vocab.size()));
}

bool GuardSession::probe(TokenId id) {
  ++stats_.probes;
  return parser_.probe(vocab_->surface(id));
}

const LogitsMask& GuardSession::compute_mask() {
  if (finished_) throw ContractViolation("compute_mask after end of stream");
  ++stats_.masks;
  mask_.generation_step = step_;
  mask_pending_ = true;
  if (!parser_.in_intervention_zone()) {
    mask_.bits.setConstant(true);
    for (TokenId id : crossing_tokens_) {
      if (!probe(id)) mask_.bits[id] = false;
    }
    return mask_;
  }
  ++stats_.zone_masks;
  compute_zone_mask();
  if (!mask_.any()) return handle_dead_end();
  return mask_;
}

void GuardSession::compute_zone_mask() {
  auto& bits = mask_.bits;
  bits.setConstant(false);
  const auto eos = vocab_->eos_id();
  const Region region = parser_.region();

  if (region == Region::PackageName || region == Region::BetweenPackageNames) {
    const auto cursor = parser_.current_cursor();
    if (cursor) {
      const auto feasible = feasible_with_memo(*dfa_, cursor->state, *trie_, memo_);
      for (TokenId id : *feasible) bits[id] = true;
    }
    if (region == Region::BetweenPackageNames) {
      for (TokenId id : flag_pieces_) bits[id] = true;
      for (TokenId id : terminator_tokens_) bits[id] = probe(id);
      for (TokenId id : mixed_tokens_) {
        if (vocab_->surface(id).front() == '-') bits[id] = probe(id);
      }
      if (eos) bits[*eos] = true;
    } else if (parser_.can_end_stream()) {
      // Name complete: it may be closed by a terminator, provided whatever the token
      // carries after the terminator is itself acceptable.
      for (TokenId id : terminator_tokens_) bits[id] = probe(id);
      if (eos) bits[*eos] = true;
    }
    return;
  }

  // Prefix complete, inside an option word, or inside a version suffix. Name pieces
  // contain no blank, so they cannot open a name from here.
  const auto& classes = trie_->classes();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == TokenClass::NamePiece) bits[static_cast<Eigen::Index>(i)] = true;
  }
  for (TokenId id : terminator_tokens_) bits[id] = probe(id);
  for (TokenId id : mixed_tokens_) bits[id] = probe(id);
  for (TokenId id : byte_tokens_) bits[id] = probe(id);
  if (eos) bits[*eos] = true;
}

const LogitsMask& GuardSession::handle_dead_end() {
  ++stats_.dead_ends;
  if (options_.policy == DeadEndPolicy::Abort) {
    mask_pending_ = false;
    throw DeadEndError("no token can continue the package name at generation step " +
                       std::to_string(step_));
  }
  mask_.bits.setConstant(false);
  for (TokenId id : newline_tokens_) mask_.bits[id] = true;
  if (const auto eos = vocab_->eos_id()) mask_.bits[*eos] = true;
  if (!mask_.any()) {
    mask_pending_ = false;
    throw DeadEndError("dead end and the vocabulary has neither a newline nor an eos token");
  }
  mask_pending_ = true;
  return mask_;
}

ObserveResult GuardSession::observe_token(TokenId id) {
  if (!mask_pending_) throw ContractViolation("observe_token without a preceding compute_mask");
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_->size()) {
    throw ContractViolation("token id out of range: " + std::to_string(id));
  }
  if (!mask_.bits[id]) {
    throw ContractViolation("token " + std::to_string(id) + " was forbidden by the mask of step " +
                            std::to_string(mask_.generation_step));
  }
  mask_pending_ = false;
  ++step_;
  ObserveResult result;
  if (vocab_->eos_id() && id == *vocab_->eos_id()) {
    result.events = parser_.finish();
    finished_ = true;
    result.finished = true;
  } else {
    parser_.feed(vocab_->surface(id), result.events);
  }
  result.in_zone = parser_.in_intervention_zone();
  return result;
}

}  // namespace pkgguard
