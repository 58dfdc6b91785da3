#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pkgguard/context_parser.hpp"
#include "pkgguard/dfa.hpp"
#include "pkgguard/token_trie.hpp"

namespace pkgguard {

template <class Scalar>
using LogitsVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MaskBits = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Per-step permission vector over the vocabulary (true = token may be sampled).
struct LogitsMask {
  MaskBits bits;
  std::uint64_t generation_step = 0;

  Eigen::Index size() const noexcept { return bits.size(); }
  bool all_ones() const { return bits.all(); }
  bool any() const { return bits.any(); }
  Eigen::Index permitted() const { return bits.count(); }

  static LogitsMask ones(Eigen::Index n, std::uint64_t step = 0) {
    return LogitsMask{MaskBits::Constant(n, true), step};
  }
};

/// Value written into forbidden positions: the most negative finite value of the
/// scalar type, so every softmax implementation underflows it to zero.
template <class Scalar>
constexpr Scalar forbidden_logit() noexcept {
  return std::numeric_limits<Scalar>::lowest();
}

/// Copy of `logits` with every position whose mask bit is 0 replaced by
/// forbidden_logit(). Permitted entries are copied bit-for-bit.
template <class Derived>
LogitsVector<typename Derived::Scalar> apply_mask(const Eigen::MatrixBase<Derived>& logits,
                                                  const LogitsMask& mask) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() != mask.size()) {
    throw std::invalid_argument("apply_mask: logits length " + std::to_string(logits.size()) +
                                " does not match mask length " + std::to_string(mask.size()));
  }
  return mask.bits.select(logits.array(), forbidden_logit<Scalar>()).matrix();
}

/// Numerically stable softmax. Forbidden entries get probability exactly 0; a
/// vectorized exp clamps its argument and would otherwise leave a denormal.
template <class Derived>
LogitsVector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = logits.maxCoeff();
  LogitsVector<Scalar> p =
      (logits.array() == forbidden_logit<Scalar>()).select(Scalar(0), (logits.array() - top).exp()).matrix();
  return p / p.sum();
}

enum class DeadEndPolicy { ForceNewline, Abort };

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A token that the last mask forbade, or a call out of the compute/observe order.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DeadEndError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SessionOptions {
  DeadEndPolicy policy = DeadEndPolicy::ForceNewline;
  bool bare_commands = false;
  std::size_t memo_capacity = FeasibleMemo::kDefaultCapacity;
  /// When set, the automaton must have been built from this list.
  std::optional<Sha256> expected_list_digest;
};

struct ObserveResult {
  std::vector<RegionEvent> events;
  bool finished = false;
  bool in_zone = false;
};

struct SessionStats {
  std::uint64_t masks = 0;
  std::uint64_t zone_masks = 0;
  std::uint64_t probes = 0;
  std::uint64_t dead_ends = 0;
};

/// One decoding stream guarded against invalid package names.
///
/// The automaton, token trie and vocabulary are shared read-only and must outlive the
/// session. Calls alternate: compute_mask, then observe_token with a permitted id.
class GuardSession {
 public:
  GuardSession(const Dfa& dfa, const TokenTrie& trie, const Vocabulary& vocab,
               const EcosystemProfile& profile, SessionOptions options = {});

  const LogitsMask& compute_mask();
  ObserveResult observe_token(TokenId id);

  /// Replaces an empty in-zone mask according to the dead-end policy.
  const LogitsMask& handle_dead_end();

  const LogitsMask& last_mask() const noexcept { return mask_; }
  const ContextParser& parser() const noexcept { return parser_; }
  const FeasibleMemo& memo() const noexcept { return memo_; }
  const SessionStats& stats() const noexcept { return stats_; }
  const Vocabulary& vocab() const noexcept { return *vocab_; }
  std::uint64_t generation_step() const noexcept { return step_; }
  bool finished() const noexcept { return finished_; }
  bool in_intervention_zone() const noexcept { return parser_.in_intervention_zone(); }

 private:
  void compute_zone_mask();
  bool probe(TokenId id);

  const Dfa* dfa_;
  const TokenTrie* trie_;
  const Vocabulary* vocab_;
  SessionOptions options_;
  ContextParser parser_;
  FeasibleMemo memo_;

  // Token groups precomputed from the vocabulary.
  std::vector<TokenId> terminator_tokens_;
  std::vector<TokenId> mixed_tokens_;
  std::vector<TokenId> byte_tokens_;      // control class but with a surface
  std::vector<TokenId> flag_pieces_;      // name pieces starting with '-'
  std::vector<TokenId> crossing_tokens_;  // may complete a command and start a name in one step
  std::vector<TokenId> newline_tokens_;

  LogitsMask mask_;
  bool mask_pending_ = false;
  bool finished_ = false;
  std::uint64_t step_ = 0;
  SessionStats stats_;
};

inline std::unique_ptr<GuardSession> create_session(const Dfa& dfa, const TokenTrie& trie,
                                                    const Vocabulary& vocab,
                                                    const EcosystemProfile& profile,
                                                    SessionOptions options = {}) {
  return std::make_unique<GuardSession>(dfa, trie, vocab, profile, std::move(options));
}

inline const LogitsMask& compute_mask(GuardSession& session) { return session.compute_mask(); }
inline ObserveResult observe_token(GuardSession& session, TokenId id) { return session.observe_token(id); }
inline const LogitsMask& handle_dead_end(GuardSession& session) { return session.handle_dead_end(); }

}  // namespace pkgguard
