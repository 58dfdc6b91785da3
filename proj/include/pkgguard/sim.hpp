#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pkgguard/intervenor.hpp"
#include "pkgguard/package_list.hpp"

namespace pkgguard::sim {

/// splitmix64-seeded xorshift generator; the stream is fixed across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;
  std::uint64_t next() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }

 private:
  std::uint64_t s_[2];
};

/// Pseudo-random stand-in for a language model.
///
/// Every step draws one logit per token uniformly from [-logit_range, logit_range],
/// plus one uniform for sampling, whether or not the step is forced or masked. Two
/// runs with the same seed therefore consume identical random streams.
///
/// `script` is literal text with `{}` placeholders. Literal text is emitted by
/// choosing the longest permitted token that prefixes the remaining text; at a
/// placeholder the decoder samples freely until a package name closes or
/// `placeholder_budget` steps pass. After the script, sampling is free.
struct SimDecoder {
  std::uint64_t seed = 0;
  const Vocabulary* vocab = nullptr;
  double temperature = 1.0;  // <= 0 selects greedy argmax
  std::string script;
  float logit_range = 8.0f;
  std::size_t placeholder_budget = 48;
};

struct EpisodeResult {
  std::string text;
  std::vector<TokenId> tokens;
  std::vector<RegionEvent> events;
  std::vector<double> mask_micros;  // compute_mask wall time per step (guarded runs)
  std::size_t zone_steps = 0;
  /// Steps outside the intervention zone whose masked logits differed from the raw
  /// logits in any bit.
  std::size_t identity_violations = 0;
  /// Steps where the pre-mask argmax was permitted but was not the post-mask argmax.
  std::size_t argmax_violations = 0;
  bool hit_eos = false;
};

/// Runs one episode. With `session == nullptr` the decoder runs unguarded (no masks).
EpisodeResult run_episode(const SimDecoder& decoder, GuardSession* session, std::size_t max_tokens,
                          const EcosystemProfile& profile);

/// Deterministic vocabulary of roughly a thousand tokens: every registry-alphabet
/// character, terminators, markdown and shell pieces, and common name subwords.
/// Token 0 is the eos token.
Vocabulary toy_vocabulary();

/// 64-token vocabulary: eos, lowercase letters, digits, `-`, a few terminators and
/// shell pieces. Enough to spell every synthetic name and every fuzz script.
Vocabulary small_vocabulary();

/// Distinct names of length 3..30 over lowercase letters, digits and `-` (never at
/// either end), drawn from a seeded generator.
std::vector<std::string> synthetic_names(std::size_t count, std::uint64_t seed);

/// Install-command scripts used by the fuzzer; the last one is empty (free sampling).
const std::vector<std::string>& fuzz_scripts();

struct FuzzConfig {
  std::size_t episodes = 1000;
  std::uint64_t seed = 1;
  std::size_t max_tokens = 64;
  double temperature = 1.0;
};

struct FuzzReport {
  std::size_t episodes = 0;
  std::size_t steps = 0;
  std::size_t zone_steps = 0;
  std::size_t names_emitted = 0;
  /// Accepted names that fail the list oracle, plus names abandoned in an episode
  /// without a dead end.
  std::size_t invalid_names = 0;
  std::size_t abandoned_names = 0;
  std::size_t dead_ends = 0;
  std::size_t identity_violations = 0;
  std::size_t argmax_violations = 0;

  std::string to_json() const;
};

FuzzReport fuzz(const PackageList& list, const Dfa& dfa, const TokenTrie& trie, const Vocabulary& vocab,
                const EcosystemProfile& profile, const FuzzConfig& config);

struct LatencyStats {
  double p50 = 0, p95 = 0, max = 0;
  std::size_t samples = 0;
};

LatencyStats summarize(std::vector<double> micros);

struct BenchReport {
  std::size_t list_size = 0;
  std::size_t states = 0;
  double construction_seconds = 0;  // list file -> automaton
  double dfa_build_seconds = 0;     // in-memory list -> automaton
  double load_seconds = 0;          // checkpoint file -> automaton
  std::size_t checkpoint_bytes = 0;
  double session_setup_micros = 0;
  LatencyStats mask_latency;
};

struct BenchConfig {
  std::vector<std::size_t> sizes{7000, 70000, 700000};
  std::uint64_t seed = 7;
  std::size_t repeats = 3;   // timings are medians over this many runs
  std::size_t episodes = 40; // episodes for mask latency
  std::filesystem::path work_dir;  // defaults to a temporary directory
};

std::vector<BenchReport> bench_scaling(const BenchConfig& config, const Vocabulary& vocab,
                                       const EcosystemProfile& profile);

std::string to_json(const std::vector<BenchReport>& reports);

}  // namespace pkgguard::sim
