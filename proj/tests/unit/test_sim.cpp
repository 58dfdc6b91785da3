#include <doctest.h>

#include <cstring>
#include <set>

#include "pkgguard/sim.hpp"

using namespace pkgguard;

namespace {

struct World {
  PackageList list;
  Dfa dfa;
  Vocabulary vocab;
  TokenTrie trie;
  EcosystemProfile profile = builtin_profile("pypi");

  World(std::size_t names, Vocabulary v)
      : list(PackageList::from_names(sim::synthetic_names(names, names), true)),
        dfa(build_dfa(list)),
        vocab(std::move(v)),
        trie(build_token_trie(vocab)) {}
};

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("rng is reproducible") {
  sim::Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  sim::Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("synthetic names") {
  auto names = sim::synthetic_names(2000, 9);
  CHECK(names.size() == 2000);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 2000);
  for (const auto& n : names) {
    CHECK(n.size() >= 3);
    CHECK(n.size() <= 30);
    CHECK(n.front() != '-');
    CHECK(n.back() != '-');
    for (char c : n) CHECK(((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-'));
  }
  CHECK(sim::synthetic_names(50, 9) == std::vector<std::string>(names.begin(), names.begin() + 50));
}

TEST_CASE("vocabularies") {
  auto toy = sim::toy_vocabulary();
  CHECK(toy.size() > 900);
  CHECK(toy.size() < 1100);
  CHECK(toy.eos_id() == 0);
  CHECK(sim::small_vocabulary().size() == 64);
  // Neither vocabulary may both finish a command word and start another word.
  for (const auto* v : {&toy}) {
    for (TokenId t = 0; t < static_cast<TokenId>(v->size()); ++t) {
      const auto& s = v->surface(t);
      const auto first_blank = s.find_first_of(" \t\r\n");
      if (first_blank == std::string::npos || first_blank == 0) continue;
      CHECK_MESSAGE(s.find_first_not_of(" \t\r\n", first_blank) == std::string::npos, s);
    }
  }
}

TEST_CASE("scripted episode emits only listed names") {
  World w(30, sim::toy_vocabulary());
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    sim::SimDecoder dec;
    dec.seed = seed;
    dec.vocab = &w.vocab;
    dec.script = "```\npip install {} {}\n```\n";
    GuardSession s(w.dfa, w.trie, w.vocab, w.profile);
    auto r = sim::run_episode(dec, &s, 80, w.profile);
    CHECK(r.identity_violations == 0);
    CHECK(r.argmax_violations == 0);
    for (const auto& e : r.events) {
      if (e.kind == RegionEvent::Kind::ExitPackageName) CHECK(w.list.contains(e.name));
    }
  }
}

TEST_CASE("episodes are deterministic") {
  World w(30, sim::toy_vocabulary());
  sim::SimDecoder dec;
  dec.seed = 5;
  dec.vocab = &w.vocab;
  dec.script = sim::fuzz_scripts()[1];
  GuardSession s1(w.dfa, w.trie, w.vocab, w.profile), s2(w.dfa, w.trie, w.vocab, w.profile);
  auto a = sim::run_episode(dec, &s1, 64, w.profile);
  auto b = sim::run_episode(dec, &s2, 64, w.profile);
  CHECK(a.text == b.text);
  CHECK(a.tokens == b.tokens);
  CHECK(a.events == b.events);
}

TEST_CASE("guarded and unguarded agree without install commands") {
  World w(30, sim::toy_vocabulary());
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (double temperature : {1.0, 0.0}) {
      sim::SimDecoder dec;
      dec.seed = seed;
      dec.vocab = &w.vocab;
      dec.temperature = temperature;
      GuardSession s(w.dfa, w.trie, w.vocab, w.profile);
      auto guarded = sim::run_episode(dec, &s, 64, w.profile);
      auto free = sim::run_episode(dec, nullptr, 64, w.profile);
      REQUIRE(guarded.zone_steps == 0);
      CHECK(guarded.tokens == free.tokens);
      CHECK(guarded.identity_violations == 0);
    }
  }
}

TEST_CASE("greedy decoding differs from unguarded only inside zones") {
  World w(30, sim::toy_vocabulary());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sim::SimDecoder dec;
    dec.seed = seed;
    dec.vocab = &w.vocab;
    dec.temperature = 0.0;
    dec.script = "Intro.\n```\npip install {}\n```\nOutro";
    GuardSession s(w.dfa, w.trie, w.vocab, w.profile);
    auto guarded = sim::run_episode(dec, &s, 40, w.profile);
    auto free = sim::run_episode(dec, nullptr, 40, w.profile);
    // Identical until the first in-zone step.
    std::size_t k = 0;
    while (k < guarded.tokens.size() && k < free.tokens.size() && guarded.tokens[k] == free.tokens[k]) ++k;
    const auto zone_start = std::string("Intro.\n```\npip install").size();
    std::size_t emitted = 0, idx = 0;
    while (idx < k) emitted += w.vocab.surface(guarded.tokens[idx++]).size();
    CHECK((k == guarded.tokens.size() || emitted >= zone_start));
  }
}

TEST_CASE("unguarded decoding does hallucinate") {
  World w(30, sim::toy_vocabulary());
  std::size_t bad = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    sim::SimDecoder dec;
    dec.seed = seed;
    dec.vocab = &w.vocab;
    dec.script = "```\npip install {}\n```\n";
    auto r = sim::run_episode(dec, nullptr, 64, w.profile);
    for (const auto& e : r.events) {
      if (e.kind == RegionEvent::Kind::ExitPackageName && !w.list.contains(e.name)) ++bad;
    }
  }
  CHECK(bad > 0);
}

TEST_CASE("fuzz reports") {
  World w(100, sim::toy_vocabulary());
  sim::FuzzConfig cfg;
  cfg.episodes = 200;
  cfg.seed = 3;
  auto r = sim::fuzz(w.list, w.dfa, w.trie, w.vocab, w.profile, cfg);
  CHECK(r.episodes == 200);
  CHECK(r.names_emitted > 0);
  CHECK(r.invalid_names == 0);
  CHECK(r.identity_violations == 0);
  CHECK(r.argmax_violations == 0);
  CHECK(r.dead_ends == 0);
  auto again = sim::fuzz(w.list, w.dfa, w.trie, w.vocab, w.profile, cfg);
  CHECK(again.to_json() == r.to_json());

  World small(100, sim::small_vocabulary());
  auto rs = sim::fuzz(small.list, small.dfa, small.trie, small.vocab, small.profile, cfg);
  CHECK(rs.names_emitted > 0);
  CHECK(rs.invalid_names == 0);
}

TEST_CASE("latency summary") {
  auto s = sim::summarize({5, 1, 4, 2, 3});
  CHECK(s.p50 == 3);
  CHECK(s.p95 == 5);
  CHECK(s.max == 5);
  CHECK(s.samples == 5);
  CHECK(sim::summarize({}).samples == 0);
}

TEST_CASE("small benchmark") {
  sim::BenchConfig cfg;
  cfg.sizes = {200, 2000};
  cfg.repeats = 1;
  cfg.episodes = 3;
  auto reports = sim::bench_scaling(cfg, sim::toy_vocabulary(), builtin_profile("pypi"));
  REQUIRE(reports.size() == 2);
  CHECK(reports[1].states > reports[0].states);
  CHECK(reports[0].checkpoint_bytes > 0);
  CHECK(sim::to_json(reports).find("load_speedup") != std::string::npos);
}

}  // TEST_SUITE
