#include "pkgguard/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "pkgguard/checkpoint.hpp"

namespace pkgguard::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Segment {
  bool placeholder = false;
  std::string text;
};

std::vector<Segment> parse_script(const std::string& script) {
  std::vector<Segment> out;
  std::size_t pos = 0;
  while (pos < script.size()) {
    const auto hole = script.find("{}", pos);
    if (hole == std::string::npos) {
      out.push_back({false, script.substr(pos)});
      break;
    }
    if (hole > pos) out.push_back({false, script.substr(pos, hole - pos)});
    out.push_back({true, {}});
    pos = hole + 2;
  }
  return out;
}

// Longest permitted token whose surface is a prefix of `text`.
std::optional<TokenId> longest_prefix_token(const TokenTrie& trie, std::string_view text,
                                            const LogitsMask* mask) {
  std::optional<TokenId> best;
  std::uint32_t node = 0;
  const auto& nodes = trie.nodes();
  for (char c : text) {
    const auto& kids = nodes[node].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), c,
                               [](const auto& kv, char ch) { return kv.first < ch; });
    if (it == kids.end() || it->first != c) break;
    node = it->second;
    for (TokenId id : nodes[node].terminals) {
      if (mask == nullptr || mask->bits[id]) {
        best = id;
        break;
      }
    }
  }
  return best;
}

TokenId sample(const LogitsVector<float>& logits, double temperature, double u) {
  Eigen::Index best = 0;
  const float top = logits.maxCoeff(&best);
  if (temperature <= 0.0) return static_cast<TokenId>(best);
  std::vector<double> p(static_cast<std::size_t>(logits.size()), 0.0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (logits[i] == forbidden_logit<float>()) continue;
    p[static_cast<std::size_t>(i)] = std::exp((static_cast<double>(logits[i]) - top) / temperature);
    total += p[static_cast<std::size_t>(i)];
  }
  const double target = u * total;
  double acc = 0.0;
  Eigen::Index last = best;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double pi = p[static_cast<std::size_t>(i)];
    if (pi == 0.0) continue;
    last = i;
    acc += pi;
    if (target < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

}  // namespace

Rng::Rng(std::uint64_t seed) noexcept {
  std::uint64_t x = seed;
  s_[0] = splitmix64(x);
  s_[1] = splitmix64(x);
  if (s_[0] == 0 && s_[1] == 0) s_[1] = 1;
}

std::uint64_t Rng::next() noexcept {
  // xorshift128+
  std::uint64_t s1 = s_[0];
  const std::uint64_t s0 = s_[1];
  const std::uint64_t result = s0 + s1;
  s_[0] = s0;
  s1 ^= s1 << 23;
  s_[1] = s1 ^ s0 ^ (s1 >> 18) ^ (s0 >> 5);
  return result;
}

EpisodeResult run_episode(const SimDecoder& decoder, GuardSession* session, std::size_t max_tokens,
                          const EcosystemProfile& profile) {
  if (decoder.vocab == nullptr) throw std::invalid_argument("SimDecoder has no vocabulary");
  const Vocabulary& vocab = *decoder.vocab;
  if (session && session->vocab().digest() != vocab.digest()) {
    throw SessionError("decoder vocabulary differs from the session vocabulary");
  }
  const TokenTrie trie = build_token_trie(vocab);

  Rng rng(decoder.seed);
  const auto n = static_cast<Eigen::Index>(vocab.size());
  LogitsVector<float> logits(n);
  const auto segments = parse_script(decoder.script);
  std::size_t seg = 0, literal_pos = 0, placeholder_steps = 0;
  ContextParser shadow(profile);
  const auto eos = vocab.eos_id();

  EpisodeResult out;
  for (std::size_t t = 0; t < max_tokens; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      logits[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * decoder.logit_range);
    }
    const double u = rng.uniform();

    const LogitsMask* mask = nullptr;
    LogitsVector<float> masked;
    if (session) {
      const bool zone = session->in_intervention_zone();
      const auto t0 = Clock::now();
      mask = &session->compute_mask();
      out.mask_micros.push_back(seconds_since(t0) * 1e6);
      masked = apply_mask(logits, *mask);
      if (zone) {
        ++out.zone_steps;
      } else if (std::memcmp(masked.data(), logits.data(), sizeof(float) * static_cast<std::size_t>(n)) != 0) {
        ++out.identity_violations;
      }
      Eigen::Index raw_top = 0, masked_top = 0;
      logits.maxCoeff(&raw_top);
      masked.maxCoeff(&masked_top);
      if (mask->bits[raw_top] && masked_top != raw_top) ++out.argmax_violations;
    } else {
      masked = logits;
    }

    std::optional<TokenId> forced;
    const bool literal = seg < segments.size() && !segments[seg].placeholder;
    if (literal) {
      forced = longest_prefix_token(trie, std::string_view(segments[seg].text).substr(literal_pos), mask);
    }
    const TokenId tok = forced ? *forced : sample(masked, decoder.temperature, u);

    std::vector<RegionEvent> events;
    bool finished = false;
    if (session) {
      auto res = session->observe_token(tok);
      events = std::move(res.events);
      finished = res.finished;
    } else if (eos && tok == *eos) {
      events = shadow.finish();
      finished = true;
    } else {
      shadow.feed(vocab.surface(tok), events);
    }
    out.tokens.push_back(tok);
    out.text += vocab.surface(tok);
    const bool closed_name = std::any_of(events.begin(), events.end(), [](const RegionEvent& e) {
      return e.kind == RegionEvent::Kind::ExitPackageName;
    });
    out.events.insert(out.events.end(), std::make_move_iterator(events.begin()),
                      std::make_move_iterator(events.end()));
    if (finished) {
      out.hit_eos = true;
      break;
    }

    if (forced) {
      literal_pos += vocab.surface(tok).size();
      if (literal_pos >= segments[seg].text.size()) {
        ++seg;
        literal_pos = 0;
      }
    } else if (seg < segments.size() && segments[seg].placeholder) {
      if (closed_name || ++placeholder_steps >= decoder.placeholder_budget) {
        ++seg;
        placeholder_steps = 0;
      }
    }
  }
  if (!out.hit_eos) {
    // Close the stream so that a name still open at the token limit is reported.
    if (!session) {
      auto tail = shadow.finish();
      out.events.insert(out.events.end(), tail.begin(), tail.end());
    }
  }
  return out;
}

Vocabulary toy_vocabulary() {
  std::vector<std::string> tokens;
  std::unordered_set<std::string> seen;
  auto add = [&](std::string s) {
    if (seen.insert(s).second) tokens.push_back(std::move(s));
  };
  tokens.push_back("");  // 0: eos
  tokens.push_back("");  // 1: bos
  tokens.push_back(std::string(1, static_cast<char>(0xE2)));  // byte-fallback pieces
  tokens.push_back(std::string(1, static_cast<char>(0x80)));

  for (char c = 'a'; c <= 'z'; ++c) add(std::string(1, c));
  for (char c = 'A'; c <= 'Z'; ++c) add(std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) add(std::string(1, c));
  for (const char* s : {"-", "_", "."}) add(s);

  for (const char* s : {" ", "  ", "    ", "\n", "\n\n", "\t", " \n", "=", "==", ">=", "<=", "<", ">",
                        "!", "!=", "~=", "[", "]", "~", ";", "'", "\"", "\r\n"}) {
    add(s);
  }
  for (const char* s : {",", ":", "(", ")", "{", "}", "/", "#", "*", "`", "@", "$", "%", "^", "&", "|",
                        "+", "?", "\\", "```", "~~~", "```bash", "```python", "```sh", "```\n", "\n```",
                        "\n```\n", "**", "# ", "//", ":\n", ".\n", "),", "()", "[]"}) {
    add(s);
  }
  for (const char* s : {"pip", " pip", "pip3", "install", " install", "python", " python", " -m", "-m",
                        "-U", " -U", "--upgrade", " --upgrade", "-r", " -q", "--user", " --user",
                        "conda", "npm", " i", "import", " import", "from", " from", "def", "print"}) {
    add(s);
  }
  for (const char* s : {" the", " to", " a", " and", " of", " you", " can", " it", " with", " for",
                        " is", " this", " use", " run", " package", " library", " install", " first",
                        " numpy", " requests", " pandas", " flask", " django", " scipy", " torch",
                        " protobuf", " pillow", " Pillow", "You", "To", "First", "Then", "Note"}) {
    add(s);
  }
  for (const char* s : {"py", "num", "numpy", "lib", "django", "flask", "requests", "torch", "data", "test",
                        "utils", "core", "-py", "py-", "python-", "django-", "flask-", "pytest", "pandas",
                        "scipy", "protobuf", "google", "proto", "buf", "pillow", "Pillow", "yaml", "json",
                        "http", "client", "server", "api", "sdk", "tools", "plugin", "async", "io", "aws",
                        "azure", "cloud", "ml", "nn", "cli", "db", "sql", "web", "net", "log", "auth",
                        "ing", "tion", "ment", "able", "er", "est", "ize", "ify", "lab", "kit", "dev",
                        "-cli", "-sdk", "-api", "_utils", ".py", "2", "3", "-2", "v2", "ng"}) {
    add(s);
  }
  // Mixed pieces: name characters followed by other text.
  for (const char* s : {"py\n", "numpy\n", "s,", "x)", "a:", "py`", "1)", "e/", "io,", "n(", "t*"}) {
    add(s);
  }
  const char* frequent = "aeinorstlcdpmuhgbyfkvwxzjq";
  for (int i = 0; i < 26; ++i) {
    for (int j = 0; j < 26; ++j) {
      add(std::string{frequent[i], frequent[j]});
    }
  }
  for (const char* s : {"and", "ent", "ion", "ter", "for", "res", "con", "pro", "per", "str", "set", "get",
                        "app", "run", "opt", "img", "cv", "tf", "pt", "gpu", "cpu", "url", "xml", "csv"}) {
    add(s);
  }
  return Vocabulary(std::move(tokens), {0, 1}, TokenId{0});
}

Vocabulary small_vocabulary() {
  std::vector<std::string> tokens{""};
  for (char c = 'a'; c <= 'z'; ++c) tokens.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) tokens.emplace_back(1, c);
  for (const char* s : {"-", ".", "_", " ", "\n", "=", "==", ">=", ";", "`", "```", "\\", "#", "~", ",",
                        ":", "pip", " install", "install", "py", "num", "-m", "-U", "```bash", "\n```",
                        "requests", "lib"}) {
    tokens.emplace_back(s);
  }
  return Vocabulary(std::move(tokens), {0}, TokenId{0});
}

std::vector<std::string> synthetic_names(std::size_t count, std::uint64_t seed) {
  static constexpr char kAlnum[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  Rng rng(seed);
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(count);
  seen.reserve(count * 2);
  while (out.size() < count) {
    const std::size_t len = 3 + rng.below(28);
    std::string s(len, 'a');
    for (std::size_t i = 0; i < len; ++i) {
      const bool edge = i == 0 || i + 1 == len;
      if (!edge && rng.below(12) == 0 && s[i - 1] != '-') {
        s[i] = '-';
      } else {
        s[i] = kAlnum[rng.below(36)];
      }
    }
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

const std::vector<std::string>& fuzz_scripts() {
  static const std::vector<std::string> scripts = {
      "```bash\npip install {}\n```\n",
      "You can install them:\n\n```\npip install -U {} {}\n```\n",
      "```sh\npip3 install {} \\\n    {}\n```\n",
      "~~~\npython -m pip install --upgrade {} {} {}\n~~~\n",
      "```\n# setup\npip install {}==1.0 {}\n```\nThen run it.\n",
      "```python\nimport os\n```\n\n```bash\npip install {} {}\n",
      "",
  };
  return scripts;
}

std::string FuzzReport::to_json() const {
  nlohmann::ordered_json j;
  j["episodes"] = episodes;
  j["steps"] = steps;
  j["zone_steps"] = zone_steps;
  j["names_emitted"] = names_emitted;
  j["invalid_names"] = invalid_names;
  j["abandoned_names"] = abandoned_names;
  j["dead_ends"] = dead_ends;
  j["identity_violations"] = identity_violations;
  j["argmax_violations"] = argmax_violations;
  return j.dump(2);
}

FuzzReport fuzz(const PackageList& list, const Dfa& dfa, const TokenTrie& trie, const Vocabulary& vocab,
                const EcosystemProfile& profile, const FuzzConfig& config) {
  FuzzReport report;
  const auto& scripts = fuzz_scripts();
  std::uint64_t seed_state = config.seed;
  for (std::size_t e = 0; e < config.episodes; ++e) {
    SimDecoder dec;
    dec.seed = splitmix64(seed_state);
    dec.vocab = &vocab;
    dec.temperature = config.temperature;
    dec.script = scripts[e % scripts.size()];
    GuardSession session(dfa, trie, vocab, profile);
    auto res = run_episode(dec, &session, config.max_tokens, profile);
    ++report.episodes;
    report.steps += res.tokens.size();
    report.zone_steps += res.zone_steps;
    report.identity_violations += res.identity_violations;
    report.argmax_violations += res.argmax_violations;
    const auto dead_ends = session.stats().dead_ends;
    report.dead_ends += dead_ends;
    for (const auto& ev : res.events) {
      if (ev.kind != RegionEvent::Kind::ExitPackageName) continue;
      ++report.names_emitted;
      if (ev.accepted) {
        if (!list.contains(ev.name)) ++report.invalid_names;
      } else {
        // Only the dead-end policy may abandon a name.
        ++report.abandoned_names;
        if (dead_ends == 0) ++report.invalid_names;
      }
    }
  }
  return report;
}

LatencyStats summarize(std::vector<double> micros) {
  LatencyStats s;
  s.samples = micros.size();
  if (micros.empty()) return s;
  std::sort(micros.begin(), micros.end());
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(micros.size()))) - 1;
    return micros[std::min(idx, micros.size() - 1)];
  };
  s.p50 = at(0.50);
  s.p95 = at(0.95);
  s.max = micros.back();
  return s;
}

std::vector<BenchReport> bench_scaling(const BenchConfig& config, const Vocabulary& vocab,
                                       const EcosystemProfile& profile) {
  namespace fs = std::filesystem;
  fs::path dir = config.work_dir;
  bool own_dir = false;
  if (dir.empty()) {
    dir = fs::temp_directory_path() / ("pkgguard-bench-" + std::to_string(config.seed) + "-" +
                                       std::to_string(Clock::now().time_since_epoch().count()));
    own_dir = true;
  }
  fs::create_directories(dir);
  const TokenTrie trie = build_token_trie(vocab);
  const std::size_t repeats = std::max<std::size_t>(1, config.repeats);
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };

  std::vector<BenchReport> reports;
  for (std::size_t size : config.sizes) {
    BenchReport r;
    r.list_size = size;
    const auto list_path = dir / ("names-" + std::to_string(size) + ".txt");
    {
      std::ofstream out(list_path, std::ios::binary);
      for (const auto& n : synthetic_names(size, config.seed ^ size)) out << n << '\n';
    }
    LoadOptions opts;
    opts.normalize = true;

    std::vector<double> construct, build_only, load;
    Dfa dfa;
    PackageList list;
    for (std::size_t k = 0; k < repeats; ++k) {
      auto t0 = Clock::now();
      list = load_list(list_path, opts);
      auto t1 = Clock::now();
      dfa = build_dfa(list);
      construct.push_back(seconds_since(t0));
      build_only.push_back(seconds_since(t1));
    }
    const auto ckpt = dir / ("names-" + std::to_string(size) + ".pkgdfa");
    r.checkpoint_bytes = save_checkpoint(dfa, ckpt);
    for (std::size_t k = 0; k < repeats; ++k) {
      auto t0 = Clock::now();
      Dfa loaded = load_checkpoint(ckpt);
      load.push_back(seconds_since(t0));
    }
    r.states = dfa.state_count();
    r.construction_seconds = median(construct);
    r.dfa_build_seconds = median(build_only);
    r.load_seconds = median(load);

    std::vector<double> setup, micros;
    const auto& scripts = fuzz_scripts();
    for (std::size_t e = 0; e < config.episodes; ++e) {
      auto t0 = Clock::now();
      GuardSession session(dfa, trie, vocab, profile);
      setup.push_back(seconds_since(t0) * 1e6);
      SimDecoder dec;
      dec.seed = config.seed * 1000003 + e;
      dec.vocab = &vocab;
      dec.script = scripts[e % scripts.size()];
      auto res = run_episode(dec, &session, 64, profile);
      micros.insert(micros.end(), res.mask_micros.begin(), res.mask_micros.end());
    }
    r.session_setup_micros = median(setup);
    r.mask_latency = summarize(std::move(micros));
    reports.push_back(r);
  }
  if (own_dir) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  return reports;
}

std::string to_json(const std::vector<BenchReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["list_size"] = r.list_size;
    j["states"] = r.states;
    j["construction_seconds"] = r.construction_seconds;
    j["dfa_build_seconds"] = r.dfa_build_seconds;
    j["load_seconds"] = r.load_seconds;
    j["load_speedup"] = r.load_seconds > 0 ? r.construction_seconds / r.load_seconds : 0.0;
    j["checkpoint_bytes"] = r.checkpoint_bytes;
    j["session_setup_us"] = r.session_setup_micros;
    j["mask_latency_us"] = {{"p50", r.mask_latency.p50},
                            {"p95", r.mask_latency.p95},
                            {"max", r.mask_latency.max},
                            {"samples", r.mask_latency.samples}};
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace pkgguard::sim
