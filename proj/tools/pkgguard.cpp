#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pkgguard/checkpoint.hpp"
#include "pkgguard/metrics.hpp"
#include "pkgguard/sim.hpp"

using namespace pkgguard;
using json = nlohmann::ordered_json;

namespace {

EcosystemProfile resolve_profile(const std::string& arg) {
  for (const auto& n : builtin_profile_names()) {
    if (n == arg) return builtin_profile(arg);
  }
  return load_profile(arg);
}

Vocabulary resolve_vocab(const std::string& path) {
  return path.empty() ? sim::toy_vocabulary() : load_vocabulary(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pkgguard: package-name guard for constrained decoding"};
  app.require_subcommand(1);

  // list build
  auto* list_cmd = app.add_subcommand("list", "package lists")->require_subcommand(1);
  auto* list_build = list_cmd->add_subcommand("build", "validate a list and write a snapshot");
  std::string list_in, list_out;
  bool list_normalize = false, list_strict = false;
  list_build->add_option("input", list_in, "one name per line")->required()->check(CLI::ExistingFile);
  list_build->add_option("--out", list_out, "snapshot path")->required();
  list_build->add_flag("--normalize", list_normalize, "fold case and _/. to -");
  list_build->add_flag("--strict", list_strict, "fail on the first bad line");

  // vocab import
  auto* vocab_cmd = app.add_subcommand("vocab", "tokenizer vocabularies")->require_subcommand(1);
  auto* vocab_import = vocab_cmd->add_subcommand("import", "check a vocabulary and report its classes");
  std::string vocab_in, vocab_out;
  vocab_import->add_option("file", vocab_in)->required()->check(CLI::ExistingFile);
  vocab_import->add_option("--out", vocab_out, "rewrite as canonical JSON lines");
  auto* vocab_export = vocab_cmd->add_subcommand("export-toy", "write the built-in toy vocabulary");
  std::string toy_out;
  vocab_export->add_option("--out", toy_out)->required();

  // cache build / verify
  auto* cache_cmd = app.add_subcommand("cache", "automaton checkpoints")->require_subcommand(1);
  auto* cache_build = cache_cmd->add_subcommand("build", "compile a list into a checkpoint");
  std::string cache_list, cache_out;
  bool cache_normalize = false;
  cache_build->add_option("list", cache_list)->required()->check(CLI::ExistingFile);
  cache_build->add_option("--out", cache_out)->required();
  cache_build->add_flag("--normalize", cache_normalize);
  auto* cache_verify = cache_cmd->add_subcommand("verify", "check a checkpoint against a list");
  std::string verify_ckpt, verify_list;
  bool verify_normalize = false;
  cache_verify->add_option("checkpoint", verify_ckpt)->required()->check(CLI::ExistingFile);
  cache_verify->add_option("--list", verify_list)->required()->check(CLI::ExistingFile);
  cache_verify->add_flag("--normalize", verify_normalize);

  // score
  auto* score_cmd = app.add_subcommand("score", "hallucination rates of stored responses");
  std::string score_in, score_list, score_profile = "pypi";
  bool score_normalize = false, score_bare = false;
  score_cmd->add_option("transcripts", score_in)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--list", score_list)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--profile", score_profile, "pypi, conda, npm or a JSON file");
  score_cmd->add_flag("--normalize", score_normalize);
  score_cmd->add_flag("--bare-commands", score_bare, "also scan install lines outside code fences");

  // fuzz
  auto* fuzz_cmd = app.add_subcommand("fuzz", "guarded random decoding against a list");
  std::string fuzz_list, fuzz_vocab, fuzz_profile = "pypi";
  sim::FuzzConfig fuzz_cfg;
  bool fuzz_normalize = false;
  fuzz_cmd->add_option("--list", fuzz_list)->required()->check(CLI::ExistingFile);
  fuzz_cmd->add_option("--episodes", fuzz_cfg.episodes);
  fuzz_cmd->add_option("--seed", fuzz_cfg.seed);
  fuzz_cmd->add_option("--max-tokens", fuzz_cfg.max_tokens);
  fuzz_cmd->add_option("--temperature", fuzz_cfg.temperature);
  fuzz_cmd->add_option("--vocab", fuzz_vocab, "defaults to the built-in toy vocabulary");
  fuzz_cmd->add_option("--profile", fuzz_profile);
  fuzz_cmd->add_flag("--normalize", fuzz_normalize);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "construction, checkpoint and mask timings");
  sim::BenchConfig bench_cfg;
  std::string bench_vocab, bench_profile = "pypi", bench_dir;
  bench_cmd->add_option("--sizes", bench_cfg.sizes)->delimiter(',');
  bench_cmd->add_option("--seed", bench_cfg.seed);
  bench_cmd->add_option("--repeats", bench_cfg.repeats);
  bench_cmd->add_option("--episodes", bench_cfg.episodes);
  bench_cmd->add_option("--vocab", bench_vocab);
  bench_cmd->add_option("--profile", bench_profile);
  bench_cmd->add_option("--work-dir", bench_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_build->parsed()) {
      LoadOptions opts{list_normalize, list_strict, list_in};
      auto list = load_list(list_in, opts);
      save_snapshot(list, list_out);
      json j;
      j["names"] = list.count();
      j["normalized"] = list.normalized();
      j["digest"] = to_hex(list.digest());
      j["rejected"] = json::array();
      for (const auto& d : list.diagnostics()) j["rejected"].push_back({{"line", d.line}, {"message", d.message}});
      std::cout << j.dump(2) << '\n';
    } else if (vocab_import->parsed()) {
      auto vocab = load_vocabulary(vocab_in);
      auto trie = build_token_trie(vocab);
      std::size_t counts[4] = {0, 0, 0, 0};
      for (auto c : trie.classes()) ++counts[static_cast<int>(c)];
      json j;
      j["tokens"] = vocab.size();
      j["digest"] = to_hex(vocab.digest());
      j["eos"] = vocab.eos_id() ? json(*vocab.eos_id()) : json(nullptr);
      for (auto c : {TokenClass::NamePiece, TokenClass::Terminator, TokenClass::Mixed, TokenClass::Control}) {
        j["classes"][to_string(c)] = counts[static_cast<int>(c)];
      }
      if (!vocab_out.empty()) {
        std::ofstream out(vocab_out, std::ios::binary);
        vocab.write_jsonl(out);
      }
      std::cout << j.dump(2) << '\n';
    } else if (vocab_export->parsed()) {
      std::ofstream out(toy_out, std::ios::binary);
      sim::toy_vocabulary().write_jsonl(out);
    } else if (cache_build->parsed()) {
      LoadOptions opts;
      opts.normalize = cache_normalize;
      auto dfa = build_dfa(load_list(cache_list, opts));
      const auto bytes = save_checkpoint(dfa, cache_out);
      json j;
      j["states"] = dfa.state_count();
      j["names"] = dfa.name_count();
      j["bytes"] = bytes;
      j["digest"] = to_hex(dfa.list_digest());
      std::cout << j.dump(2) << '\n';
    } else if (cache_verify->parsed()) {
      LoadOptions opts;
      opts.normalize = verify_normalize;
      auto list = load_list(verify_list, opts);
      json j;
      try {
        auto dfa = load_checkpoint(verify_ckpt, list.digest());
        j["ok"] = true;
        j["states"] = dfa.state_count();
      } catch (const CheckpointError& e) {
        j["ok"] = false;
        j["error"] = to_string(e.kind());
        j["message"] = e.what();
      }
      std::cout << j.dump(2) << '\n';
      return j["ok"].get<bool>() ? 0 : 1;
    } else if (score_cmd->parsed()) {
      LoadOptions opts;
      opts.normalize = score_normalize;
      auto list = load_list(score_list, opts);
      ParserOptions popts;
      popts.bare_commands = score_bare;
      auto t = read_transcripts(score_in, resolve_profile(score_profile), popts);
      std::cout << score(t, list).to_json() << '\n';
    } else if (fuzz_cmd->parsed()) {
      LoadOptions opts;
      opts.normalize = fuzz_normalize;
      auto list = load_list(fuzz_list, opts);
      auto dfa = build_dfa(list);
      auto vocab = resolve_vocab(fuzz_vocab);
      const auto profile = resolve_profile(fuzz_profile);
      auto trie = build_token_trie(vocab, profile.name_terminators);
      auto report = sim::fuzz(list, dfa, trie, vocab, profile, fuzz_cfg);
      std::cout << report.to_json() << '\n';
      return report.invalid_names == 0 && report.identity_violations == 0 ? 0 : 1;
    } else if (bench_cmd->parsed()) {
      bench_cfg.work_dir = bench_dir;
      auto reports = sim::bench_scaling(bench_cfg, resolve_vocab(bench_vocab), resolve_profile(bench_profile));
      std::cout << sim::to_json(reports) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "pkgguard: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
