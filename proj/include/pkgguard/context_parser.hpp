#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pkgguard/dfa.hpp"

namespace pkgguard {

class ProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How one package ecosystem spells installation commands.
struct EcosystemProfile {
  static constexpr std::size_t kMaxPrefixes = 16;

  std::string name;
  /// Literal command prefixes; a space matches any run of blanks.
  std::vector<std::string> install_prefixes;
  /// Characters that close a package name. Must not contain name characters.
  std::string name_terminators;
  /// Line-initial delimiters that open and close code fences.
  std::vector<std::string> fences;

  /// Throws ProfileError when the profile cannot be used.
  void validate() const;
};

/// pypi, conda or npm.
EcosystemProfile builtin_profile(std::string_view name);
std::vector<std::string> builtin_profile_names();

/// JSON: {"name": ..., "install_prefixes": [...], "name_terminators": "...", "fences": [...]}.
/// Missing terminators and fences fall back to the pypi defaults.
EcosystemProfile load_profile(const std::filesystem::path& path);

struct RegionEvent {
  enum class Kind { EnterCode, ExitCode, EnterPackageName, ExitPackageName, EmptyInstallCommand };

  Kind kind;
  std::string name;       // ExitPackageName only
  bool accepted = false;  // ExitPackageName: the name is complete in the automaton
  std::size_t offset = 0; // stream offset of the event (name start for package names)

  friend bool operator==(const RegionEvent&, const RegionEvent&) = default;
};

const char* to_string(RegionEvent::Kind k) noexcept;

enum class Region {
  NaturalLanguage,
  CodeOrdinaryLine,
  InstallCmdPrefixMatching,
  InstallCmdFlags,
  PackageName,
  BetweenPackageNames,
  VersionSuffix,
};

const char* to_string(Region r) noexcept;

struct ParserOptions {
  /// Also treat a line-initial install prefix outside code fences as a command.
  bool bare_commands = false;
};

/// Streaming recognizer for install commands inside model output.
///
/// Text is interpreted as prose interleaved with fenced code blocks. Inside a code
/// block, a line that starts with an install prefix followed by a blank opens a
/// command; the blank-separated words after it are package names, except option
/// words (leading `-`). A name ends at a terminator character. Version specifiers
/// after a name pass through untouched. A trailing backslash continues the command
/// on the next line.
///
/// With an automaton attached, every name character is stepped through it and the
/// parser records a violation whenever a name leaves the automaton or ends outside an
/// accepting state. Without one, names are collected as plain strings.
///
/// The state is processed one character at a time, so the event sequence does not
/// depend on how the stream is chunked.
class ContextParser {
 public:
  explicit ContextParser(const EcosystemProfile& profile, const Dfa* dfa = nullptr,
                         ParserOptions options = {});

  std::vector<RegionEvent> feed(std::string_view text);
  void feed(std::string_view text, std::vector<RegionEvent>& events);

  /// End of stream: closes an open name and an unterminated fence.
  std::vector<RegionEvent> finish();

  /// True from the moment an install prefix is complete until the command line ends.
  bool in_intervention_zone() const noexcept { return command_active_ || prefix_complete_; }

  /// Live cursor inside a name, or the start cursor while waiting for the next name.
  std::optional<DfaCursor> current_cursor() const noexcept;

  Region region() const noexcept { return region_; }
  int fence_depth() const noexcept { return fence_open_ ? 1 : 0; }
  bool finished() const noexcept { return finished_; }
  bool violated() const noexcept { return violation_; }
  std::size_t offset() const noexcept { return offset_; }
  std::size_t names_on_line() const noexcept { return names_on_line_; }
  const std::string& pending_name() const noexcept { return name_; }

  /// Number of automaton transitions this parser has requested.
  std::uint64_t dfa_steps() const noexcept { return dfa_steps_; }

  /// Whether feeding `text` next would keep every name on an automaton path and close
  /// names only in accepting states. Does not modify this parser.
  bool probe(std::string_view text) const;

  /// Whether the stream may end here without leaving a partial name behind.
  bool can_end_stream() const noexcept;

  const EcosystemProfile& profile() const noexcept { return *profile_; }

 private:
  enum class LineKind : std::uint8_t { Undecided, Fence, Install, Ordinary };

  void process(char c, std::vector<RegionEvent>* events);
  void decide(char c, std::vector<RegionEvent>* events);
  void command_char(char c, std::vector<RegionEvent>* events);
  void begin_name(std::vector<RegionEvent>* events);
  void name_char(char c);
  void close_name(std::vector<RegionEvent>* events);
  void end_command_rest_ordinary();
  void end_line(std::vector<RegionEvent>* events);
  void reset_line();
  Region base_region() const noexcept {
    return fence_open_ ? Region::CodeOrdinaryLine : Region::NaturalLanguage;
  }
  bool prefixes_enabled() const noexcept { return fence_open_ || options_.bare_commands; }

  std::shared_ptr<const EcosystemProfile> profile_;  // shared by copies made in probe()
  const Dfa* dfa_;
  ParserOptions options_;

  Region region_ = Region::NaturalLanguage;
  LineKind line_kind_ = LineKind::Undecided;
  bool fence_open_ = false;
  std::uint8_t fence_index_ = 0;  // which delimiter opened the fence
  std::uint16_t fence_alive_ = 0; // bitmask of delimiters still matching this line
  std::uint16_t fence_progress_ = 0;
  bool leading_ = true;
  std::array<std::int16_t, EcosystemProfile::kMaxPrefixes> prefix_pos_{};
  bool prefix_complete_ = false;
  bool command_active_ = false;
  bool continuation_pending_ = false;
  std::size_t names_on_line_ = 0;

  std::string name_;
  std::size_t name_offset_ = 0;
  DfaCursor cursor_{};
  bool name_dead_ = false;

  std::size_t offset_ = 0;
  std::uint64_t dfa_steps_ = 0;
  bool violation_ = false;
  bool finished_ = false;
};

}  // namespace pkgguard
