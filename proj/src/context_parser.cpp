#include "pkgguard/context_parser.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace pkgguard {

namespace {

constexpr bool is_blank(char c) noexcept { return c == ' ' || c == '\t' || c == '\r'; }
constexpr bool is_quote(char c) noexcept { return c == '\'' || c == '"'; }
constexpr bool is_command_break(char c) noexcept { return c == ';' || c == '&' || c == '|'; }

const std::string kPypiTerminators = " \t\r\n=<>![~;'\"";

}  // namespace

void EcosystemProfile::validate() const {
  if (install_prefixes.empty()) throw ProfileError("profile '" + name + "' has no install prefixes");
  if (install_prefixes.size() > kMaxPrefixes) {
    throw ProfileError("profile '" + name + "' has more than 16 install prefixes");
  }
  for (const auto& p : install_prefixes) {
    if (p.empty() || is_blank(p.front()) || is_blank(p.back()) || p.find('\n') != std::string::npos) {
      throw ProfileError("install prefix '" + p + "' must be a single trimmed line");
    }
  }
  for (char c : name_terminators) {
    if (is_name_char(c)) {
      throw ProfileError(std::string("terminator '") + c + "' is a package-name character");
    }
  }
  for (char c : {' ', '\n'}) {
    if (name_terminators.find(c) == std::string::npos) {
      throw ProfileError("terminators must include space and newline");
    }
  }
  if (fences.size() > 16) throw ProfileError("too many fence delimiters");
  for (const auto& f : fences) {
    if (f.empty() || f.find_first_of(" \t\r\n") != std::string::npos) {
      throw ProfileError("fence delimiter must be non-empty and blank-free");
    }
  }
}

EcosystemProfile builtin_profile(std::string_view name) {
  EcosystemProfile p;
  p.name = std::string(name);
  p.fences = {"```", "~~~"};
  p.name_terminators = kPypiTerminators;
  if (name == "pypi") {
    p.install_prefixes = {"pip install", "pip3 install", "python -m pip install"};
  } else if (name == "conda") {
    p.install_prefixes = {"conda install"};
  } else if (name == "npm") {
    p.install_prefixes = {"npm install", "npm i"};
    p.name_terminators += '@';
  } else {
    throw ProfileError("unknown profile: " + std::string(name));
  }
  return p;
}

std::vector<std::string> builtin_profile_names() { return {"pypi", "conda", "npm"}; }

EcosystemProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProfileError("cannot open profile: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    EcosystemProfile p;
    p.name = j.at("name").get<std::string>();
    p.install_prefixes = j.at("install_prefixes").get<std::vector<std::string>>();
    p.name_terminators = j.value("name_terminators", kPypiTerminators);
    p.fences = j.value("fences", std::vector<std::string>{"```", "~~~"});
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ProfileError("bad profile " + path.string() + ": " + e.what());
  }
}

const char* to_string(RegionEvent::Kind k) noexcept {
  switch (k) {
    case RegionEvent::Kind::EnterCode: return "EnterCode";
    case RegionEvent::Kind::ExitCode: return "ExitCode";
    case RegionEvent::Kind::EnterPackageName: return "EnterPackageName";
    case RegionEvent::Kind::ExitPackageName: return "ExitPackageName";
    case RegionEvent::Kind::EmptyInstallCommand: return "EmptyInstallCommand";
  }
  return "?";
}

const char* to_string(Region r) noexcept {
  switch (r) {
    case Region::NaturalLanguage: return "NaturalLanguage";
    case Region::CodeOrdinaryLine: return "CodeOrdinaryLine";
    case Region::InstallCmdPrefixMatching: return "InstallCmdPrefixMatching";
    case Region::InstallCmdFlags: return "InstallCmdFlags";
    case Region::PackageName: return "PackageName";
    case Region::BetweenPackageNames: return "BetweenPackageNames";
    case Region::VersionSuffix: return "VersionSuffix";
  }
  return "?";
}

ContextParser::ContextParser(const EcosystemProfile& profile, const Dfa* dfa, ParserOptions options)
    : profile_(std::make_shared<const EcosystemProfile>(profile)), dfa_(dfa), options_(options) {
  profile_->validate();
  reset_line();
}

std::vector<RegionEvent> ContextParser::feed(std::string_view text) {
  std::vector<RegionEvent> events;
  feed(text, events);
  return events;
}

void ContextParser::feed(std::string_view text, std::vector<RegionEvent>& events) {
  if (finished_) throw std::logic_error("feed after finish");
  for (char c : text) process(c, &events);
}

bool ContextParser::probe(std::string_view text) const {
  ContextParser copy = *this;
  copy.violation_ = false;
  for (char c : text) {
    copy.process(c, nullptr);
    if (copy.violation_) return false;
  }
  return true;
}

bool ContextParser::can_end_stream() const noexcept {
  if (region_ != Region::PackageName) return true;
  return dfa_ != nullptr && !name_dead_ && dfa_->is_accepting(cursor_.state);
}

std::optional<DfaCursor> ContextParser::current_cursor() const noexcept {
  if (dfa_ == nullptr) return std::nullopt;
  if (region_ == Region::PackageName) {
    if (name_dead_) return std::nullopt;
    return cursor_;
  }
  if (command_active_ && region_ == Region::BetweenPackageNames) return DfaCursor::at_root(*dfa_);
  return std::nullopt;
}

std::vector<RegionEvent> ContextParser::finish() {
  std::vector<RegionEvent> events;
  if (finished_) return events;
  if (region_ == Region::PackageName) close_name(&events);
  if ((prefix_complete_ && !command_active_) || (command_active_ && names_on_line_ == 0)) {
    events.push_back({RegionEvent::Kind::EmptyInstallCommand, {}, false, offset_});
  }
  command_active_ = false;
  prefix_complete_ = false;
  if (fence_open_) {
    fence_open_ = false;
    events.push_back({RegionEvent::Kind::ExitCode, {}, false, offset_});
  }
  region_ = Region::NaturalLanguage;
  finished_ = true;
  return events;
}

void ContextParser::reset_line() {
  line_kind_ = LineKind::Undecided;
  leading_ = true;
  fence_progress_ = 0;
  fence_alive_ = 0;
  if (fence_open_) {
    fence_alive_ = static_cast<std::uint16_t>(1u << fence_index_);
  } else {
    for (std::size_t i = 0; i < profile_->fences.size(); ++i) fence_alive_ |= static_cast<std::uint16_t>(1u << i);
  }
  prefix_pos_.fill(-1);
  if (prefixes_enabled()) {
    for (std::size_t i = 0; i < profile_->install_prefixes.size(); ++i) prefix_pos_[i] = 0;
  }
  prefix_complete_ = false;
  command_active_ = false;
  continuation_pending_ = false;
  names_on_line_ = 0;
  region_ = base_region();
}

void ContextParser::process(char c, std::vector<RegionEvent>* events) {
  if (c == '\n') {
    end_line(events);
  } else {
    switch (line_kind_) {
      case LineKind::Undecided: decide(c, events); break;
      case LineKind::Install: command_char(c, events); break;
      case LineKind::Fence:
      case LineKind::Ordinary: break;
    }
  }
  ++offset_;
}

void ContextParser::end_line(std::vector<RegionEvent>* events) {
  if (region_ == Region::PackageName) close_name(events);
  if (command_active_ && continuation_pending_) {
    continuation_pending_ = false;
    region_ = Region::BetweenPackageNames;
    return;
  }
  if (((prefix_complete_ && !command_active_) || (command_active_ && names_on_line_ == 0)) && events) {
    events->push_back({RegionEvent::Kind::EmptyInstallCommand, {}, false, offset_});
  }
  reset_line();
}

void ContextParser::decide(char c, std::vector<RegionEvent>* events) {
  if (leading_ && is_blank(c)) return;
  leading_ = false;

  if (fence_alive_ != 0) {
    const auto& fences = profile_->fences;
    bool closed_line = false;
    for (std::size_t i = 0; i < fences.size(); ++i) {
      const auto bit = static_cast<std::uint16_t>(1u << i);
      if (!(fence_alive_ & bit)) continue;
      if (fences[i][fence_progress_] != c) {
        fence_alive_ &= static_cast<std::uint16_t>(~bit);
      } else if (fence_progress_ + 1u == fences[i].size() && !closed_line) {
        closed_line = true;
        line_kind_ = LineKind::Fence;
        if (!fence_open_) {
          fence_open_ = true;
          fence_index_ = static_cast<std::uint8_t>(i);
          if (events) events->push_back({RegionEvent::Kind::EnterCode, {}, false, offset_});
        } else {
          fence_open_ = false;
          if (events) events->push_back({RegionEvent::Kind::ExitCode, {}, false, offset_});
        }
        region_ = base_region();
      }
    }
    if (closed_line) {
      fence_alive_ = 0;
      prefix_pos_.fill(-1);
      return;
    }
    ++fence_progress_;
  }

  const auto& prefixes = profile_->install_prefixes;
  if (prefix_complete_) {
    if (is_blank(c)) {
      prefix_complete_ = false;
      command_active_ = true;
      line_kind_ = LineKind::Install;
      region_ = Region::BetweenPackageNames;
      names_on_line_ = 0;
      return;
    }
    prefix_complete_ = false;
  }
  bool alive = false;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    auto& pos = prefix_pos_[i];
    if (pos < 0) continue;
    const auto& pre = prefixes[i];
    const auto p = static_cast<std::size_t>(pos);
    if (p < pre.size() && pre[p] == ' ' && is_blank(c)) {
      ++pos;
    } else if (p < pre.size() && pre[p] == c) {
      ++pos;
    } else if (is_blank(c) && p > 0 && p < pre.size() && pre[p - 1] == ' ') {
      // extra blank inside a run
    } else {
      pos = -1;
      continue;
    }
    alive = true;
    if (static_cast<std::size_t>(pos) == pre.size()) prefix_complete_ = true;
  }
  if (alive) {
    region_ = Region::InstallCmdPrefixMatching;
  } else if (fence_alive_ == 0) {
    line_kind_ = LineKind::Ordinary;
    region_ = base_region();
  }
}

void ContextParser::end_command_rest_ordinary() {
  command_active_ = false;
  continuation_pending_ = false;
  line_kind_ = LineKind::Ordinary;
  region_ = base_region();
}

void ContextParser::command_char(char c, std::vector<RegionEvent>* events) {
  switch (region_) {
    case Region::BetweenPackageNames:
      if (continuation_pending_) {
        if (!is_blank(c)) end_command_rest_ordinary();
        return;
      }
      if (is_blank(c) || is_quote(c)) return;
      if (c == '\\') {
        continuation_pending_ = true;
      } else if (c == '-') {
        region_ = Region::InstallCmdFlags;
      } else if (is_name_char(c)) {
        begin_name(events);
        name_char(c);
      } else {
        end_command_rest_ordinary();
      }
      return;
    case Region::InstallCmdFlags:
      if (is_blank(c)) region_ = Region::BetweenPackageNames;
      return;
    case Region::PackageName:
      if (is_name_char(c)) {
        name_char(c);
        return;
      }
      if (profile_->name_terminators.find(c) == std::string::npos) {
        // Not a legal way to end a name.
        if (dfa_) violation_ = true;
        close_name(events);
        end_command_rest_ordinary();
        return;
      }
      close_name(events);
      if (is_blank(c) || is_quote(c)) {
        region_ = Region::BetweenPackageNames;
      } else if (is_command_break(c)) {
        end_command_rest_ordinary();
      } else {
        region_ = Region::VersionSuffix;
      }
      return;
    case Region::VersionSuffix:
      if (is_blank(c) || is_quote(c)) {
        region_ = Region::BetweenPackageNames;
      } else if (is_command_break(c)) {
        end_command_rest_ordinary();
      }
      return;
    default:
      return;
  }
}

void ContextParser::begin_name(std::vector<RegionEvent>* events) {
  region_ = Region::PackageName;
  name_.clear();
  name_offset_ = offset_;
  name_dead_ = false;
  if (dfa_) cursor_ = DfaCursor::at_root(*dfa_);
  if (events) events->push_back({RegionEvent::Kind::EnterPackageName, {}, false, offset_});
}

void ContextParser::name_char(char c) {
  name_.push_back(c);
  if (dfa_ == nullptr || name_dead_) return;
  ++dfa_steps_;
  if (step(cursor_, c) == StepResult::Infeasible) {
    name_dead_ = true;
    violation_ = true;
  }
}

void ContextParser::close_name(std::vector<RegionEvent>* events) {
  const bool accepted = dfa_ != nullptr && !name_dead_ && dfa_->is_accepting(cursor_.state);
  if (dfa_ && !accepted) violation_ = true;
  ++names_on_line_;
  if (events) {
    events->push_back({RegionEvent::Kind::ExitPackageName, std::move(name_), accepted, name_offset_});
  }
  name_.clear();
  region_ = Region::BetweenPackageNames;
}

}  // namespace pkgguard
