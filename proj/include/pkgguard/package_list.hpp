#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pkgguard {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::string_view bytes);
std::string to_hex(const Sha256& digest);

/// Characters a registry name may contain: ASCII letters, digits, `-`, `_`, `.`.
constexpr bool is_name_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '_' || c == '.';
}

/// Lowercase and fold `_` / `.` to `-`. Identity on every other byte.
constexpr char fold_name_char(char c) noexcept {
  if (c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  if (c == '_' || c == '.') return '-';
  return c;
}

std::string normalize_name(std::string_view raw);

/// Strict UTF-8 check: rejects overlong forms, surrogates and truncated sequences.
bool valid_utf8(std::string_view bytes);

struct PackageName {
  std::string raw;
  std::string normalized;
};

class PackageListError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct LoadOptions {
  bool normalize = false;
  /// Abort on the first rejected line instead of skipping it.
  bool strict = false;
  std::string source_id;
};

/// Immutable, sorted, deduplicated allowlist of package names.
///
/// Entries are keyed by their normalized spelling when the list was built with
/// normalization, and by their raw spelling otherwise. The digest covers the
/// normalization mode and the sorted keys, so two lists compare equal exactly when
/// they accept the same candidates.
class PackageList {
 public:
  PackageList() = default;

  /// Builds a list from in-memory names. Names outside the registry alphabet throw.
  static PackageList from_names(const std::vector<std::string>& names, bool normalize,
                                std::string source_id = {});

  bool normalized() const noexcept { return normalized_; }
  const std::string& source_id() const noexcept { return source_id_; }
  const Sha256& digest() const noexcept { return digest_; }
  std::size_t count() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<PackageName>& entries() const noexcept { return entries_; }
  const std::vector<LoadDiagnostic>& diagnostics() const noexcept { return diagnostics_; }

  /// The lookup key of entry i (normalized or raw, depending on the list mode).
  const std::string& key(std::size_t i) const noexcept {
    return normalized_ ? entries_[i].normalized : entries_[i].raw;
  }

  /// Maps a candidate to the spelling used for lookup in this list.
  std::string key_of(std::string_view candidate) const;

  bool contains(std::string_view candidate) const;

  /// One key per line, preceded by a `#` header. Reloading with the same
  /// normalization mode reproduces this list exactly.
  void write_snapshot(std::ostream& out) const;

 private:
  friend PackageList load_list(std::istream& in, const LoadOptions& options);

  static PackageList finalize(std::vector<PackageName> entries, bool normalize,
                              std::string source_id, std::vector<LoadDiagnostic> diagnostics);

  std::vector<PackageName> entries_;
  std::vector<LoadDiagnostic> diagnostics_;
  std::string source_id_;
  Sha256 digest_{};
  bool normalized_ = false;
};

inline bool contains(const PackageList& list, std::string_view candidate) {
  return list.contains(candidate);
}

PackageList load_list(std::istream& in, const LoadOptions& options = {});
PackageList load_list(const std::filesystem::path& path, const LoadOptions& options = {});

void save_snapshot(const PackageList& list, const std::filesystem::path& path);

}  // namespace pkgguard
