#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pkgguard/dfa.hpp"

namespace pkgguard {

// Checkpoint layout, all integers little-endian:
//
//   magic           8 bytes  "PKGGDFA\0"
//   format_version  u32
//   flags           u32      bit 0: input characters are case/separator folded
//   list_digest     32 bytes SHA-256 of the package list
//   alphabet        u16 length, then that many bytes (sorted)
//   name_count      u32
//   state_count     u32
//   edge_count      u32
//   accepting       ceil(state_count / 8) bytes, bit s of byte s/8 (LSB first)
//   transitions     per state: varint n, then n x (u8 alphabet index,
//                   zigzag varint of target - source)
//   crc32           u32 over every preceding byte
//
// Varints are unsigned LEB128.

inline constexpr char kCheckpointMagic[8] = {'P', 'K', 'G', 'G', 'D', 'F', 'A', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, UnsupportedVersion, Checksum, StaleCache, Format };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind k) noexcept;

std::string encode_checkpoint(const Dfa& dfa);
Dfa decode_checkpoint(std::string_view bytes, const std::optional<Sha256>& expected_digest = std::nullopt);

/// Writes through a temporary file in the same directory and renames it into place.
std::size_t save_checkpoint(const Dfa& dfa, const std::filesystem::path& path);

Dfa load_checkpoint(const std::filesystem::path& path,
                    const std::optional<Sha256>& expected_digest = std::nullopt);

struct CacheResult {
  Dfa dfa;
  Sha256 list_digest{};
  std::filesystem::path checkpoint;
  bool built = false;
};

/// Path of the checkpoint for a list digest inside `cache_dir`.
std::filesystem::path checkpoint_path_for(const std::filesystem::path& cache_dir, const Sha256& digest);

/// Loads the checkpoint keyed by the list's digest, or builds and stores it.
///
/// An unreadable or stale checkpoint is rebuilt. Concurrent callers may both build;
/// the last rename wins and every caller gets an equivalent automaton.
CacheResult ensure_cache(const std::filesystem::path& list_path, const std::filesystem::path& cache_dir,
                         bool normalize);

}  // namespace pkgguard
