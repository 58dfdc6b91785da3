#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pkgguard/context_parser.hpp"
#include "pkgguard/package_list.hpp"

namespace pkgguard {

struct Occurrence {
  std::string name;
  std::size_t offset = 0;
};

struct Response {
  std::string id;
  std::vector<Occurrence> packages;
};

struct Transcript {
  std::vector<Response> responses;
};

/// Hallucination statistics over a transcript.
///
/// phr = p_hall / p_total and rhr = (responses with a hallucination) / responses;
/// both are 0 for empty inputs. p_hall_unique counts distinct list keys.
struct MetricsReport {
  std::size_t p_total = 0;
  std::size_t p_hall = 0;
  std::size_t p_hall_unique = 0;
  std::size_t responses = 0;
  std::size_t responses_with_hall = 0;
  double phr = 0.0;
  double rhr = 0.0;

  std::string to_json() const;
};

MetricsReport score(const Transcript& transcript, const PackageList& oracle);

/// Offline re-parse of a stored response: every package name that appears in an
/// install command.
Response extract_from_text(std::string_view raw_response, const EcosystemProfile& profile,
                           ParserOptions options = {});

/// JSON lines, one `{"id": ..., "text": ...}` object per response.
Transcript read_transcripts(std::istream& in, const EcosystemProfile& profile, ParserOptions options = {});
Transcript read_transcripts(const std::filesystem::path& path, const EcosystemProfile& profile,
                            ParserOptions options = {});

}  // namespace pkgguard
