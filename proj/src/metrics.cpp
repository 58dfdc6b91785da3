#include "pkgguard/metrics.hpp"

#include <fstream>
#include <istream>
#include <unordered_set>

#include <json.hpp>

namespace pkgguard {

MetricsReport score(const Transcript& transcript, const PackageList& oracle) {
  MetricsReport r;
  std::unordered_set<std::string> unique;
  r.responses = transcript.responses.size();
  for (const auto& resp : transcript.responses) {
    bool any = false;
    for (const auto& occ : resp.packages) {
      ++r.p_total;
      if (!oracle.contains(occ.name)) {
        ++r.p_hall;
        any = true;
        unique.insert(oracle.key_of(occ.name));
      }
    }
    if (any) ++r.responses_with_hall;
  }
  r.p_hall_unique = unique.size();
  r.phr = r.p_total == 0 ? 0.0 : static_cast<double>(r.p_hall) / static_cast<double>(r.p_total);
  r.rhr = r.responses == 0 ? 0.0 : static_cast<double>(r.responses_with_hall) / static_cast<double>(r.responses);
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["p_total"] = p_total;
  j["p_hall"] = p_hall;
  j["p_hall_unique"] = p_hall_unique;
  j["phr"] = phr;
  j["rhr"] = rhr;
  j["responses"] = responses;
  return j.dump(2);
}

Response extract_from_text(std::string_view raw_response, const EcosystemProfile& profile,
                           ParserOptions options) {
  ContextParser parser(profile, nullptr, options);
  auto events = parser.feed(raw_response);
  auto tail = parser.finish();
  events.insert(events.end(), tail.begin(), tail.end());
  Response resp;
  for (auto& e : events) {
    if (e.kind == RegionEvent::Kind::ExitPackageName) resp.packages.push_back({std::move(e.name), e.offset});
  }
  return resp;
}

Transcript read_transcripts(std::istream& in, const EcosystemProfile& profile, ParserOptions options) {
  Transcript t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("transcripts line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw std::runtime_error("transcripts line " + std::to_string(lineno) + ": missing \"text\"");
    }
    Response r = extract_from_text(j["text"].get<std::string>(), profile, options);
    if (j.contains("id")) r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    t.responses.push_back(std::move(r));
  }
  return t;
}

Transcript read_transcripts(const std::filesystem::path& path, const EcosystemProfile& profile,
                            ParserOptions options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transcripts: " + path.string());
  return read_transcripts(in, profile, options);
}

}  // namespace pkgguard
