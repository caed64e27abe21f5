#pragma once

#include <string>

#include "json.hpp"
#include "nes/corpus.hpp"
#include "nes/retrieval.hpp"

namespace nes::json {

using Json = nlohmann::ordered_json;

inline Json to_json(const Sentence& s) {
  Json j;
  j["id"] = s.id;
  j["doc_id"] = s.doc_id;
  j["text"] = s.text;
  j["tokens"] = Json::array();
  for (const auto& t : s.tokens)
    j["tokens"].push_back({{"surface", t.surface}, {"lemma", t.lemma}, {"pos", t.pos}, {"head", t.head}, {"deprel", t.deprel}});
  j["entities"] = Json::array();
  for (const auto& e : s.entities) j["entities"].push_back({{"start", e.start}, {"end", e.end}, {"label", e.label}});
  return j;
}

inline Sentence sentence_from_json(const nlohmann::json& j) {
  Sentence s;
  s.id = j.at("id").get<SentenceId>();
  s.doc_id = j.at("doc_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  for (const auto& t : j.at("tokens"))
    s.tokens.push_back({t.at("surface").get<std::string>(), t.at("lemma").get<std::string>(), t.at("pos").get<std::string>(),
                        t.at("head").get<std::int32_t>(), t.at("deprel").get<std::string>()});
  for (const auto& e : j.at("entities"))
    s.entities.push_back({e.at("start").get<std::uint32_t>(), e.at("end").get<std::uint32_t>(), e.at("label").get<std::string>()});
  return s;
}

inline const char* source_name(ResultSource s) { return s == ResultSource::symbolic ? "symbolic" : "neural"; }

inline Json to_json(const ExtractionResult& r) {
  Json j;
  j["sentence_id"] = r.sentence_id;
  j["source"] = source_name(r.source);
  j["distance"] = r.distance ? Json(*r.distance) : Json();
  j["captures"] = Json::object();
  for (const auto& [name, v] : r.captures) j["captures"][name] = {{"span", {v.span.start, v.span.end}}, {"text", v.text}};
  j["collision"] = r.collision;
  return j;
}

inline ExtractionResult result_from_json(const nlohmann::json& j) {
  ExtractionResult r;
  r.sentence_id = j.at("sentence_id").get<SentenceId>();
  r.source = j.at("source").get<std::string>() == "neural" ? ResultSource::neural : ResultSource::symbolic;
  if (j.contains("distance") && !j["distance"].is_null()) r.distance = j["distance"].get<double>();
  for (const auto& [name, v] : j.at("captures").items())
    r.captures[name] = {{v.at("span")[0].get<std::uint32_t>(), v.at("span")[1].get<std::uint32_t>()},
                        v.at("text").get<std::string>()};
  r.collision = j.value("collision", false);
  return r;
}

inline Json to_json(const SearchSummary& s) {
  Json j;
  j["symbolic"] = s.symbolic;
  j["neural"] = s.neural;
  j["filtered"] = s.filtered;
  j["pool_size"] = s.pool_size;
  j["elapsed_ms"] = s.elapsed_ms;
  j["aborted"] = s.aborted;
  return j;
}

inline Json result_record(const ExtractionResult& r) {
  Json j;
  j["type"] = "result";
  j.update(to_json(r));
  return j;
}

inline Json summary_record(const SearchSummary& s, const std::string& session = {}) {
  Json j;
  j["type"] = "summary";
  if (!session.empty()) j["session"] = session;
  j.update(to_json(s));
  return j;
}

inline Json to_record(const StreamRecord& rec, const std::string& session = {}) {
  if (const auto* r = std::get_if<ExtractionResult>(&rec)) return result_record(*r);
  return summary_record(std::get<SearchSummary>(rec), session);
}

inline Json to_json(const CaptureTable& t) {
  Json j;
  j["slots"] = Json::object();
  for (const auto& [slot, values] : t.slots) {
    auto& arr = j["slots"][slot] = Json::array();
    for (const auto& v : values) arr.push_back({{"value", v.value}, {"count", v.count}});
  }
  j["pairs"] = Json::array();
  for (const auto& [key, values] : t.pairs) {
    Json p;
    p["slots"] = {key.first, key.second};
    p["values"] = Json::array();
    for (const auto& v : values) p["values"].push_back({{"first", v.first}, {"second", v.second}, {"count", v.count}});
    j["pairs"].push_back(std::move(p));
  }
  return j;
}

inline const char* mode_name(CaptureMode m) { return m == CaptureMode::token ? "token" : "subtree"; }

inline CaptureMode mode_from_name(const std::string& s) {
  if (s == "token") return CaptureMode::token;
  if (s == "subtree") return CaptureMode::subtree;
  fail(Errc::InvalidArgument, "capture_display_mode must be 'token' or 'subtree'");
}

inline Json to_json(const SessionConfig& c) {
  Json j;
  j["k"] = c.k;
  j["pool_cap"] = c.pool_cap;
  j["keyword_filter"] = c.keyword_filter ? Json(*c.keyword_filter) : Json();
  j["capture_display_mode"] = mode_name(c.capture_display_mode);
  j["nprobe"] = c.nprobe;
  j["batch_size"] = c.batch_size;
  return j;
}

/// Missing fields keep their defaults; wrong types or negative counts are
/// InvalidArgument.
inline SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig c = {}) {
  if (j.is_null()) return c;
  if (!j.is_object()) fail(Errc::InvalidArgument, "session must be an object");
  auto count = [&](const char* key, std::size_t& out) {
    if (!j.contains(key) || j[key].is_null()) return;
    if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 0)
      fail(Errc::InvalidArgument, std::string(key) + " must be a non-negative integer");
    out = j[key].get<std::size_t>();
  };
  count("k", c.k);
  count("pool_cap", c.pool_cap);
  count("nprobe", c.nprobe);
  count("batch_size", c.batch_size);
  if (j.contains("keyword_filter")) {
    const auto& kf = j["keyword_filter"];
    if (kf.is_null() || (kf.is_string() && kf.get<std::string>().empty())) c.keyword_filter.reset();
    else if (kf.is_string()) c.keyword_filter = kf.get<std::string>();
    else fail(Errc::InvalidArgument, "keyword_filter must be a string");
  }
  if (j.contains("capture_display_mode")) {
    if (!j["capture_display_mode"].is_string()) fail(Errc::InvalidArgument, "capture_display_mode must be a string");
    c.capture_display_mode = mode_from_name(j["capture_display_mode"].get<std::string>());
  }
  return c;
}

}  // namespace nes::json
