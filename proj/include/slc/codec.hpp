#pragma once

// JSON shapes shared by job persistence, the HTTP API and the model-server
// wire protocols.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slc/cicero.hpp"
#include "slc/concerto.hpp"
#include "slc/core.hpp"
#include "slc/error.hpp"
#include "slc/qa.hpp"
#include "slc/retrieval.hpp"
#include "slc/tagger.hpp"

namespace slc::codec {

namespace detail {
template <typename T>
T field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw Error(Errc::BadRequest, std::string("missing field '") + key + "'", {{"field", key}});
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::BadRequest, std::string("wrong type for field '") + key + "'",
                {{"field", key}});
  }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::BadRequest, std::string("wrong type for field '") + key + "'",
                {{"field", key}});
  }
}

inline void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw Error(Errc::BadRequest, std::string(what) + " must be a JSON object");
}
}  // namespace detail

inline json to_json(const Token& t) { return {{"surface", t.surface}, {"start", t.start}, {"end", t.end}}; }

inline json to_json(const LabeledSpan& s) {
  return {{"start", s.start}, {"end", s.end}, {"label", s.label.name()}, {"probability", s.probability}};
}

inline LabeledSpan span_from_json(const json& j) {
  detail::require_object(j, "span");
  LabeledSpan s;
  s.start = detail::field<std::size_t>(j, "start");
  s.end = detail::field<std::size_t>(j, "end");
  s.label = EntityLabel{detail::field<std::string>(j, "label")};
  s.probability = detail::field_or<double>(j, "probability", 1.0);
  if (s.start >= s.end) throw Error(Errc::BadRequest, "span start must precede end");
  if (!(s.probability >= 0.0 && s.probability <= 1.0))
    throw Error(Errc::BadRequest, "span probability outside [0,1]");
  return s;
}

inline json to_json(const VariableBinding& b) {
  json occ = json::array();
  for (const auto& o : b.occurrences) occ.push_back(to_json(o));
  return {{"span", to_json(b.span)},
          {"variable_name", b.variable_name},
          {"concerto_type", b.concerto_type},
          {"raw", b.raw},
          {"occurrences", occ}};
}

inline VariableBinding binding_from_json(const json& j) {
  detail::require_object(j, "binding");
  VariableBinding b;
  b.span = span_from_json(detail::field<json>(j, "span"));
  b.variable_name = detail::field<std::string>(j, "variable_name");
  b.concerto_type = detail::field_or<std::string>(j, "concerto_type", default_concerto_type(b.span.label));
  b.raw = detail::field_or<bool>(j, "raw", false);
  for (const auto& o : detail::field_or<json>(j, "occurrences", json::array()))
    b.occurrences.push_back(span_from_json(o));
  return b;
}

inline json to_json(const std::vector<VariableBinding>& bs) {
  json arr = json::array();
  for (const auto& b : bs) arr.push_back(to_json(b));
  return arr;
}

inline std::vector<VariableBinding> bindings_from_json(const json& j) {
  if (!j.is_array()) throw Error(Errc::BadRequest, "bindings must be an array");
  std::vector<VariableBinding> out;
  for (const auto& b : j) out.push_back(binding_from_json(b));
  return out;
}

inline json to_json(const std::map<EntityLabel, std::string>& versions) {
  json obj = json::object();
  for (const auto& [label, v] : versions) obj[label.name()] = v;
  return obj;
}

inline std::map<EntityLabel, std::string> versions_from_json(const json& j) {
  if (j.is_null()) return {};
  detail::require_object(j, "versions");
  std::map<EntityLabel, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_string()) throw Error(Errc::BadRequest, "version must be a string");
    out[EntityLabel{it.key()}] = it->get<std::string>();
  }
  return out;
}

inline json to_json(const TemplateRecord& r) {
  return {{"id", r.id},
          {"name", r.name},
          {"sample_text", r.sample_text},
          {"cicero_text", r.cicero_text},
          {"concerto_text", r.concerto_text},
          {"metadata", r.metadata}};
}

inline TemplateRecord template_from_json(const json& j) {
  detail::require_object(j, "template");
  TemplateRecord r;
  r.id = detail::field<std::string>(j, "id");
  r.name = detail::field_or<std::string>(j, "name", r.id);
  r.sample_text = detail::field<std::string>(j, "sample_text");
  r.cicero_text = detail::field_or<std::string>(j, "cicero_text", "");
  r.concerto_text = detail::field_or<std::string>(j, "concerto_text", "");
  r.metadata = detail::field_or<std::map<std::string, std::string>>(j, "metadata", {});
  return r;
}

inline json to_json(const Answer& a) {
  return {{"start", a.start}, {"end", a.end}, {"text", a.text}, {"confidence", a.confidence},
          {"chunk_index", a.chunk_index}};
}

inline Gazetteers gazetteers_from_json(const json& j) {
  if (j.is_null()) return {};
  detail::require_object(j, "gazetteers");
  Gazetteers g;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_array()) throw Error(Errc::BadRequest, "gazetteer entries must be arrays");
    auto& set = g[EntityLabel{it.key()}];
    for (const auto& s : *it) {
      if (!s.is_string()) throw Error(Errc::BadRequest, "gazetteer phrases must be strings");
      set.insert(s.get<std::string>());
    }
  }
  return g;
}

inline json to_json(const Gazetteers& g) {
  json obj = json::object();
  for (const auto& [label, set] : g) obj[label.name()] = set;
  return obj;
}

inline PatternTable patterns_from_json(const json& j) {
  if (j.is_null()) return {};
  detail::require_object(j, "patterns");
  PatternTable p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_array()) throw Error(Errc::BadRequest, "pattern entries must be arrays");
    auto& list = p[EntityLabel{it.key()}];
    for (const auto& s : *it) {
      if (!s.is_string()) throw Error(Errc::BadRequest, "patterns must be strings");
      list.push_back(s.get<std::string>());
    }
  }
  return p;
}

/// Value for `field_name` of `class_name`, typed by the model.
inline Value value_from_json(const ConcertoModel& model, const std::string& class_name,
                             const std::string& field_name, const json& v) {
  json obj = json::object();
  obj["$class"] = class_name;
  obj[field_name] = v;
  auto inst = decode_instance(model, obj);
  return inst.values.at(field_name);
}

inline json value_to_json(const Value& v) {
  DataInstance tmp;
  tmp.values.emplace("v", v);
  return instance_to_json_value(tmp).at("v");
}

// --- model-server wire protocols -----------------------------------------

/// Tagger request: {text, tokens: [[start, end], ...], labels: [...], versions: {...}}.
inline json tag_request(const SourceDocument& doc, const std::vector<EntityLabel>& labels,
                        const std::map<EntityLabel, std::string>& versions) {
  json toks = json::array();
  for (const auto& t : doc.tokens()) toks.push_back(json::array({t.start, t.end}));
  json ls = json::array();
  for (const auto& l : labels) ls.push_back(l.name());
  return {{"text", doc.text()}, {"tokens", toks}, {"labels", ls}, {"versions", to_json(versions)}};
}

/// Tagger response: {matrix: [{label: {b, i}, ...} per token]}.
inline json to_json(const TokenLabelMatrix& m) {
  json rows = json::array();
  for (std::size_t k = 0; k < m.size(); ++k) {
    json row = json::object();
    for (const auto& [label, p] : m.row(k)) row[label.name()] = {{"b", p.b}, {"i", p.i}};
    rows.push_back(row);
  }
  return {{"matrix", rows}};
}

inline TokenLabelMatrix matrix_from_json(const json& j, std::size_t expected_tokens) {
  auto fail = [](const std::string& why) -> Error {
    return Error(Errc::ProtocolViolation, "tagger response: " + why);
  };
  if (!j.is_object() || !j.contains("matrix") || !j["matrix"].is_array()) throw fail("missing matrix");
  const auto& rows = j["matrix"];
  if (rows.size() != expected_tokens) throw fail("row count does not match token count");
  TokenLabelMatrix m(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!rows[k].is_object()) throw fail("row is not an object");
    for (auto it = rows[k].begin(); it != rows[k].end(); ++it) {
      const auto& p = it.value();
      if (!p.is_object() || !p.contains("b") || !p.contains("i") || !p["b"].is_number() ||
          !p["i"].is_number())
        throw fail("probability entry needs numeric b and i");
      const double b = p["b"].get<double>(), i = p["i"].get<double>();
      if (!(b >= 0.0 && b <= 1.0 && i >= 0.0 && i <= 1.0)) throw fail("probability outside [0,1]");
      m.set(k, EntityLabel{it.key()}, {b, i});
    }
  }
  return m;
}

/// QA response: {start, end, start_confidence, end_confidence} or {abstain: true}.
inline json to_json(const std::optional<ExtractedSpan>& s) {
  if (!s) return {{"abstain", true}};
  return {{"start", s->start}, {"end", s->end}, {"start_confidence", s->start_confidence},
          {"end_confidence", s->end_confidence}};
}

inline std::optional<ExtractedSpan> extracted_span_from_json(const json& j) {
  auto fail = [](const std::string& why) -> Error {
    return Error(Errc::ProtocolViolation, "QA response: " + why);
  };
  if (!j.is_object()) throw fail("not an object");
  if (auto it = j.find("abstain"); it != j.end() && it->is_boolean() && it->get<bool>())
    return std::nullopt;
  for (const char* k : {"start", "end"})
    if (!j.contains(k) || !j[k].is_number_unsigned()) throw fail(std::string("missing ") + k);
  for (const char* k : {"start_confidence", "end_confidence"})
    if (!j.contains(k) || !j[k].is_number()) throw fail(std::string("missing ") + k);
  return ExtractedSpan{j["start"].get<std::size_t>(), j["end"].get<std::size_t>(),
                       j["start_confidence"].get<double>(), j["end_confidence"].get<double>()};
}

}  // namespace slc::codec
