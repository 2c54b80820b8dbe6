#pragma once

// ConversionJob and its forward-only state machine:
//
//   Created -> TemplateSelected -> Marked -> Extracted -> Emitted
//
// Every transition takes the job by const reference and returns the updated
// copy, so a failing operation never leaves a half-mutated job behind.
// Successful operations after template selection are appended to the job's
// history; together with the template id this is enough to replay the job.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "slc/cicero.hpp"
#include "slc/codec.hpp"
#include "slc/concerto.hpp"
#include "slc/core.hpp"
#include "slc/error.hpp"
#include "slc/qa.hpp"
#include "slc/retrieval.hpp"
#include "slc/tagger.hpp"
#include "slc/text.hpp"

namespace slc {

enum class JobStatus { Created = 0, TemplateSelected, Marked, Extracted, Emitted };

inline std::string_view to_string(JobStatus s) noexcept {
  switch (s) {
    case JobStatus::Created: return "Created";
    case JobStatus::TemplateSelected: return "TemplateSelected";
    case JobStatus::Marked: return "Marked";
    case JobStatus::Extracted: return "Extracted";
    case JobStatus::Emitted: return "Emitted";
  }
  return "Created";
}

inline JobStatus job_status_from(std::string_view s) {
  for (auto st : {JobStatus::Created, JobStatus::TemplateSelected, JobStatus::Marked,
                  JobStatus::Extracted, JobStatus::Emitted})
    if (to_string(st) == s) return st;
  throw Error(Errc::BadRequest, "unknown job status: " + std::string(s));
}

// --- mark edits -------------------------------------------------------------

struct AddMark {
  VariableBinding binding;
};
struct RemoveMark {
  std::string name;
};
struct RenameMark {
  std::string from;
  std::string to;
};
struct RetypeMark {
  std::string name;
  std::string concerto_type;
  std::optional<bool> raw;
};
using MarkEdit = std::variant<AddMark, RemoveMark, RenameMark, RetypeMark>;

inline json to_json(const MarkEdit& e) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, AddMark>) {
          return {{"op", "add"}, {"binding", codec::to_json(x.binding)}};
        } else if constexpr (std::is_same_v<T, RemoveMark>) {
          return {{"op", "remove"}, {"name", x.name}};
        } else if constexpr (std::is_same_v<T, RenameMark>) {
          return {{"op", "rename"}, {"from", x.from}, {"to", x.to}};
        } else {
          json j{{"op", "retype"}, {"name", x.name}, {"concerto_type", x.concerto_type}};
          if (x.raw) j["raw"] = *x.raw;
          return j;
        }
      },
      e);
}

inline MarkEdit mark_edit_from_json(const json& j) {
  codec::detail::require_object(j, "edit");
  const auto op = codec::detail::field<std::string>(j, "op");
  if (op == "add") return AddMark{codec::binding_from_json(codec::detail::field<json>(j, "binding"))};
  if (op == "remove") return RemoveMark{codec::detail::field<std::string>(j, "name")};
  if (op == "rename")
    return RenameMark{codec::detail::field<std::string>(j, "from"),
                      codec::detail::field<std::string>(j, "to")};
  if (op == "retype") {
    RetypeMark r{codec::detail::field<std::string>(j, "name"),
                 codec::detail::field_or<std::string>(j, "concerto_type", ""), std::nullopt};
    if (j.contains("raw")) r.raw = codec::detail::field<bool>(j, "raw");
    return r;
  }
  throw Error(Errc::BadRequest, "unknown edit op: " + op, {{"op", op}});
}

inline std::vector<MarkEdit> mark_edits_from_json(const json& j) {
  if (!j.is_array()) throw Error(Errc::BadRequest, "edits must be an array");
  std::vector<MarkEdit> out;
  for (const auto& e : j) out.push_back(mark_edit_from_json(e));
  return out;
}

// --- job --------------------------------------------------------------------

struct ConversionOutput {
  std::string cicero_text;
  std::string instance_json;
  json provenance;
  std::vector<std::string> warnings;

  json to_json_value() const {
    return {{"cicero_text", cicero_text},
            {"instance_json", instance_json},
            {"provenance", provenance},
            {"warnings", warnings}};
  }
  /// Canonical bytes; equal outputs serialize identically.
  std::string to_json() const { return to_json_value().dump(); }

  static ConversionOutput from_json(const json& j) {
    ConversionOutput o;
    o.cicero_text = codec::detail::field<std::string>(j, "cicero_text");
    o.instance_json = codec::detail::field<std::string>(j, "instance_json");
    o.provenance = codec::detail::field<json>(j, "provenance");
    o.warnings = codec::detail::field_or<std::vector<std::string>>(j, "warnings", {});
    return o;
  }

  friend bool operator==(const ConversionOutput& a, const ConversionOutput& b) {
    return a.to_json() == b.to_json();
  }
};

struct ConversionJob {
  std::string id;
  SourceDocument document;
  JobStatus status = JobStatus::Created;
  std::string created_at;

  std::optional<std::string> template_id;
  std::string template_cicero;   // selected template's Cicero text, shown as hints
  std::string model_text;        // selected template's Concerto source
  std::optional<ConcertoModel> model;
  std::string class_name;        // declaration filled by extraction

  std::vector<VariableBinding> candidates;  // tagger proposals, may overlap
  std::vector<VariableBinding> marks;       // accepted, never overlapping
  std::map<EntityLabel, std::string> tagger_versions;
  std::optional<double> threshold;

  std::optional<DataInstance> instance;
  std::map<std::string, double> confidences;
  std::vector<std::string> unanswered;
  std::optional<std::string> extractor_id;

  json history = json::array();
  std::optional<ConversionOutput> output;
};

struct ExtractionSettings {
  std::size_t window = kDefaultWindow;
  std::size_t stride = kDefaultStride;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace jobs {

inline void require_status(const ConversionJob& job, std::initializer_list<JobStatus> allowed,
                           std::string_view op) {
  if (std::find(allowed.begin(), allowed.end(), job.status) != allowed.end()) return;
  json expected = json::array();
  for (auto s : allowed) expected.push_back(to_string(s));
  throw Error(Errc::InvalidState,
              std::string(op) + " not allowed in status " + std::string(to_string(job.status)),
              {{"status", to_string(job.status)}, {"allowed", expected}, {"op", op}});
}

inline ConversionJob create(std::string text, std::string id, std::string now) {
  if (text.empty()) throw Error(Errc::EmptyDocument, "document text is empty");
  ConversionJob job;
  job.id = std::move(id);
  job.document = SourceDocument(make_uuid(), std::move(text));
  job.created_at = std::move(now);
  return job;
}

/// Declaration filled by extraction: the "class" metadata entry if present,
/// else the first declaration extending Contract, else the first asset,
/// else the first declaration.
inline std::string main_class(const ConcertoModel& model, const TemplateRecord& tmpl) {
  if (auto it = tmpl.metadata.find("class"); it != tmpl.metadata.end()) {
    const auto* d = model.find(it->second);
    if (!d)
      throw Error(Errc::UnknownClass, "template class not in model: " + it->second,
                  {{"name", it->second}});
    return it->second;
  }
  const auto& decls = model.declarations();
  for (const auto& d : decls)
    if (d.name != "Contract" && model.is_subtype(d.name, "Contract")) return d.name;
  for (const auto& d : decls)
    if (d.kind == DeclKind::Asset) return d.name;
  if (decls.empty()) throw Error(Errc::UnknownClass, "template model declares no classes");
  return decls.front().name;
}

inline ConversionJob select_template(const ConversionJob& in, const TemplateRecord& tmpl) {
  require_status(in, {JobStatus::Created}, "select_template");
  auto model = parse_model(tmpl.concerto_text);
  auto class_name = main_class(model, tmpl);
  if (!tmpl.cicero_text.empty()) parse_template(tmpl.cicero_text);
  ConversionJob job = in;
  job.template_id = tmpl.id;
  job.template_cicero = tmpl.cicero_text;
  job.model_text = tmpl.concerto_text;
  job.model = std::move(model);
  job.class_name = std::move(class_name);
  job.status = JobStatus::TemplateSelected;
  return job;
}

/// Greedy non-overlapping subset: higher probability first, specific labels
/// before String, then earlier spans.
inline std::vector<VariableBinding> accept_non_overlapping(std::vector<VariableBinding> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.span.probability != b.span.probability) return a.span.probability > b.span.probability;
    const bool a_generic = a.span.label == labels::String;
    const bool b_generic = b.span.label == labels::String;
    if (a_generic != b_generic) return b_generic;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.label < b.span.label;
  });
  std::vector<VariableBinding> accepted;
  for (auto& c : candidates) {
    const bool clash = std::any_of(accepted.begin(), accepted.end(), [&](const auto& a) {
      return spans_overlap(a.span.start, a.span.end, c.span.start, c.span.end);
    });
    if (!clash) accepted.push_back(std::move(c));
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const auto& a, const auto& b) { return a.span.start < b.span.start; });
  return accepted;
}

/// Re-running on a Marked job replaces the marks and clears extraction.
inline ConversionJob auto_mark(const ConversionJob& in, const Tagger& tagger, double threshold) {
  require_status(in, {JobStatus::TemplateSelected, JobStatus::Marked}, "auto_mark");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(Errc::BadRequest, "threshold must lie in (0,1)", {{"threshold", threshold}});
  std::optional<CiceroTemplate> hint;
  if (!in.template_cicero.empty()) hint = parse_template(in.template_cicero);
  auto proposal = propose_marks(in.document, hint ? &*hint : nullptr, tagger, threshold);

  ConversionJob job = in;
  job.candidates = proposal.bindings;
  job.marks = accept_non_overlapping(std::move(proposal.bindings));
  job.tagger_versions = std::move(proposal.tagger_versions);
  job.threshold = threshold;
  job.instance.reset();
  job.confidences.clear();
  job.unanswered.clear();
  job.extractor_id.reset();
  job.status = JobStatus::Marked;
  job.history.push_back(
      {{"op", "auto_mark"}, {"threshold", threshold}, {"tagger_versions", codec::to_json(job.tagger_versions)}});
  return job;
}

inline ConversionJob update_marks(const ConversionJob& in, const std::vector<MarkEdit>& edits) {
  require_status(in, {JobStatus::TemplateSelected, JobStatus::Marked, JobStatus::Extracted},
                 "update_marks");
  const auto& model = *in.model;
  auto marks = in.marks;
  auto find = [&](const std::string& name) {
    auto it = std::find_if(marks.begin(), marks.end(),
                           [&](const auto& m) { return m.variable_name == name; });
    if (it == marks.end())
      throw Error(Errc::NotFound, "no mark named " + name, {{"name", name}});
    return it;
  };
  auto check_name = [&](const std::string& name) {
    if (!is_identifier(name))
      throw Error(Errc::InvalidVariableName, "invalid variable name: " + name, {{"name", name}});
    if (std::any_of(marks.begin(), marks.end(), [&](const auto& m) { return m.variable_name == name; }))
      throw Error(Errc::DuplicateVariable, "duplicate variable: " + name, {{"name", name}});
  };
  auto check_type = [&](const std::string& type) {
    if (!model.resolves_type(type))
      throw Error(Errc::UnknownType, "type not resolvable in the job's model: " + type,
                  {{"type", type}});
  };

  for (const auto& edit : edits) {
    if (const auto* add = std::get_if<AddMark>(&edit)) {
      auto b = add->binding;
      if (!in.document.is_token_aligned(b.span.start, b.span.end))
        throw Error(Errc::MisalignedMark, "mark is not token-aligned",
                    {{"start", b.span.start}, {"end", b.span.end}});
      check_name(b.variable_name);
      if (b.concerto_type.empty()) b.concerto_type = default_concerto_type(b.span.label);
      check_type(b.concerto_type);
      marks.push_back(std::move(b));
    } else if (const auto* rm = std::get_if<RemoveMark>(&edit)) {
      marks.erase(find(rm->name));
    } else if (const auto* rn = std::get_if<RenameMark>(&edit)) {
      auto it = find(rn->from);
      if (rn->from == rn->to) continue;
      const auto idx = static_cast<std::size_t>(it - marks.begin());
      check_name(rn->to);
      marks[idx].variable_name = rn->to;
    } else {
      const auto& rt = std::get<RetypeMark>(edit);
      auto it = find(rt.name);
      if (!rt.concerto_type.empty()) {
        check_type(rt.concerto_type);
        it->concerto_type = rt.concerto_type;
      }
      if (rt.raw) it->raw = *rt.raw;
    }
  }
  std::sort(marks.begin(), marks.end(), [](const auto& a, const auto& b) {
    return a.span.start < b.span.start || (a.span.start == b.span.start && a.span.end < b.span.end);
  });
  for (std::size_t k = 1; k < marks.size(); ++k)
    if (marks[k - 1].span.end > marks[k].span.start)
      throw Error(Errc::OverlappingMarks,
                  "marks overlap: " + marks[k - 1].variable_name + ", " + marks[k].variable_name,
                  {{"a", marks[k - 1].variable_name}, {"b", marks[k].variable_name}});

  ConversionJob job = in;
  job.marks = std::move(marks);
  if (job.status == JobStatus::TemplateSelected) job.status = JobStatus::Marked;
  json arr = json::array();
  for (const auto& e : edits) arr.push_back(to_json(e));
  job.history.push_back({{"op", "update_marks"}, {"edits", arr}});
  return job;
}

inline ConversionJob auto_extract(const ConversionJob& in, const SpanExtractor& extractor,
                                  const ExtractionSettings& settings = {}) {
  require_status(in, {JobStatus::Marked, JobStatus::Extracted}, "auto_extract");
  auto result = fill_instance(*in.model, in.class_name, in.document, extractor, settings.window,
                              settings.stride);
  ConversionJob job = in;
  job.instance = std::move(result.instance);
  job.confidences = std::move(result.confidences);
  job.unanswered = std::move(result.unanswered);
  job.extractor_id = extractor.id();
  job.status = JobStatus::Extracted;
  job.history.push_back({{"op", "auto_extract"}, {"extractor", extractor.id()}});
  return job;
}

/// Manual override with confidence 1.0; nullopt unsets the field.
inline ConversionJob update_value(const ConversionJob& in, const std::string& field,
                                  const std::optional<json>& value) {
  require_status(in, {JobStatus::Marked, JobStatus::Extracted}, "update_values");
  const auto fields = effective_fields(*in.model, in.class_name);
  if (std::none_of(fields.begin(), fields.end(), [&](const auto& f) { return f.name == field; }))
    throw Error(Errc::BadRequest, "no field " + field + " in " + in.class_name, {{"field", field}});
  ConversionJob job = in;
  if (!job.instance) job.instance = DataInstance{job.class_name, {}};
  if (value && !value->is_null()) {
    job.instance->values.insert_or_assign(
        field, codec::value_from_json(*job.model, job.class_name, field, *value));
    job.confidences[field] = 1.0;
    job.unanswered.erase(std::remove(job.unanswered.begin(), job.unanswered.end(), field),
                         job.unanswered.end());
  } else {
    job.instance->values.erase(field);
    job.confidences.erase(field);
    if (std::find(job.unanswered.begin(), job.unanswered.end(), field) == job.unanswered.end())
      job.unanswered.push_back(field);
  }
  job.status = JobStatus::Extracted;
  job.history.push_back({{"op", "update_value"}, {"field", field}, {"value", value ? *value : json()}});
  return job;
}

inline json provenance_of(const ConversionJob& job, bool forced, const std::string& emitted_at,
                          const ExtractionSettings& settings) {
  return {{"template_id", job.template_id ? json(*job.template_id) : json()},
          {"class_name", job.class_name},
          {"tagger_versions", codec::to_json(job.tagger_versions)},
          {"threshold", job.threshold ? json(*job.threshold) : json()},
          {"extractor_id", job.extractor_id ? json(*job.extractor_id) : json()},
          {"window", settings.window},
          {"stride", settings.stride},
          {"created_at", job.created_at},
          {"emitted_at", emitted_at},
          {"forced", forced},
          {"history", job.history}};
}

inline ConversionJob emit(const ConversionJob& in, bool force, const std::string& now,
                          const ExtractionSettings& settings = {}) {
  require_status(in, {JobStatus::Extracted}, "emit_output");
  const DataInstance instance = in.instance ? *in.instance : DataInstance{in.class_name, {}};
  const auto report = validate_instance(*in.model, instance);
  if (!report.ok() && !force)
    throw Error(Errc::ValidationFailed, "instance does not validate against the model",
                report.to_json());
  ConversionOutput out;
  out.cicero_text = apply_marks(in.document, in.marks).serialize();
  out.instance_json = instance_to_json(instance);
  out.provenance = provenance_of(in, force, now, settings);
  out.warnings = report.warnings;
  for (const auto& v : report.violations)
    out.warnings.push_back(std::string(to_string(v.kind)) + " " + v.path + ": " + v.message);

  ConversionJob job = in;
  job.output = std::move(out);
  job.status = JobStatus::Emitted;
  return job;
}

/// Renames that bind each mark to the model field whose extracted answer
/// has the same surface text, so the emitted template lines up with the
/// instance. Marks already named like a field are left alone.
inline std::vector<MarkEdit> suggest_renames(const ConversionJob& job) {
  std::vector<MarkEdit> edits;
  if (!job.model || !job.instance) return edits;
  const auto fields = effective_fields(*job.model, job.class_name);
  std::set<std::string> field_names;
  for (const auto& f : fields) field_names.insert(f.name);
  std::set<std::string> taken;
  for (const auto& m : job.marks) taken.insert(m.variable_name);
  std::set<std::string> renamed;
  for (const auto& f : fields) {
    if (taken.count(f.name)) continue;
    auto vit = job.instance->values.find(f.name);
    if (vit == job.instance->values.end()) continue;
    std::string value;
    if (const auto* s = std::get_if<std::string>(&vit->second))
      value = *s;
    else if (const auto* r = std::get_if<Reference>(&vit->second))
      value = r->id;
    else
      continue;
    for (const auto& m : job.marks) {
      if (field_names.count(m.variable_name) || renamed.count(m.variable_name)) continue;
      if (job.document.slice(m.span.start, m.span.end) != value) continue;
      edits.push_back(RenameMark{m.variable_name, f.name});
      renamed.insert(m.variable_name);
      taken.insert(f.name);
      break;
    }
  }
  return edits;
}

// --- persistence ------------------------------------------------------------

inline json to_json(const ConversionJob& job) {
  json j{{"id", job.id},
         {"document", {{"id", job.document.id()}, {"text", job.document.text()}}},
         {"status", to_string(job.status)},
         {"created_at", job.created_at},
         {"template_id", job.template_id ? json(*job.template_id) : json()},
         {"template_cicero", job.template_cicero},
         {"model_text", job.model_text},
         {"class_name", job.class_name},
         {"candidates", codec::to_json(job.candidates)},
         {"marks", codec::to_json(job.marks)},
         {"tagger_versions", codec::to_json(job.tagger_versions)},
         {"threshold", job.threshold ? json(*job.threshold) : json()},
         {"instance", job.instance ? instance_to_json_value(*job.instance) : json()},
         {"confidences", job.confidences},
         {"unanswered", job.unanswered},
         {"extractor_id", job.extractor_id ? json(*job.extractor_id) : json()},
         {"history", job.history},
         {"output", job.output ? job.output->to_json_value() : json()}};
  if (job.model) {
    const auto report = job.instance ? validate_instance(*job.model, *job.instance) : ValidationReport{};
    j["validation"] = report.to_json();
  }
  return j;
}

inline ConversionJob job_from_json(const json& j) {
  using codec::detail::field;
  using codec::detail::field_or;
  ConversionJob job;
  job.id = field<std::string>(j, "id");
  const auto doc = field<json>(j, "document");
  job.document = SourceDocument(field<std::string>(doc, "id"), field<std::string>(doc, "text"));
  job.status = job_status_from(field<std::string>(j, "status"));
  job.created_at = field_or<std::string>(j, "created_at", "");
  if (auto t = field_or<json>(j, "template_id", nullptr); t.is_string()) job.template_id = t.get<std::string>();
  job.template_cicero = field_or<std::string>(j, "template_cicero", "");
  job.model_text = field_or<std::string>(j, "model_text", "");
  if (job.template_id) job.model = parse_model(job.model_text);
  job.class_name = field_or<std::string>(j, "class_name", "");
  job.candidates = codec::bindings_from_json(field_or<json>(j, "candidates", json::array()));
  job.marks = codec::bindings_from_json(field_or<json>(j, "marks", json::array()));
  job.tagger_versions = codec::versions_from_json(field_or<json>(j, "tagger_versions", nullptr));
  if (auto t = field_or<json>(j, "threshold", nullptr); t.is_number()) job.threshold = t.get<double>();
  if (auto inst = field_or<json>(j, "instance", nullptr); inst.is_object() && job.model)
    job.instance = decode_instance(*job.model, inst);
  job.confidences = field_or<std::map<std::string, double>>(j, "confidences", {});
  job.unanswered = field_or<std::vector<std::string>>(j, "unanswered", {});
  if (auto e = field_or<json>(j, "extractor_id", nullptr); e.is_string()) job.extractor_id = e.get<std::string>();
  job.history = field_or<json>(j, "history", json::array());
  if (auto o = field_or<json>(j, "output", nullptr); o.is_object())
    job.output = ConversionOutput::from_json(o);
  return job;
}

}  // namespace jobs
}  // namespace slc
