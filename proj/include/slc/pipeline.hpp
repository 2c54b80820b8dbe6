#pragma once

// Job store, template library and active-learning queue around the job
// state machine in job.hpp.
//
// Jobs are independent; operations on one job are serialized by a per-job
// mutex. The template index follows its own reader-writer contract. With a
// data directory configured, every job is written to <data>/jobs/<id>.json
// (atomically) after each successful operation.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "slc/codec.hpp"
#include "slc/error.hpp"
#include "slc/job.hpp"
#include "slc/library.hpp"
#include "slc/retrieval.hpp"
#include "slc/tagger.hpp"

namespace slc {

struct ContributionRecord {
  TemplateRecord template_record;
  std::vector<VariableBinding> corrected_marks;
  DataInstance corrected_values;

  json to_json() const {
    return {{"template", codec::to_json(template_record)},
            {"marks", codec::to_json(corrected_marks)},
            {"values", instance_to_json_value(corrected_values)}};
  }

  static ContributionRecord from_json(const json& j) {
    ContributionRecord r;
    r.template_record = codec::template_from_json(codec::detail::field<json>(j, "template"));
    r.corrected_marks = codec::bindings_from_json(codec::detail::field<json>(j, "marks"));
    const auto model = parse_model(r.template_record.concerto_text);
    r.corrected_values = decode_instance(model, codec::detail::field<json>(j, "values"));
    return r;
  }
};

/// Consumer of the active-learning queue.
class RetrainHook {
 public:
  virtual ~RetrainHook() = default;
  virtual void retrain(const std::vector<ContributionRecord>& queue) = 0;
};

/// Retrains the baseline tagger by rebuilding its gazetteers from the
/// surface forms of the corrected marks.
class BaselineRetrain final : public RetrainHook {
 public:
  explicit BaselineRetrain(Gazetteers seed = {}) : gazetteers_(std::move(seed)) {}

  void retrain(const std::vector<ContributionRecord>& queue) override {
    for (const auto& rec : queue) {
      const SourceDocument doc("", rec.template_record.sample_text);
      for (const auto& m : rec.corrected_marks) {
        if (m.span.end > doc.char_length()) continue;
        gazetteers_[m.span.label].insert(std::string(doc.slice(m.span.start, m.span.end)));
      }
    }
    ++generation_;
  }

  const Gazetteers& gazetteers() const noexcept { return gazetteers_; }

  BaselineTagger make_tagger() const {
    return BaselineTagger(gazetteers_, {}, "baseline-" + std::to_string(generation_ + 1));
  }

 private:
  Gazetteers gazetteers_;
  std::size_t generation_ = 0;
};

struct PipelineConfig {
  std::filesystem::path data_dir;     // empty: in-memory jobs and queue
  std::filesystem::path library_dir;  // empty: contributions are not written to disk
  std::function<std::string()> clock = utc_timestamp;
  ExtractionSettings extraction;
  MltOptions retrieval;
};

inline std::string slugify(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out += static_cast<char>(std::tolower(u));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config = {})
      : config_(std::move(config)), index_(config_.retrieval) {
    if (!config_.data_dir.empty()) load_state();
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const noexcept { return config_; }
  TemplateIndex& index() noexcept { return index_; }
  const TemplateIndex& index() const noexcept { return index_; }

  /// Indexes every template under the configured library directory.
  std::size_t load_library() {
    if (config_.library_dir.empty()) return 0;
    std::size_t n = 0;
    for (auto& rec : slc::load_library(config_.library_dir)) {
      index_.index_template(std::move(rec), true);
      ++n;
    }
    return n;
  }

  void add_template(TemplateRecord rec) { index_.index_template(std::move(rec)); }

  // --- jobs ----------------------------------------------------------------

  ConversionJob create_job(std::string text) {
    auto job = jobs::create(std::move(text), make_uuid(), config_.clock());
    persist(job);
    auto slot = std::make_shared<Slot>();
    slot->job = job;
    std::unique_lock lock(jobs_mutex_);
    jobs_.emplace(job.id, std::move(slot));
    return job;
  }

  ConversionJob get_job(const std::string& id) const {
    auto slot = find_slot(id);
    std::lock_guard lock(slot->mutex);
    return slot->job;
  }

  std::vector<std::string> job_ids() const {
    std::shared_lock lock(jobs_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : jobs_) out.push_back(id);
    return out;
  }

  std::vector<ScoredTemplate> suggest_templates(const std::string& id, std::size_t top_n) const {
    const auto job = get_job(id);
    return index_.more_like_this(job.document.text(), top_n);
  }

  ConversionJob select_template(const std::string& id, const std::string& template_id) {
    return mutate(id, [&](const ConversionJob& job) {
      jobs::require_status(job, {JobStatus::Created}, "select_template");
      auto rec = index_.get(template_id);
      if (!rec)
        throw Error(Errc::UnknownId, "unknown template id: " + template_id, {{"id", template_id}});
      return jobs::select_template(job, *rec);
    });
  }

  ConversionJob auto_mark(const std::string& id, const Tagger& tagger, double threshold = kDefaultThreshold) {
    return mutate(id, [&](const ConversionJob& job) { return jobs::auto_mark(job, tagger, threshold); });
  }

  ConversionJob update_marks(const std::string& id, const std::vector<MarkEdit>& edits) {
    return mutate(id, [&](const ConversionJob& job) { return jobs::update_marks(job, edits); });
  }

  ConversionJob auto_extract(const std::string& id, const SpanExtractor& extractor) {
    return mutate(id, [&](const ConversionJob& job) {
      return jobs::auto_extract(job, extractor, config_.extraction);
    });
  }

  ConversionJob update_value(const std::string& id, const std::string& field,
                             const std::optional<json>& value) {
    return mutate(id, [&](const ConversionJob& job) { return jobs::update_value(job, field, value); });
  }

  ConversionOutput emit_output(const std::string& id, bool force = false) {
    auto job = mutate(id, [&](const ConversionJob& job) {
      return jobs::emit(job, force, config_.clock(), config_.extraction);
    });
    return *job.output;
  }

  std::vector<MarkEdit> suggest_renames(const std::string& id) const {
    return jobs::suggest_renames(get_job(id));
  }

  /// Adds an emitted job to the template library and queues its corrected
  /// marks and values for retraining.
  ContributionRecord contribute(const std::string& id, const std::string& name) {
    auto slot = find_slot(id);
    std::lock_guard job_lock(slot->mutex);
    const auto& job = slot->job;
    jobs::require_status(job, {JobStatus::Emitted}, "contribute");
    const auto template_id = slugify(name);
    if (template_id.empty())
      throw Error(Errc::BadRequest, "template name needs at least one letter or digit");

    std::lock_guard contrib_lock(contrib_mutex_);
    for (const auto& r : index_.records())
      if (r.name == name || r.id == template_id)
        throw Error(Errc::DuplicateName, "a template named '" + name + "' already exists",
                    {{"name", name}, {"id", template_id}});

    ContributionRecord rec;
    rec.template_record.id = template_id;
    rec.template_record.name = name;
    rec.template_record.sample_text = job.document.text();
    rec.template_record.cicero_text = job.output->cicero_text;
    rec.template_record.concerto_text = job.model_text;
    rec.template_record.metadata["class"] = job.class_name;
    rec.template_record.metadata["source_job"] = job.id;
    if (job.template_id) rec.template_record.metadata["forked_from"] = *job.template_id;
    rec.corrected_marks = job.marks;
    rec.corrected_values = job.instance ? *job.instance : DataInstance{job.class_name, {}};

    index_.index_template(rec.template_record);
    if (!config_.library_dir.empty()) save_template(config_.library_dir, rec.template_record);
    queue_.push_back(rec);
    persist_queue();
    return rec;
  }

  std::vector<ContributionRecord> active_learning_queue() const {
    std::lock_guard lock(contrib_mutex_);
    return queue_;
  }

  /// Hands the queue to `hook`; the queue is cleared once the hook returns.
  std::size_t retrain(RetrainHook& hook) {
    std::lock_guard lock(contrib_mutex_);
    hook.retrain(queue_);
    const auto n = queue_.size();
    queue_.clear();
    persist_queue();
    return n;
  }

  /// Re-executes an emitted job from its provenance record. The tagger and
  /// extractor must report the versions recorded in the provenance.
  ConversionOutput replay(const json& provenance, const std::string& text, const Tagger* tagger,
                          const SpanExtractor* extractor) const {
    using codec::detail::field;
    using codec::detail::field_or;
    const auto template_id = field<std::string>(provenance, "template_id");
    auto rec = index_.get(template_id);
    if (!rec)
      throw Error(Errc::UnknownId, "unknown template id: " + template_id, {{"id", template_id}});
    ExtractionSettings settings{field<std::size_t>(provenance, "window"),
                                field<std::size_t>(provenance, "stride")};

    auto job = jobs::create(text, "replay", field<std::string>(provenance, "created_at"));
    job = jobs::select_template(job, *rec);
    for (const auto& step : field<json>(provenance, "history")) {
      const auto op = field<std::string>(step, "op");
      if (op == "auto_mark") {
        if (!tagger) throw Error(Errc::ProvenanceMismatch, "replay needs a tagger");
        const auto want = codec::versions_from_json(field<json>(step, "tagger_versions"));
        if (tagger->versions() != want)
          throw Error(Errc::ProvenanceMismatch, "tagger versions differ from provenance",
                      {{"expected", codec::to_json(want)}, {"actual", codec::to_json(tagger->versions())}});
        job = jobs::auto_mark(job, *tagger, field<double>(step, "threshold"));
      } else if (op == "update_marks") {
        job = jobs::update_marks(job, mark_edits_from_json(field<json>(step, "edits")));
      } else if (op == "auto_extract") {
        if (!extractor) throw Error(Errc::ProvenanceMismatch, "replay needs an extractor");
        const auto want = field<std::string>(step, "extractor");
        if (extractor->id() != want)
          throw Error(Errc::ProvenanceMismatch, "extractor differs from provenance",
                      {{"expected", want}, {"actual", extractor->id()}});
        job = jobs::auto_extract(job, *extractor, settings);
      } else if (op == "update_value") {
        const auto v = field_or<json>(step, "value", nullptr);
        job = jobs::update_value(job, field<std::string>(step, "field"),
                                 v.is_null() ? std::nullopt : std::optional<json>(v));
      } else {
        throw Error(Errc::ProvenanceMismatch, "unknown history op: " + op);
      }
    }
    job = jobs::emit(job, field_or<bool>(provenance, "forced", false),
                     field<std::string>(provenance, "emitted_at"), settings);
    return *job.output;
  }

 private:
  struct Slot {
    std::mutex mutex;
    ConversionJob job;
  };

  std::shared_ptr<Slot> find_slot(const std::string& id) const {
    std::shared_lock lock(jobs_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(Errc::UnknownJob, "unknown job: " + id, {{"id", id}});
    return it->second;
  }

  template <typename F>
  ConversionJob mutate(const std::string& id, F&& op) {
    auto slot = find_slot(id);
    std::lock_guard lock(slot->mutex);
    ConversionJob next = op(slot->job);
    persist(next);
    slot->job = next;
    return next;
  }

  void persist(const ConversionJob& job) const {
    if (config_.data_dir.empty()) return;
    write_file_atomic(config_.data_dir / "jobs" / (job.id + ".json"), jobs::to_json(job).dump(2) + "\n");
  }

  void persist_queue() const {
    if (config_.data_dir.empty()) return;
    std::string lines;
    for (const auto& r : queue_) lines += r.to_json().dump() + "\n";
    write_file_atomic(config_.data_dir / "active_learning_queue.jsonl", lines);
  }

  void load_state() {
    const auto jobs_dir = config_.data_dir / "jobs";
    if (std::filesystem::exists(jobs_dir)) {
      for (const auto& entry : std::filesystem::directory_iterator(jobs_dir)) {
        if (entry.path().extension() != ".json") continue;
        auto job = jobs::job_from_json(json::parse(read_file(entry.path())));
        auto slot = std::make_shared<Slot>();
        slot->job = std::move(job);
        jobs_.emplace(slot->job.id, std::move(slot));
      }
    }
    const auto queue_file = config_.data_dir / "active_learning_queue.jsonl";
    if (std::filesystem::exists(queue_file)) {
      std::istringstream in(read_file(queue_file));
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) queue_.push_back(ContributionRecord::from_json(json::parse(line)));
    }
  }

  PipelineConfig config_;
  TemplateIndex index_;
  mutable std::shared_mutex jobs_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> jobs_;
  mutable std::mutex contrib_mutex_;
  std::vector<ContributionRecord> queue_;
};

}  // namespace slc
