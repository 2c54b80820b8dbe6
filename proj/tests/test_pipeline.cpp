#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "slc/pipeline.hpp"
#include "support.hpp"

using namespace slc;
using namespace slc::testing;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Io;
}

class PipelineTest : public ::testing::Test {
 protected:
  PipelineTest() : pipeline(fixed_clock_config()) {
    pipeline.add_template(acceptance_record());
    pipeline.add_template(payment_record());
  }

  Pipeline pipeline;
  BaselineTagger tagger{party_gazetteer()};
  BaselineExtractor extractor{answer_key()};
};

class AbstainAll final : public SpanExtractor {
 public:
  std::optional<ExtractedSpan> answer(std::string_view, std::string_view) const override { return std::nullopt; }
  std::string id() const override { return "abstain"; }
};

std::map<std::string, std::string> values_as_text(const ConversionJob& job) {
  std::map<std::string, std::string> out;
  for (const auto& m : job.marks) out[m.variable_name] = std::string(job.document.slice(m.span.start, m.span.end));
  return out;
}

}  // namespace

TEST_F(PipelineTest, ContractEndToEnd) {
  const auto id = run_scenario(pipeline, tagger, extractor);
  const auto job = pipeline.get_job(id);
  ASSERT_EQ(job.status, JobStatus::Emitted);
  const auto& out = *job.output;
  EXPECT_EQ(out.instance_json,
            R"({"$class":"AcceptanceOfDelivery","deliverable":"Widgets","receiver":"Alice","shipper":"Bob"})");
  const auto tmpl = parse_template(out.cicero_text);
  EXPECT_EQ(list_variables(tmpl), (std::vector<cicero::Variable>{{"shipper", false}, {"receiver", false}}));
  const auto inst = instance_from_json(*job.model, out.instance_json);
  std::map<std::string, std::string> values;
  for (const auto& v : tmpl.variables()) values[v.name] = std::get<Reference>(inst.values.at(v.name)).id;
  EXPECT_EQ(render(tmpl, values), kContract);
  EXPECT_EQ(out.provenance.at("tagger_versions"), json({{"Party", "baseline-1"}}));
  EXPECT_EQ(out.provenance.at("extractor_id"), "baseline-string-match");
  EXPECT_EQ(out.provenance.at("template_id"), "acceptance-of-delivery");
  EXPECT_TRUE(out.warnings.empty());
}

TEST_F(PipelineTest, SuggestedRenamesMatchFields) {
  const auto id = pipeline.create_job(kContract).id;
  pipeline.select_template(id, "acceptance-of-delivery");
  pipeline.auto_mark(id, tagger);
  pipeline.auto_extract(id, extractor);
  const auto edits = pipeline.suggest_renames(id);
  ASSERT_EQ(edits.size(), 2u);
  EXPECT_EQ(std::get<RenameMark>(edits[0]).to, "shipper");
  EXPECT_EQ(std::get<RenameMark>(edits[1]).to, "receiver");
  pipeline.update_marks(id, edits);
  EXPECT_TRUE(pipeline.suggest_renames(id).empty());
}

TEST_F(PipelineTest, CreateAndSuggest) {
  EXPECT_EQ(code_of([&] { pipeline.create_job(""); }), Errc::EmptyDocument);
  const auto a = pipeline.create_job(kContract);
  const auto b = pipeline.create_job(kContract);
  EXPECT_NE(a.id, b.id);
  EXPECT_EQ(a.status, JobStatus::Created);
  const auto ranked = pipeline.suggest_templates(a.id, 5);
  ASSERT_FALSE(ranked.empty());
  EXPECT_EQ(ranked[0].record.id, "acceptance-of-delivery");
  EXPECT_TRUE(pipeline.suggest_templates(a.id, 0).empty());
  EXPECT_EQ(code_of([&] { pipeline.get_job("nope"); }), Errc::UnknownJob);

  Pipeline empty;
  const auto c = empty.create_job("text");
  EXPECT_EQ(code_of([&] { empty.suggest_templates(c.id, 3); }), Errc::EmptyIndex);
}

TEST_F(PipelineTest, SelectTemplateErrorsLeaveJobUntouched) {
  const auto id = pipeline.create_job(kContract).id;
  EXPECT_EQ(code_of([&] { pipeline.select_template(id, "nope"); }), Errc::UnknownId);
  auto broken = acceptance_record();
  broken.id = "broken";
  broken.concerto_text = "asset X extends Missing {}";
  pipeline.add_template(broken);
  EXPECT_EQ(code_of([&] { pipeline.select_template(id, "broken"); }), Errc::UnknownSuperType);
  EXPECT_EQ(pipeline.get_job(id).status, JobStatus::Created);
  EXPECT_FALSE(pipeline.get_job(id).template_id);
}

TEST_F(PipelineTest, MarkEdits) {
  const auto id = pipeline.create_job(kContract).id;
  pipeline.select_template(id, "acceptance-of-delivery");
  auto job = pipeline.auto_mark(id, tagger);
  ASSERT_EQ(job.marks.size(), 2u);
  job = pipeline.update_marks(id, {RemoveMark{"party2"}});
  EXPECT_EQ(job.marks.size(), 1u);
  EXPECT_EQ(code_of([&] {
              VariableBinding b;
              b.span = LabeledSpan{89, 96, labels::Object, 1.0};
              b.variable_name = "party1";
              pipeline.update_marks(id, {AddMark{b}});
            }),
            Errc::DuplicateVariable);
  EXPECT_EQ(code_of([&] { pipeline.update_marks(id, {RenameMark{"ghost", "x"}}); }), Errc::NotFound);
  EXPECT_EQ(code_of([&] { pipeline.update_marks(id, {RetypeMark{"party1", "Widget", std::nullopt}}); }),
            Errc::UnknownType);
  VariableBinding overlap;
  overlap.span = LabeledSpan{0, 3, labels::String, 1.0};
  overlap.variable_name = "again";
  EXPECT_EQ(code_of([&] { pipeline.update_marks(id, {AddMark{overlap}}); }), Errc::OverlappingMarks);
  EXPECT_EQ(pipeline.get_job(id).marks.size(), 1u);

  job = pipeline.update_marks(id, {RetypeMark{"party1", "String", true}, RenameMark{"party1", "who"}});
  EXPECT_EQ(job.marks[0].variable_name, "who");
  EXPECT_EQ(job.marks[0].concerto_type, "String");
  EXPECT_TRUE(job.marks[0].raw);
  EXPECT_EQ(job.tagger_versions, (std::map<EntityLabel, std::string>{{labels::Party, "baseline-1"}}));
}

TEST_F(PipelineTest, AutoMarkAgainResetsExtraction) {
  const auto id = pipeline.create_job(kContract).id;
  pipeline.select_template(id, "acceptance-of-delivery");
  pipeline.auto_mark(id, tagger);
  pipeline.auto_extract(id, extractor);
  EXPECT_EQ(code_of([&] { pipeline.auto_mark(id, tagger); }), Errc::InvalidState);
  const auto id2 = pipeline.create_job(kContract).id;
  pipeline.select_template(id2, "acceptance-of-delivery");
  pipeline.auto_mark(id2, tagger, 0.9);
  auto job = pipeline.auto_mark(id2, tagger, 0.5);
  EXPECT_EQ(job.status, JobStatus::Marked);
  EXPECT_FALSE(job.instance);
  EXPECT_EQ(code_of([&] { pipeline.auto_mark(id2, tagger, 1.0); }), Errc::BadRequest);
}

TEST_F(PipelineTest, ValuesAndEmission) {
  const auto id = pipeline.create_job(kContract).id;
  pipeline.select_template(id, "acceptance-of-delivery");
  pipeline.auto_mark(id, tagger);
  EXPECT_EQ(code_of([&] { pipeline.emit_output(id); }), Errc::InvalidState);
  auto job = pipeline.auto_extract(id, AbstainAll());
  EXPECT_EQ(job.status, JobStatus::Extracted);
  EXPECT_TRUE(job.instance->values.empty());
  EXPECT_EQ(code_of([&] { pipeline.emit_output(id); }), Errc::ValidationFailed);
  EXPECT_EQ(pipeline.get_job(id).status, JobStatus::Extracted);

  job = pipeline.update_value(id, "shipper", json("Robert"));
  EXPECT_EQ(job.instance->values.at("shipper"), Value(Reference{"Robert"}));
  EXPECT_EQ(job.confidences.at("shipper"), 1.0);
  EXPECT_EQ(code_of([&] { pipeline.update_value(id, "colour", json("red")); }), Errc::BadRequest);

  const auto forced = pipeline.emit_output(id, true);
  EXPECT_FALSE(forced.warnings.empty());
  EXPECT_TRUE(forced.provenance.at("forced").get<bool>());
}

TEST_F(PipelineTest, ContributeIndexesAndQueues) {
  const auto id = run_scenario(pipeline, tagger, extractor);
  const auto rec = pipeline.contribute(id, "Bob Alice Widgets");
  EXPECT_EQ(pipeline.active_learning_queue().size(), 1u);
  EXPECT_EQ(code_of([&] { pipeline.contribute(id, "Bob Alice Widgets"); }), Errc::DuplicateName);
  const auto other = pipeline.create_job(kContract).id;
  EXPECT_EQ(pipeline.suggest_templates(other, 1)[0].record.id, rec.template_record.id);
  EXPECT_EQ(code_of([&] { pipeline.contribute(other, "x"); }), Errc::InvalidState);

  BaselineRetrain hook(Gazetteers{});
  EXPECT_EQ(pipeline.retrain(hook), 1u);
  EXPECT_TRUE(pipeline.active_learning_queue().empty());
  const auto retrained = hook.make_tagger();
  const SourceDocument doc("d", kContract);
  const auto spans = decode_spans(retrained.tag(doc), doc.tokens(), 0.5);
  EXPECT_FALSE(spans.empty());
}

TEST_F(PipelineTest, ReplayIsByteIdentical) {
  const auto id = pipeline.create_job(kContract).id;
  pipeline.select_template(id, "acceptance-of-delivery");
  pipeline.auto_mark(id, tagger, 0.6);
  pipeline.auto_mark(id, tagger);
  pipeline.update_marks(id, scenario_renames());
  pipeline.auto_extract(id, extractor);
  pipeline.update_value(id, "deliverable", json("Premium Widgets"));
  const auto out = pipeline.emit_output(id);
  const auto again = pipeline.replay(out.provenance, kContract, &tagger, &extractor);
  EXPECT_EQ(again.to_json(), out.to_json());

  const BaselineTagger other(party_gazetteer(), {}, "baseline-2");
  EXPECT_EQ(code_of([&] { pipeline.replay(out.provenance, kContract, &other, &extractor); }),
            Errc::ProvenanceMismatch);
}

TEST_F(PipelineTest, StateMachineFuzz) {
  Rng rng(71);
  const std::vector<JobStatus> order{JobStatus::Created, JobStatus::TemplateSelected, JobStatus::Marked,
                                     JobStatus::Extracted, JobStatus::Emitted};
  auto rank = [&](JobStatus s) { return std::find(order.begin(), order.end(), s) - order.begin(); };
  const std::map<int, std::set<JobStatus>> allowed{
      {0, {JobStatus::Created}},
      {1, {JobStatus::TemplateSelected, JobStatus::Marked}},
      {2, {JobStatus::TemplateSelected, JobStatus::Marked, JobStatus::Extracted}},
      {3, {JobStatus::Marked, JobStatus::Extracted}},
      {4, {JobStatus::Marked, JobStatus::Extracted}},
      {5, {JobStatus::Extracted}},
      {6, {JobStatus::Emitted}},
  };
  int contributions = 0;
  for (int iter = 0; iter < 150; ++iter) {
    const auto id = pipeline.create_job(kContract).id;
    for (int step = 0; step < 12; ++step) {
      const int op = static_cast<int>(uniform(rng, 0, 6));
      const auto before = jobs::to_json(pipeline.get_job(id)).dump();
      const auto status = pipeline.get_job(id).status;
      bool ok = true;
      try {
        switch (op) {
          case 0: pipeline.select_template(id, "acceptance-of-delivery"); break;
          case 1: pipeline.auto_mark(id, tagger); break;
          case 2: pipeline.update_marks(id, {}); break;
          case 3: pipeline.auto_extract(id, extractor); break;
          case 4: pipeline.update_value(id, "deliverable", json("Widgets")); break;
          case 5: pipeline.emit_output(id, true); break;
          case 6: pipeline.contribute(id, "fuzz " + std::to_string(contributions)); ++contributions; break;
        }
      } catch (const Error& e) {
        ok = false;
        ASSERT_EQ(e.code(), Errc::InvalidState) << e.what();
        ASSERT_EQ(jobs::to_json(pipeline.get_job(id)).dump(), before);
      }
      ASSERT_EQ(ok, allowed.at(op).count(status) > 0) << "op " << op << " from " << to_string(status);
      ASSERT_GE(rank(pipeline.get_job(id).status), rank(status));
    }
  }
}

TEST(PipelinePersistence, JobsAndQueueSurviveRestart) {
  TempDir dir;
  std::string id;
  ConversionOutput out;
  {
    Pipeline p(fixed_clock_config(dir.path()));
    p.add_template(acceptance_record());
    id = run_scenario(p, BaselineTagger(party_gazetteer()), BaselineExtractor(answer_key()));
    out = *p.get_job(id).output;
    p.contribute(id, "Saved Template");
  }
  EXPECT_TRUE(fs::exists(dir.path() / "jobs" / (id + ".json")));
  Pipeline p(fixed_clock_config(dir.path()));
  const auto job = p.get_job(id);
  EXPECT_EQ(job.status, JobStatus::Emitted);
  EXPECT_EQ(job.output->to_json(), out.to_json());
  EXPECT_EQ(job.marks, Pipeline(fixed_clock_config(dir.path())).get_job(id).marks);
  EXPECT_EQ(p.active_learning_queue().size(), 1u);
  EXPECT_EQ(p.active_learning_queue()[0].template_record.name, "Saved Template");
}

TEST(PipelineConcurrency, DistinctJobsInParallel) {
  Pipeline p(fixed_clock_config());
  p.add_template(acceptance_record());
  const BaselineTagger tagger(party_gazetteer());
  const BaselineExtractor extractor(answer_key());
  std::vector<std::thread> threads;
  std::vector<std::string> outputs(8);
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      const auto id = run_scenario(p, tagger, extractor);
      outputs[t] = p.get_job(id).output->to_json();
    });
  for (auto& th : threads) th.join();
  for (const auto& o : outputs) EXPECT_EQ(o, outputs[0]);
  EXPECT_EQ(p.job_ids().size(), 8u);
}

TEST(PipelineConcurrency, SameJobIsSerialized) {
  Pipeline p(fixed_clock_config());
  p.add_template(acceptance_record());
  const auto id = p.create_job(kContract).id;
  p.select_template(id, "acceptance-of-delivery");
  p.auto_mark(id, BaselineTagger(party_gazetteer()));
  p.auto_extract(id, BaselineExtractor(answer_key()));
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int k = 0; k < 25; ++k) p.update_value(id, "deliverable", json("W" + std::to_string(t * 100 + k)));
    });
  for (auto& th : threads) th.join();
  // Every update landed in the history exactly once.
  EXPECT_EQ(p.get_job(id).history.size(), 2u + 8u * 25u);
}

TEST(MarkedDocuments, RenderedTemplateReproducesText) {
  Rng rng(72);
  for (int iter = 0; iter < 200; ++iter) {
    auto md = random_marked_document(rng);
    ConversionJob job;
    job.document = md.doc;
    job.marks = md.marks;
    const auto t = apply_marks(job.document, job.marks);
    EXPECT_EQ(render(t, values_as_text(job)), md.doc.text());
  }
}
