// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "slc/service.hpp"
#include "support.hpp"

using namespace slc;
using namespace slc::testing;

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

template <class A, class B>
void require_eq(const A& a, const B& b, const std::string& what) {
  if (!(a == b)) {
    std::ostringstream os;
    os << what << ": got " << json(a).dump() << ", want " << json(b).dump();
    throw Failed(os.str());
  }
}

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string why;
  try {
    body();
  } catch (const Failed& e) {
    why = e.what();
  } catch (const Error& e) {
    why = std::string(code_name(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    why = e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (why.empty() && budget_s > 0 && secs > budget_s) why = "over time budget of " + std::to_string(budget_s) + "s";
  std::printf("[%s] %s (%.3fs)%s%s\n", why.empty() ? "PASS" : "FAIL", name.c_str(), secs, why.empty() ? "" : ": ",
              why.c_str());
  std::fflush(stdout);
  if (!why.empty()) ++failures;
}

void fig2() {
  const auto t = parse_template(kFig2Cicero);
  const std::vector<cicero::Variable> want{
      {"buyer", false}, {"seller", false}, {"costOfGoods", true}, {"deliveryFee", true}};
  require(list_variables(t) == want, "template variables differ");
  const auto m = parse_model(kFig2Model);
  require_eq(m.declarations().size(), std::size_t{1}, "declaration count");
  const std::vector<FieldDecl> fields{{FieldKind::Relationship, "Party", "buyer", false},
                                      {FieldKind::Relationship, "Party", "seller", false},
                                      {FieldKind::Property, "MonetaryAmount", "costOfGoods", false},
                                      {FieldKind::Property, "MonetaryAmount", "deliveryFee", false}};
  require(m.declarations()[0].fields == fields, "model fields differ");
}

void end_to_end() {
  Pipeline p(fixed_clock_config());
  p.add_template(acceptance_record());
  const BaselineTagger tagger(party_gazetteer());
  const BaselineExtractor extractor(answer_key());
  const auto out = *p.get_job(run_scenario(p, tagger, extractor)).output;
  require_eq(out.instance_json,
             std::string(R"({"$class":"AcceptanceOfDelivery","deliverable":"Widgets","receiver":"Alice","shipper":"Bob"})"),
             "instance");
  const auto t = parse_template(out.cicero_text);
  std::map<std::string, std::string> values;
  const auto inst = json::parse(out.instance_json);
  for (const auto& v : list_variables(t)) values[v.name] = inst.at(v.name).get<std::string>();
  require_eq(render(t, values), std::string(kContract), "rendered template");
}

void table1() {
  for (const std::string prefix : {"B-", "I-"})
    for (const std::string type : {"per", "org", "geo", "gpe", "art", "MISC", "nat", "tim"}) {
      const auto tag = prefix + type;
      const auto got = aggregate_label(tag);
      require(got == table1_expected(tag), "mapping for " + tag);
      require(got.count(labels::String) == 1, "String missing for " + tag);
    }
  require(aggregate_label("O").empty(), "O must map to nothing");
}

void confidence() {
  require(std::abs(answer_confidence(0.8, 0.6) - 0.7) <= 1e-12, "spot check 0.8/0.6");
  Rng rng(1);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double s = p(rng), e = p(rng);
    require(std::abs(answer_confidence(s, e) - (s + e) / 2) <= 1e-12, "pair " + std::to_string(k));
  }
}

std::string numbered_words(std::size_t n) {
  std::string s;
  for (std::size_t k = 0; k < n; ++k) s += (k ? " w" : "w") + std::to_string(k);
  return s;
}

void chunking() {
  Rng rng(2);
  for (int iter = 0; iter < 500; ++iter) {
    const auto n = uniform(rng, 1, 5000);
    const auto window = uniform(rng, 2, 512);
    const auto stride = uniform(rng, 1, window - 1);
    const SourceDocument doc("d", numbered_words(n));
    const auto chunks = chunk_document(doc, window, stride);
    std::vector<bool> seen(n, false);
    for (const auto& c : chunks)
      for (auto k = c.token_start; k < c.token_end; ++k) seen[k] = true;
    const auto ctx = std::to_string(n) + "/" + std::to_string(window) + "/" + std::to_string(stride);
    require(std::find(seen.begin(), seen.end(), false) == seen.end(), "uncovered token " + ctx);

    const auto len = uniform(rng, 1, std::min(window - stride, n));
    const auto at = uniform(rng, 0, n - len);
    require(std::any_of(chunks.begin(), chunks.end(),
                        [&](const Chunk& c) { return c.token_start <= at && at + len <= c.token_end; }),
            "planted answer split " + ctx);

    if (n <= window) {
      std::string phrase = doc.tokens()[at].surface;
      for (auto k = at + 1; k < at + len; ++k) phrase += " " + doc.tokens()[k].surface;
      const BaselineExtractor ex({{"item", phrase}});
      const auto q = generate_question("item", "String");
      const auto chunked = extract_field(q, doc, ex, window, stride);
      const auto whole = ex.answer(q.text, doc.text());
      require(chunked && whole && chunked->start == whole->start && chunked->end == whole->end,
              "chunked extraction differs " + ctx);
    }
  }
}

void retrieval() {
  Rng rng(3);
  for (int iter = 0; iter < 200; ++iter) {
    const auto corpus = random_corpus(rng);
    TemplateIndex idx;
    for (const auto& r : corpus) idx.index_template(r);
    for (const auto& r : corpus) {
      const auto got = idx.more_like_this(r.sample_text, corpus.size());
      const auto want = oracle_more_like_this(corpus, r.sample_text, corpus.size());
      require_eq(got.size(), want.size(), "hit count");
      for (std::size_t k = 0; k < got.size(); ++k) {
        require_eq(got[k].record.id, want[k].id, "rank " + std::to_string(k));
        require(std::abs(got[k].score - want[k].score) <= 1e-9, "score for " + want[k].id);
      }
      require(!got.empty() && got[0].record.id == r.id, "self retrieval for " + r.id);
    }
  }
}

void round_trips() {
  Rng rng(4);
  for (int k = 0; k < 1000; ++k) {
    const auto t = random_template(rng);
    const auto back = parse_template(t.serialize());
    require(back == t && back.serialize() == t.serialize(), "template " + t.serialize());
  }
  for (int k = 0; k < 1000; ++k) {
    const auto m = random_model(rng);
    const auto text = print_model(m);
    const auto back = parse_model(text);
    require(back == m && print_model(back) == text, "model\n" + text);
  }
  for (int k = 0; k < 1000;) {
    const auto m = random_model(rng);
    if (m.declarations().empty()) continue;
    const auto& d = m.declarations()[uniform(rng, 0, m.declarations().size() - 1)];
    const auto inst = random_instance(rng, m, d.name);
    const auto text = instance_to_json(inst);
    const auto back = instance_from_json(m, text);
    require(back == inst && instance_to_json(back) == text, "instance " + text);
    ++k;
  }
  for (int k = 0; k < 1000; ++k) {
    const auto md = random_marked_document(rng);
    const auto t = apply_marks(md.doc, md.marks);
    std::map<std::string, std::string> values;
    for (const auto& m : md.marks) values[m.variable_name] = std::string(md.doc.slice(m.span.start, m.span.end));
    require(render(t, values) == md.doc.text(), "apply_marks/render " + t.serialize());
  }
}

void reproducibility() {
  Pipeline p(fixed_clock_config());
  p.add_template(acceptance_record());
  const BaselineTagger tagger(party_gazetteer());
  const BaselineExtractor extractor(answer_key());
  const auto id = p.create_job(kContract).id;
  p.select_template(id, "acceptance-of-delivery");
  p.auto_mark(id, tagger, 0.6);
  p.update_marks(id, scenario_renames());
  p.auto_extract(id, extractor);
  p.update_value(id, "deliverable", json("Premium Widgets"));
  const auto out = p.emit_output(id);
  const auto again = p.replay(out.provenance, kContract, &tagger, &extractor);
  require_eq(again.to_json(), out.to_json(), "replayed output");
}

json call(httplib::Client& c, const std::string& method, const std::string& path, const json& body, int want) {
  httplib::Result res;
  const auto payload = body.is_null() ? std::string() : body.dump();
  if (method == "GET") res = c.Get(path);
  if (method == "POST") res = c.Post(path, payload, "application/json");
  if (method == "PUT") res = c.Put(path, payload, "application/json");
  if (method == "PATCH") res = c.Patch(path, payload, "application/json");
  require(static_cast<bool>(res), "no response for " + method + " " + path);
  require(res->status == want, method + " " + path + " -> " + std::to_string(res->status) + " " + res->body);
  return res->body.empty() ? json() : json::parse(res->body);
}

void http_parity() {
  auto tagger = std::make_shared<BaselineTagger>(party_gazetteer());
  auto extractor = std::make_shared<BaselineExtractor>(answer_key());
  ModelServer stub(tagger, extractor);
  stub.start();

  Pipeline direct(fixed_clock_config());
  direct.add_template(acceptance_record());
  direct.add_template(payment_record());
  const RemoteTagger rt(stub.url(), {labels::Party}, {{labels::Party, "baseline-1"}});
  const RemoteExtractor rx(stub.url());
  const auto direct_out = *direct.get_job(run_scenario(direct, rt, rx)).output;

  TempDir dir;
  ServiceConfig cfg;
  cfg.data_dir = dir.path();
  cfg.clock = [] { return kFixedTime; };
  cfg.tagger_url = stub.url();
  cfg.qa_url = stub.url();
  Service service(cfg);
  service.pipeline().add_template(acceptance_record());
  service.pipeline().add_template(payment_record());
  const int port = service.bind("127.0.0.1", 0);
  service.start_background();

  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(10, 0);
  call(c, "POST", "/taggers", {{"label", "Party"}, {"version", "baseline-1"}}, 201);
  const auto id = call(c, "POST", "/jobs", {{"text", kContract}}, 201).at("id").get<std::string>();
  const auto suggested = call(c, "GET", "/jobs/" + id + "/templates?n=2", nullptr, 200);
  require_eq(suggested["templates"][0]["id"].get<std::string>(), std::string("acceptance-of-delivery"), "top template");
  call(c, "PUT", "/jobs/" + id + "/template", {{"template_id", "acceptance-of-delivery"}}, 200);
  call(c, "POST", "/jobs/" + id + "/marks:auto", json::object(), 200);
  json edits = json::array();
  for (const auto& e : scenario_renames()) edits.push_back(slc::to_json(e));
  call(c, "PATCH", "/jobs/" + id + "/marks", {{"edits", edits}}, 200);
  call(c, "POST", "/jobs/" + id + "/extract", json::object(), 200);
  const auto http_out = call(c, "POST", "/jobs/" + id + "/output", json::object(), 200);
  service.stop();
  require_eq(ConversionOutput::from_json(http_out).to_json(), direct_out.to_json(), "HTTP output");
}

}  // namespace

int main() {
  criterion("Fig. 2 template and model reproduction", 1, fig2);
  criterion("Contract end-to-end conversion", 1, end_to_end);
  criterion("Table 1 label aggregation", 0, table1);
  criterion("Answer confidence rule", 0, confidence);
  criterion("Chunking coverage and containment", 10, chunking);
  criterion("Retrieval matches brute-force BM25", 30, retrieval);
  criterion("Round-trip suite", 0, round_trips);
  criterion("Reproducible replay from provenance", 0, reproducibility);
  criterion("HTTP parity with direct calls", 0, http_parity);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
