#pragma once

// Fixtures, random generators and independent oracles shared by the unit
// tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "slc/cicero.hpp"
#include "slc/concerto.hpp"
#include "slc/pipeline.hpp"
#include "slc/qa.hpp"
#include "slc/retrieval.hpp"
#include "slc/tagger.hpp"

namespace slc::testing {

namespace fs = std::filesystem;

// --- fixtures ---------------------------------------------------------------

inline const std::string kContract =
    "Bob will be deemed to have completed its delivery obligations if in Alice's opinion, the "
    "Widgets satisfies the Acceptance Criteria, and Alice notifies Bob in writing that she is "
    "accepting the Widgets.";

inline const std::string kAcceptanceModel =
    "asset AcceptanceOfDelivery extends Contract {\n"
    "  --> Party shipper\n"
    "  --> Party receiver\n"
    "  o String deliverable\n"
    "}\n";

inline const std::string kFig2Cicero =
    "Upon delivery and acceptance, {{buyer}} shall pay to {{seller}} the cost of goods "
    "{{{costOfGoods}}} and the delivery fee {{{deliveryFee}}}.";

inline const std::string kFig2Model =
    "asset PaymentUponDeliveryContract extends Contract {\n"
    "  --> Party buyer\n"
    "  --> Party seller\n"
    "  o MonetaryAmount costOfGoods\n"
    "  o MonetaryAmount deliveryFee\n"
    "}\n";

inline const std::string kFixedTime = "2024-01-02T03:04:05Z";

inline TemplateRecord acceptance_record() {
  TemplateRecord r;
  r.id = "acceptance-of-delivery";
  r.name = "Acceptance of Delivery";
  r.sample_text =
      "Party A will be deemed to have completed its delivery obligations if in Party B's opinion, "
      "the Goods satisfies the Acceptance Criteria, and Party B notifies Party A in writing that it "
      "is accepting the Goods.";
  r.cicero_text =
      "{{shipper}} will be deemed to have completed its delivery obligations if in {{receiver}}'s "
      "opinion, the {{deliverable}} satisfies the Acceptance Criteria.";
  r.concerto_text = kAcceptanceModel;
  r.metadata = {{"class", "AcceptanceOfDelivery"}};
  return r;
}

inline TemplateRecord payment_record() {
  TemplateRecord r;
  r.id = "payment-upon-delivery";
  r.name = "Payment Upon Delivery";
  r.sample_text =
      "Upon delivery and acceptance, Dan shall pay to Jerome the cost of goods 200.00 USD and the "
      "delivery fee 20.00 USD.";
  r.cicero_text = kFig2Cicero;
  r.concerto_text = kFig2Model;
  return r;
}

inline Gazetteers party_gazetteer() { return {{labels::Party, {"Bob", "Alice"}}}; }

inline std::map<std::string, std::string> answer_key() {
  return {{"shipper", "Bob"}, {"receiver", "Alice"}, {"deliverable", "the Widgets"}};
}

inline std::vector<MarkEdit> scenario_renames() {
  return {RenameMark{"party1", "shipper"}, RenameMark{"party2", "receiver"}};
}

inline PipelineConfig fixed_clock_config(fs::path data_dir = {}) {
  PipelineConfig pc;
  pc.data_dir = std::move(data_dir);
  pc.clock = [] { return kFixedTime; };
  return pc;
}

/// The contract walk-through with explicit edits; returns the emitted job id.
inline std::string run_scenario(Pipeline& p, const Tagger& tagger, const SpanExtractor& extractor) {
  const auto id = p.create_job(kContract).id;
  p.select_template(id, "acceptance-of-delivery");
  p.auto_mark(id, tagger, kDefaultThreshold);
  p.update_marks(id, scenario_renames());
  p.auto_extract(id, extractor);
  p.emit_output(id);
  return id;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "slc") {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

// --- random generators --------------------------------------------------------

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline std::string random_word(Rng& rng, std::size_t min_len = 1, std::size_t max_len = 8) {
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  std::string w;
  const auto n = uniform(rng, min_len, max_len);
  for (std::size_t k = 0; k < n; ++k) w += letters[uniform(rng, 0, letters.size() - 1)];
  return w;
}

inline std::string random_identifier(Rng& rng) {
  static const std::string head = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  static const std::string tail = head + "0123456789_";
  std::string s(1, head[uniform(rng, 0, head.size() - 1)]);
  const auto n = uniform(rng, 0, 10);
  for (std::size_t k = 0; k < n; ++k) s += tail[uniform(rng, 0, tail.size() - 1)];
  return s;
}

/// Prose with words, punctuation, newlines and a few non-ASCII letters.
inline std::string random_prose(Rng& rng, std::size_t max_words = 20) {
  static const std::vector<std::string> extra{",", ".", ";", "(", ")", "'", "-", "€", "é", "§", "\n"};
  std::string s;
  const auto n = uniform(rng, 1, max_words);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 || coin(rng, 0.2)) s += coin(rng, 0.1) ? "  " : " ";
    s += coin(rng, 0.15) ? extra[uniform(rng, 0, extra.size() - 1)] : random_word(rng);
  }
  if (coin(rng, 0.2)) s += " ";
  return s;
}

inline CiceroTemplate random_template(Rng& rng) {
  std::vector<cicero::Segment> segs;
  std::set<std::string> names;
  const auto n = uniform(rng, 0, 8);
  for (std::size_t k = 0; k < n; ++k) {
    if (coin(rng)) {
      segs.push_back(cicero::Literal{random_prose(rng, 6)});
    } else {
      auto name = random_identifier(rng);
      if (!names.insert(name).second) continue;
      segs.push_back(cicero::Variable{name, coin(rng)});
    }
  }
  return CiceroTemplate(std::move(segs));
}

/// Acyclic model: supers and class-typed fields only refer to earlier
/// declarations or built-ins; field names are globally unique.
inline ConcertoModel random_model(Rng& rng, std::size_t max_decls = 5) {
  static const std::vector<DeclKind> kinds{DeclKind::Asset, DeclKind::Participant,
                                           DeclKind::Transaction, DeclKind::Concept};
  std::vector<Declaration> decls;
  std::size_t field_counter = 0;
  const auto n = uniform(rng, 0, max_decls);
  for (std::size_t k = 0; k < n; ++k) {
    Declaration d;
    d.kind = kinds[uniform(rng, 0, kinds.size() - 1)];
    d.name = "T" + std::to_string(k) + random_identifier(rng);
    const auto pick = uniform(rng, 0, 3);
    if (pick == 1) d.super = "Contract";
    if (pick == 2) d.super = "Party";
    if (pick == 3 && !decls.empty()) d.super = decls[uniform(rng, 0, decls.size() - 1)].name;
    const auto nf = uniform(rng, 0, 4);
    for (std::size_t f = 0; f < nf; ++f) {
      FieldDecl fd;
      fd.name = "f" + std::to_string(field_counter++) + random_identifier(rng);
      fd.optional = coin(rng, 0.3);
      if (coin(rng, 0.2)) {
        fd.kind = FieldKind::Relationship;
        fd.type_name = decls.empty() || coin(rng) ? "Party" : decls[uniform(rng, 0, decls.size() - 1)].name;
      } else if (coin(rng, 0.2) && !decls.empty()) {
        fd.type_name = decls[uniform(rng, 0, decls.size() - 1)].name;
      } else {
        const auto& prims = concerto::primitive_types();
        fd.type_name = prims[uniform(rng, 0, prims.size() - 1)];
      }
      d.fields.push_back(std::move(fd));
    }
    decls.push_back(std::move(d));
  }
  return ConcertoModel(std::move(decls));
}

inline DataInstance random_instance(Rng& rng, const ConcertoModel& model, const std::string& cls,
                                    int depth = 0);

inline Value random_value(Rng& rng, const ConcertoModel& model, const FieldDecl& f, int depth) {
  if (f.kind == FieldKind::Relationship) return Reference{random_word(rng)};
  const auto& t = f.type_name;
  if (t == "String" || t == "DateTime") return random_prose(rng, 4);
  if (t == "MonetaryAmount")
    return std::to_string(uniform(rng, 0, 9999)) + "." + std::to_string(uniform(rng, 10, 99)) + " USD";
  if (t == "Integer") return static_cast<std::int64_t>(uniform(rng, 0, 2000000)) - 1000000;
  if (t == "Double") return std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
  if (t == "Boolean") return coin(rng);
  return Nested(random_instance(rng, model, t, depth + 1));
}

inline DataInstance random_instance(Rng& rng, const ConcertoModel& model, const std::string& cls, int depth) {
  DataInstance inst;
  inst.class_name = cls;
  for (const auto& f : effective_fields(model, cls)) {
    if (f.optional && coin(rng)) continue;
    inst.values.emplace(f.name, random_value(rng, model, f, depth));
  }
  return inst;
}

/// Document plus non-overlapping token-aligned marks.
struct MarkedDocument {
  SourceDocument doc;
  std::vector<VariableBinding> marks;
};

inline MarkedDocument random_marked_document(Rng& rng) {
  SourceDocument doc(make_uuid(), random_prose(rng, 30));
  std::vector<VariableBinding> marks;
  const auto& toks = doc.tokens();
  std::size_t k = 0;
  std::size_t n = 0;
  while (k < toks.size()) {
    if (coin(rng, 0.25)) {
      const auto len = uniform(rng, 1, std::min<std::size_t>(3, toks.size() - k));
      VariableBinding b;
      b.span = LabeledSpan{toks[k].start, toks[k + len - 1].end, labels::String, 1.0};
      b.variable_name = "v" + std::to_string(n++);
      b.concerto_type = "String";
      b.raw = coin(rng);
      marks.push_back(std::move(b));
      k += len;
    } else {
      ++k;
    }
  }
  std::shuffle(marks.begin(), marks.end(), rng);
  return {std::move(doc), std::move(marks)};
}

// --- independent BM25 oracle -------------------------------------------------------

/// Lower-cased whitespace/punctuation split for ASCII text, stopwords
/// removed. Written separately from the library analyzer on purpose.
inline std::vector<std::string> oracle_terms(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stopwords().count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (std::ispunct(u)) {
      flush();
    } else {
      cur += static_cast<char>(std::tolower(u));
    }
  }
  flush();
  return out;
}

struct OracleHit {
  std::string id;
  double score;
};

inline std::vector<OracleHit> oracle_more_like_this(const std::vector<TemplateRecord>& corpus,
                                                    const std::string& query, std::size_t top_n,
                                                    const MltOptions& o = {}) {
  const double N = static_cast<double>(corpus.size());
  std::vector<std::vector<std::string>> docs;
  for (const auto& r : corpus) docs.push_back(oracle_terms(r.sample_text));
  double total = 0;
  for (const auto& d : docs) total += static_cast<double>(d.size());
  const double avgdl = total / N;

  auto count = [](const std::vector<std::string>& v, const std::string& t) {
    return static_cast<double>(std::count(v.begin(), v.end(), t));
  };
  auto df = [&](const std::string& t) {
    double n = 0;
    for (const auto& d : docs) n += count(d, t) > 0 ? 1 : 0;
    return n;
  };
  auto idf = [&](double dfv) { return std::log(1.0 + (N - dfv + 0.5) / (dfv + 0.5)); };

  const auto q = oracle_terms(query);
  std::set<std::string> uniq(q.begin(), q.end());
  std::vector<std::pair<std::string, double>> selected;
  for (const auto& t : uniq) {
    const double tf = count(q, t);
    const double d = df(t);
    if (tf < static_cast<double>(o.min_term_freq) || d < static_cast<double>(o.min_doc_freq)) continue;
    selected.emplace_back(t, tf * idf(d));
  }
  std::sort(selected.begin(), selected.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  if (selected.size() > o.max_terms) selected.resize(o.max_terms);

  std::vector<OracleHit> hits;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double s = 0;
    const double len = static_cast<double>(docs[i].size());
    for (const auto& [t, _] : selected) {
      const double tf = count(docs[i], t);
      if (tf == 0) continue;
      s += idf(df(t)) * (tf * (o.k1 + 1)) / (tf + o.k1 * (1 - o.b + o.b * len / avgdl));
    }
    if (s > 0) hits.push_back({corpus[i].id, s});
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  });
  if (hits.size() > top_n) hits.resize(top_n);
  return hits;
}

/// Up to 20 synthetic templates. Each mixes a shared vocabulary with a few
/// terms of its own, so every template is distinguishable from the rest.
inline std::vector<TemplateRecord> random_corpus(Rng& rng) {
  static const std::vector<std::string> shared{
      "delivery", "payment", "goods",   "party",   "seller",    "buyer",  "notice",
      "term",     "breach",  "invoice", "warranty", "liability", "months", "days",
      "fee",      "price",   "agreement", "services", "client",  "supplier"};
  const auto n = uniform(rng, 1, 20);
  std::vector<TemplateRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    TemplateRecord r;
    r.id = "tpl" + std::to_string(i);
    r.name = "Template " + std::to_string(i);
    std::vector<std::string> words;
    const auto own = uniform(rng, 2, 5);
    for (std::size_t k = 0; k < own; ++k) {
      const auto w = "u" + std::to_string(i) + "x" + std::to_string(k) + random_word(rng, 2, 4);
      const auto reps = uniform(rng, 1, 3);
      for (std::size_t r2 = 0; r2 < reps; ++r2) words.push_back(w);
    }
    const auto common = uniform(rng, 3, 25);
    for (std::size_t k = 0; k < common; ++k) words.push_back(shared[uniform(rng, 0, shared.size() - 1)]);
    if (coin(rng, 0.5)) words.push_back("the");
    std::shuffle(words.begin(), words.end(), rng);
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (k) r.sample_text += coin(rng, 0.1) ? ", " : " ";
      r.sample_text += words[k];
    }
    r.sample_text += ".";
    out.push_back(std::move(r));
  }
  return out;
}

// --- other oracles ----------------------------------------------------------------

/// Expected aggregation for a CoNLL tag, written out as a table.
inline std::set<EntityLabel> table1_expected(const std::string& tag) {
  if (tag == "O") return {};
  const auto type = tag.substr(2);
  static const std::map<std::string, std::set<EntityLabel>> table{
      {"per", {labels::Party, labels::String}},        {"org", {labels::Party, labels::String}},
      {"geo", {labels::Party, labels::String}},        {"gpe", {labels::Party, labels::String}},
      {"art", {labels::Object, labels::String}},       {"MISC", {labels::Object, labels::String}},
      {"nat", {labels::Object, labels::String}},       {"tim", {labels::TemporalUnit, labels::String}},
  };
  return table.at(type);
}

}  // namespace slc::testing
