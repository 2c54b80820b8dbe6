#pragma once

// "More like this" template retrieval: pick the most distinctive terms of a
// query document by tf-idf and rank indexed templates by BM25 over them.
// New templates only need indexing; nothing is trained.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slc/error.hpp"
#include "slc/text.hpp"

namespace slc {

struct TemplateRecord {
  std::string id;
  std::string name;
  std::string sample_text;
  std::string cicero_text;
  std::string concerto_text;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const TemplateRecord&, const TemplateRecord&) = default;
};

struct Posting {
  std::string doc_id;
  std::size_t term_frequency = 0;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct IndexStats {
  std::size_t doc_count = 0;
  std::map<std::string, std::size_t> doc_frequencies;
  double avg_doc_len = 0.0;
  std::map<std::string, std::vector<Posting>> postings;  // sorted by doc id

  friend bool operator==(const IndexStats&, const IndexStats&) = default;
};

struct MltOptions {
  double k1 = 1.2;
  double b = 0.75;
  std::size_t max_terms = 25;
  std::size_t min_term_freq = 1;
  std::size_t min_doc_freq = 1;
};

struct ScoredTerm {
  std::string term;
  double score = 0.0;
};

struct ScoredTemplate {
  TemplateRecord record;
  double score = 0.0;
};

/// Fixed 50-word English stopword list.
inline const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words{
      "a",    "an",    "and",   "are",  "as",   "at",   "be",    "but",   "by",   "for",
      "if",   "in",    "into",  "is",   "it",   "no",   "not",   "of",    "on",   "or",
      "such", "that",  "the",   "their", "then", "there", "these", "they", "this", "to",
      "was",  "will",  "with",  "he",   "she",  "his",  "her",   "its",   "we",   "our",
      "you",  "your",  "from",  "has",  "have", "had",  "which", "who",   "been", "were"};
  return words;
}

/// Index/query analyzer: tokenizer output, lowercased, without
/// punctuation-only tokens and stopwords.
inline std::vector<std::string> analyze(std::string_view text) {
  std::vector<std::string> terms;
  for (const auto& tok : tokenize(text)) {
    if (tok.end - tok.start == 1) {
      const auto cp = utf8::decode_at(tok.surface, 0);
      if (is_punct_cp(cp)) continue;
    }
    if (is_brace_cp(utf8::decode_at(tok.surface, 0))) continue;
    auto term = ascii_lower(tok.surface);
    if (stopwords().count(term)) continue;
    terms.push_back(std::move(term));
  }
  return terms;
}

/// BM25 inverse document frequency: ln(1 + (N - df + 0.5) / (df + 0.5)).
inline double bm25_idf(std::size_t doc_count, std::size_t doc_freq) noexcept {
  const double n = static_cast<double>(doc_count);
  const double df = static_cast<double>(doc_freq);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

/// Thread-safe inverted index over template sample texts. Any number of
/// concurrent readers or a single writer.
class TemplateIndex {
 public:
  explicit TemplateIndex(MltOptions options = {}) : options_(options) {}

  TemplateIndex(const TemplateIndex&) = delete;
  TemplateIndex& operator=(const TemplateIndex&) = delete;

  const MltOptions& options() const noexcept { return options_; }

  void index_template(TemplateRecord record, bool reindex = false) {
    if (record.sample_text.empty())
      throw Error(Errc::BadRequest, "template sample text is empty", {{"id", record.id}});
    Doc doc;
    for (auto& term : analyze(record.sample_text)) {
      ++doc.tf[term];
      ++doc.length;
    }
    auto lock = write_lock();
    if (docs_.count(record.id)) {
      if (!reindex)
        throw Error(Errc::DuplicateId, "template id already indexed: " + record.id,
                    {{"id", record.id}});
      erase_locked(record.id);
    }
    for (const auto& [term, tf] : doc.tf) postings_[term][record.id] = tf;
    total_len_ += doc.length;
    const auto id = record.id;
    doc.record = std::move(record);
    docs_.emplace(id, std::move(doc));
  }

  void remove_template(const std::string& id) {
    auto lock = write_lock();
    if (!docs_.count(id)) throw Error(Errc::UnknownId, "unknown template id: " + id, {{"id", id}});
    erase_locked(id);
  }

  std::optional<TemplateRecord> get(const std::string& id) const {
    auto lock = read_lock();
    auto it = docs_.find(id);
    if (it == docs_.end()) return std::nullopt;
    return it->second.record;
  }

  /// All records ordered by id.
  std::vector<TemplateRecord> records() const {
    auto lock = read_lock();
    std::vector<TemplateRecord> out;
    for (const auto& [_, d] : docs_) out.push_back(d.record);
    return out;
  }

  std::size_t size() const {
    auto lock = read_lock();
    return docs_.size();
  }

  IndexStats stats() const {
    auto lock = read_lock();
    IndexStats s;
    s.doc_count = docs_.size();
    s.avg_doc_len = avg_doc_len_locked();
    for (const auto& [term, docs] : postings_) {
      s.doc_frequencies[term] = docs.size();
      auto& list = s.postings[term];
      for (const auto& [id, tf] : docs) list.push_back({id, tf});
    }
    return s;
  }

  std::vector<ScoredTerm> select_query_terms(std::string_view text, std::size_t max_terms) const {
    auto opts = options_;
    opts.max_terms = max_terms;
    return select_query_terms(text, opts);
  }

  /// Query terms ranked by tf × idf (descending, ties by term).
  std::vector<ScoredTerm> select_query_terms(std::string_view text, const MltOptions& opts) const {
    auto lock = read_lock();
    return select_locked(text, opts);
  }

  std::vector<ScoredTemplate> more_like_this(std::string_view text, std::size_t top_n) const {
    auto lock = read_lock();
    const auto terms = select_locked(text, options_);
    const double avgdl = avg_doc_len_locked();
    std::map<std::string, double> scores;
    for (const auto& st : terms) {
      auto pit = postings_.find(st.term);
      if (pit == postings_.end()) continue;
      const double idf = bm25_idf(docs_.size(), pit->second.size());
      for (const auto& [id, tf] : pit->second) {
        const double f = static_cast<double>(tf);
        const double len = static_cast<double>(docs_.at(id).length);
        const double norm = options_.k1 * (1.0 - options_.b + options_.b * len / avgdl);
        scores[id] += idf * (f * (options_.k1 + 1.0)) / (f + norm);
      }
    }
    std::vector<ScoredTemplate> ranked;
    for (const auto& [id, score] : scores)
      if (score > 0.0) ranked.push_back({docs_.at(id).record, score});
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.score > b.score || (a.score == b.score && a.record.id < b.record.id);
    });
    if (ranked.size() > top_n) ranked.resize(top_n);
    return ranked;
  }

 private:
  struct Doc {
    TemplateRecord record;
    std::map<std::string, std::size_t> tf;
    std::size_t length = 0;
  };

  void erase_locked(const std::string& id) {
    auto it = docs_.find(id);
    for (const auto& [term, _] : it->second.tf) {
      auto pit = postings_.find(term);
      pit->second.erase(id);
      if (pit->second.empty()) postings_.erase(pit);
    }
    total_len_ -= it->second.length;
    docs_.erase(it);
  }

  double avg_doc_len_locked() const noexcept {
    return docs_.empty() ? 0.0
                         : static_cast<double>(total_len_) / static_cast<double>(docs_.size());
  }

  std::vector<ScoredTerm> select_locked(std::string_view text, const MltOptions& opts) const {
    if (docs_.empty()) throw Error(Errc::EmptyIndex, "template index is empty");
    std::map<std::string, std::size_t> query_tf;
    for (auto& term : analyze(text)) ++query_tf[term];
    std::vector<ScoredTerm> out;
    for (const auto& [term, tf] : query_tf) {
      if (tf < opts.min_term_freq) continue;
      auto pit = postings_.find(term);
      const std::size_t df = pit == postings_.end() ? 0 : pit->second.size();
      if (df < opts.min_doc_freq) continue;
      out.push_back({term, static_cast<double>(tf) * bm25_idf(docs_.size(), df)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.score > b.score || (a.score == b.score && a.term < b.term);
    });
    if (out.size() > opts.max_terms) out.resize(opts.max_terms);
    return out;
  }

  // The platform rwlock may prefer readers, which starves writers under a
  // steady query load. A writer holds gate_ while it waits, so new readers
  // queue behind it.
  std::shared_lock<std::shared_mutex> read_lock() const {
    std::lock_guard g(gate_);
    return std::shared_lock(mutex_);
  }
  std::unique_lock<std::shared_mutex> write_lock() {
    std::lock_guard g(gate_);
    return std::unique_lock(mutex_);
  }

  MltOptions options_;
  mutable std::mutex gate_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Doc> docs_;
  std::map<std::string, std::map<std::string, std::size_t>> postings_;
  std::size_t total_len_ = 0;
};

}  // namespace slc
