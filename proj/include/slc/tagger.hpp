#pragma once

// Entity tagging for Cicero mark proposals.
//
// A tagger emits, for every token and every label, independent B and I
// probabilities (no softmax across labels, so one token may carry several
// interpretations). Spans are decoded per label and turned into variable
// bindings that a human then accepts, renames or retypes.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slc/cicero.hpp"
#include "slc/core.hpp"
#include "slc/error.hpp"
#include "slc/text.hpp"

namespace slc {

struct TagProbability {
  double b = 0.0;
  double i = 0.0;
  friend bool operator==(const TagProbability&, const TagProbability&) = default;
};

/// Per-token, per-label B/I probabilities. Absent entries read as zero.
class TokenLabelMatrix {
 public:
  TokenLabelMatrix() = default;
  explicit TokenLabelMatrix(std::size_t token_count) : rows_(token_count) {}

  std::size_t size() const noexcept { return rows_.size(); }

  void set(std::size_t token, const EntityLabel& label, TagProbability p) {
    if (!(p.b >= 0.0 && p.b <= 1.0 && p.i >= 0.0 && p.i <= 1.0))
      throw Error(Errc::BadRequest, "tag probability outside [0,1]",
                  {{"token", token}, {"label", label.name()}});
    rows_.at(token)[label] = p;
  }

  TagProbability get(std::size_t token, const EntityLabel& label) const {
    const auto& row = rows_.at(token);
    auto it = row.find(label);
    return it == row.end() ? TagProbability{} : it->second;
  }

  const std::map<EntityLabel, TagProbability>& row(std::size_t token) const { return rows_.at(token); }

  std::set<EntityLabel> labels() const {
    std::set<EntityLabel> out;
    for (const auto& row : rows_)
      for (const auto& [label, _] : row) out.insert(label);
    return out;
  }

  friend bool operator==(const TokenLabelMatrix&, const TokenLabelMatrix&) = default;

 private:
  std::vector<std::map<EntityLabel, TagProbability>> rows_;
};

/// Maps a CoNLL-style tag to SLC labels: per/org/geo/gpe give Party,
/// art/MISC/nat give Object, tim gives TemporalUnit, and every entity tag
/// also gives String. Entity types compare case-insensitively.
inline std::set<EntityLabel> aggregate_label(std::string_view conll_tag) {
  if (conll_tag == "O") return {};
  if (conll_tag.size() < 3 || (conll_tag[0] != 'B' && conll_tag[0] != 'I') || conll_tag[1] != '-')
    throw Error(Errc::MalformedTag, "malformed CoNLL tag: " + std::string(conll_tag),
                {{"tag", conll_tag}});
  const auto type = ascii_lower(conll_tag.substr(2));
  for (char c : type)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      throw Error(Errc::MalformedTag, "malformed CoNLL tag: " + std::string(conll_tag),
                  {{"tag", conll_tag}});
  std::set<EntityLabel> out{labels::String};
  if (type == "per" || type == "org" || type == "geo" || type == "gpe")
    out.insert(labels::Party);
  else if (type == "art" || type == "misc" || type == "nat")
    out.insert(labels::Object);
  else if (type == "tim")
    out.insert(labels::TemporalUnit);
  return out;
}

/// Greedy BIO decode, independently per label. A span opens on a token whose
/// B probability reaches the threshold and extends over following tokens
/// whose I probability does. Span probability is the mean over its tokens.
inline std::vector<LabeledSpan> decode_spans(const TokenLabelMatrix& matrix,
                                             std::span<const Token> tokens, double threshold) {
  if (matrix.size() != tokens.size())
    throw Error(Errc::BadRequest, "tag matrix size does not match token count",
                {{"matrix", matrix.size()}, {"tokens", tokens.size()}});
  std::vector<LabeledSpan> spans;
  for (const auto& label : matrix.labels()) {
    std::size_t k = 0;
    while (k < tokens.size()) {
      const double pb = matrix.get(k, label).b;
      if (pb < threshold) {
        ++k;
        continue;
      }
      double sum = pb;
      std::size_t j = k + 1;
      while (j < tokens.size()) {
        const double pi = matrix.get(j, label).i;
        if (pi < threshold) break;
        sum += pi;
        ++j;
      }
      spans.push_back({tokens[k].start, tokens[j - 1].end, label,
                       sum / static_cast<double>(j - k)});
      k = j;
    }
  }
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end < b.end;
    return a.label < b.label;
  });
  return spans;
}

/// Token tagger. Implementations must be deterministic for a fixed version
/// set and safe to call concurrently.
class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual TokenLabelMatrix tag(const SourceDocument& document) const = 0;
  virtual std::map<EntityLabel, std::string> versions() const = 0;
};

using Gazetteers = std::map<EntityLabel, std::set<std::string>>;
using PatternTable = std::map<EntityLabel, std::vector<std::string>>;

namespace detail {

inline std::vector<std::pair<EntityLabel, std::regex>> compile_patterns(const PatternTable& patterns) {
  std::vector<std::pair<EntityLabel, std::regex>> out;
  for (const auto& [label, list] : patterns) {
    for (const auto& p : list) {
      try {
        out.emplace_back(label, std::regex(p, std::regex::ECMAScript));
      } catch (const std::regex_error& e) {
        throw Error(Errc::InvalidPattern, "invalid pattern '" + p + "': " + e.what(),
                    {{"label", label.name()}, {"pattern", p}});
      }
    }
  }
  return out;
}

inline void mark_run(TokenLabelMatrix& m, const EntityLabel& label, std::size_t first,
                     std::size_t last) {
  auto p = m.get(first, label);
  p.b = 1.0;
  m.set(first, label, p);
  for (std::size_t k = first + 1; k <= last; ++k) {
    auto q = m.get(k, label);
    q.i = 1.0;
    m.set(k, label, q);
  }
}

inline TokenLabelMatrix baseline_tag_compiled(
    const SourceDocument& doc, const Gazetteers& gazetteers,
    const std::vector<std::pair<EntityLabel, std::regex>>& patterns) {
  const auto& tokens = doc.tokens();
  TokenLabelMatrix m(tokens.size());
  for (const auto& [label, phrases] : gazetteers) {
    for (const auto& phrase : phrases) {
      const auto want = tokenize(phrase);
      if (want.empty() || want.size() > tokens.size()) continue;
      for (std::size_t k = 0; k + want.size() <= tokens.size(); ++k) {
        bool hit = true;
        for (std::size_t w = 0; w < want.size() && hit; ++w)
          hit = tokens[k + w].surface == want[w].surface;
        if (hit) mark_run(m, label, k, k + want.size() - 1);
      }
    }
  }
  const std::string& text = doc.text();
  for (const auto& [label, re] : patterns) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
         ++it) {
      if (it->length(0) == 0) continue;
      const auto byte_begin = static_cast<std::size_t>(it->position(0));
      const auto byte_end = byte_begin + static_cast<std::size_t>(it->length(0));
      const auto cb = doc.char_offset(byte_begin);
      const auto ce = doc.char_offset(byte_end);
      if (cb == SourceDocument::npos || ce == SourceDocument::npos) continue;
      const auto first = doc.token_starting_at(cb);
      const auto last = doc.token_ending_at(ce);
      if (first == SourceDocument::npos || last == SourceDocument::npos || last < first) continue;
      mark_run(m, label, first, last);
    }
  }
  return m;
}

}  // namespace detail

/// Deterministic stand-in tagger: exact gazetteer phrases and token-aligned
/// regex matches get probability 1.0 (B on the first token, I after).
inline TokenLabelMatrix baseline_tag(const SourceDocument& doc, const Gazetteers& gazetteers,
                                     const PatternTable& patterns) {
  return detail::baseline_tag_compiled(doc, gazetteers, detail::compile_patterns(patterns));
}

class BaselineTagger final : public Tagger {
 public:
  BaselineTagger(Gazetteers gazetteers, PatternTable patterns = {},
                 std::string version = "baseline-1")
      : gazetteers_(std::move(gazetteers)), patterns_(std::move(patterns)),
        compiled_(detail::compile_patterns(patterns_)), version_(std::move(version)) {}

  TokenLabelMatrix tag(const SourceDocument& document) const override {
    return detail::baseline_tag_compiled(document, gazetteers_, compiled_);
  }

  std::map<EntityLabel, std::string> versions() const override {
    std::map<EntityLabel, std::string> out;
    for (const auto& [label, _] : gazetteers_) out[label] = version_;
    for (const auto& [label, _] : patterns_) out[label] = version_;
    return out;
  }

  const Gazetteers& gazetteers() const noexcept { return gazetteers_; }
  const PatternTable& patterns() const noexcept { return patterns_; }

 private:
  Gazetteers gazetteers_;
  PatternTable patterns_;
  std::vector<std::pair<EntityLabel, std::regex>> compiled_;
  std::string version_;
};

// ---------------------------------------------------------------------------
// Tagger versions

enum class TaggerSource { Baseline, Remote };

inline std::string_view to_string(TaggerSource s) noexcept {
  return s == TaggerSource::Baseline ? "baseline" : "remote";
}

struct TaggerVersion {
  EntityLabel label;
  std::string version;
  TaggerSource source = TaggerSource::Baseline;
  friend bool operator==(const TaggerVersion&, const TaggerVersion&) = default;
};

/// Natural ordering: digit runs compare numerically, so "v2" < "v10".
inline bool version_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  while (i < a.size() && j < b.size()) {
    if (digit(a[i]) && digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && digit(a[ie])) ++ie;
      while (je < b.size() && digit(b[je])) ++je;
      auto da = a.substr(i, ie - i), db = b.substr(j, je - j);
      while (da.size() > 1 && da.front() == '0') da.remove_prefix(1);
      while (db.size() > 1 && db.front() == '0') db.remove_prefix(1);
      if (da.size() != db.size()) return da.size() < db.size();
      if (da != db) return da < db;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return (a.size() - i) < (b.size() - j);
}

/// Which tagger version serves each label.
class TaggerVersionRegistry {
 public:
  void register_version(const EntityLabel& label, const std::string& version, TaggerSource source) {
    std::unique_lock lock(mutex_);
    auto& list = versions_[label];
    for (const auto& v : list)
      if (v.version == version)
        throw Error(Errc::DuplicateVersion, "version already registered: " + label.name() + "@" + version,
                    {{"label", label.name()}, {"version", version}});
    list.push_back({label, version, source});
  }

  /// Pinned version where given, otherwise the latest registered one.
  std::map<EntityLabel, std::string> resolve(const std::vector<EntityLabel>& labels,
                                             const std::map<EntityLabel, std::string>& pins = {}) const {
    std::shared_lock lock(mutex_);
    std::map<EntityLabel, std::string> out;
    for (const auto& label : labels) {
      auto it = versions_.find(label);
      if (it == versions_.end() || it->second.empty())
        throw Error(Errc::UnknownLabel, "no tagger registered for label " + label.name(),
                    {{"label", label.name()}});
      if (auto pin = pins.find(label); pin != pins.end()) {
        const bool known = std::any_of(it->second.begin(), it->second.end(),
                                       [&](const auto& v) { return v.version == pin->second; });
        if (!known)
          throw Error(Errc::UnknownId, "unknown version " + pin->second + " for " + label.name(),
                      {{"label", label.name()}, {"version", pin->second}});
        out[label] = pin->second;
        continue;
      }
      const auto latest = std::max_element(
          it->second.begin(), it->second.end(),
          [](const auto& a, const auto& b) { return version_less(a.version, b.version); });
      out[label] = latest->version;
    }
    return out;
  }

  std::vector<TaggerVersion> all() const {
    std::shared_lock lock(mutex_);
    std::vector<TaggerVersion> out;
    for (const auto& [_, list] : versions_) out.insert(out.end(), list.begin(), list.end());
    return out;
  }

  std::vector<EntityLabel> labels() const {
    std::shared_lock lock(mutex_);
    std::vector<EntityLabel> out;
    for (const auto& [label, _] : versions_) out.push_back(label);
    return out;
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<EntityLabel, std::vector<TaggerVersion>> versions_;
};

// ---------------------------------------------------------------------------
// Mark proposals

inline constexpr double kDefaultThreshold = 0.5;

struct MarkProposal {
  std::vector<VariableBinding> bindings;  // may overlap across labels
  std::map<EntityLabel, std::string> tagger_versions;
  std::vector<cicero::Variable> template_hints;  // variables of the chosen template
};

/// Tags the document and turns decoded spans into candidate bindings named
/// <label><n>. Repeats of a surface form under one label collapse into the
/// first binding's occurrence list.
inline MarkProposal propose_marks(const SourceDocument& document, const CiceroTemplate* hint,
                                  const Tagger& tagger, double threshold = kDefaultThreshold) {
  MarkProposal out;
  out.tagger_versions = tagger.versions();
  if (hint) out.template_hints = hint->variables();
  if (document.tokens().empty()) return out;

  const auto spans = decode_spans(tagger.tag(document), document.tokens(), threshold);
  std::map<std::pair<EntityLabel, std::string>, std::size_t> by_surface;
  std::map<EntityLabel, std::size_t> ordinals;
  for (const auto& span : spans) {
    std::string surface(document.slice(span.start, span.end));
    auto key = std::make_pair(span.label, surface);
    if (auto it = by_surface.find(key); it != by_surface.end()) {
      out.bindings[it->second].occurrences.push_back(span);
      continue;
    }
    VariableBinding b;
    b.span = span;
    b.variable_name = ascii_lower(span.label.name()) + std::to_string(++ordinals[span.label]);
    b.concerto_type = default_concerto_type(span.label);
    b.raw = false;
    by_surface.emplace(std::move(key), out.bindings.size());
    out.bindings.push_back(std::move(b));
  }
  return out;
}

}  // namespace slc
