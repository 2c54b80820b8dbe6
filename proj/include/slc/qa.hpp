#pragma once

// Question-answering value extraction: one generated question per model
// field, asked over overlapping token windows, best answer by confidence.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slc/concerto.hpp"
#include "slc/error.hpp"
#include "slc/text.hpp"

namespace slc {

inline constexpr std::size_t kDefaultWindow = 512;
inline constexpr std::size_t kDefaultStride = 384;

struct Question {
  std::string field_name;
  std::string text;
  std::string target_type;
  friend bool operator==(const Question&, const Question&) = default;
};

/// "costOfGoods" -> "cost of goods", "buyer_id" -> "buyer id",
/// "XMLFile" -> "xml file".
inline std::string humanize(std::string_view name) {
  std::string out;
  auto upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  auto lower = [](char c) { return c >= 'a' && c <= 'z'; };
  for (std::size_t k = 0; k < name.size(); ++k) {
    const char c = name[k];
    if (c == '_' || c == '-' || c == ' ') {
      if (!out.empty() && out.back() != ' ') out += ' ';
      continue;
    }
    if (k > 0 && upper(c)) {
      const char prev = name[k - 1];
      const bool next_lower = k + 1 < name.size() && lower(name[k + 1]);
      if ((lower(prev) || std::isdigit(static_cast<unsigned char>(prev))) ||
          (upper(prev) && next_lower))
        if (!out.empty() && out.back() != ' ') out += ' ';
    }
    out += upper(c) ? static_cast<char>(c - 'A' + 'a') : c;
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

/// Interrogative chosen by target type: Party -> Who, DateTime and
/// TemporalUnit -> When, MonetaryAmount -> How much, otherwise What.
inline Question generate_question(std::string_view field_name, std::string_view target_type) {
  std::string prefix = "What is the ";
  if (target_type == "Party")
    prefix = "Who is the ";
  else if (target_type == "DateTime" || target_type == "TemporalUnit")
    prefix = "When is the ";
  else if (target_type == "MonetaryAmount")
    prefix = "How much is the ";
  return {std::string(field_name), prefix + humanize(field_name) + "?", std::string(target_type)};
}

struct Chunk {
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // exclusive
  std::size_t char_start = 0;
  std::size_t char_end = 0;   // exclusive
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Windows of `window` tokens advancing by `stride`. Chunk i covers tokens
/// [i*stride, min(i*stride + window, N)); the first chunk reaching N is the
/// last. The first chunk's text starts at offset 0 and the last one's runs
/// to the end of the document, so a single chunk is the whole text.
inline std::vector<Chunk> chunk_document(const SourceDocument& doc,
                                         std::size_t window = kDefaultWindow,
                                         std::size_t stride = kDefaultStride) {
  if (window == 0 || stride == 0 || stride > window)
    throw Error(Errc::InvalidStride, "require 0 < stride <= window",
                {{"window", window}, {"stride", stride}});
  const auto& tokens = doc.tokens();
  const std::size_t n = tokens.size();
  std::vector<Chunk> chunks;
  for (std::size_t start = 0; n > 0; start += stride) {
    const std::size_t end = std::min(start + window, n);
    Chunk c{start, end, start == 0 ? 0 : tokens[start].start,
            end == n ? doc.char_length() : tokens[end - 1].end};
    chunks.push_back(c);
    if (end == n) break;
  }
  return chunks;
}

/// Offsets are character offsets into the context passed to the extractor.
struct ExtractedSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  double start_confidence = 0.0;
  double end_confidence = 0.0;
  friend bool operator==(const ExtractedSpan&, const ExtractedSpan&) = default;
};

/// Extractive QA model. Must be safe for concurrent calls.
class SpanExtractor {
 public:
  virtual ~SpanExtractor() = default;
  /// nullopt means the model abstains.
  virtual std::optional<ExtractedSpan> answer(std::string_view question,
                                              std::string_view context) const = 0;
  virtual std::string id() const = 0;
};

/// Answer confidence: mean of the start and end confidences.
inline double answer_confidence(double start_confidence, double end_confidence) noexcept {
  return (start_confidence + end_confidence) / 2.0;
}

struct Answer {
  std::size_t start = 0;  // document character offsets
  std::size_t end = 0;
  std::string text;
  double confidence = 0.0;
  std::size_t chunk_index = 0;
  friend bool operator==(const Answer&, const Answer&) = default;
};

inline std::optional<Answer> extract_field(const Question& question, const SourceDocument& doc,
                                           const SpanExtractor& extractor,
                                           std::size_t window = kDefaultWindow,
                                           std::size_t stride = kDefaultStride) {
  const auto chunks = chunk_document(doc, window, stride);
  std::optional<Answer> best;
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    const auto& chunk = chunks[ci];
    const auto context = doc.slice(chunk.char_start, chunk.char_end);
    const auto span = extractor.answer(question.text, context);
    if (!span) continue;
    const std::size_t context_len = chunk.char_end - chunk.char_start;
    if (span->start > span->end || span->end > context_len)
      throw Error(Errc::MisalignedSpan, "extractor span outside its context",
                  {{"start", span->start}, {"end", span->end}, {"context_length", context_len}});
    if (span->start == span->end) continue;
    Answer a;
    a.start = chunk.char_start + span->start;
    a.end = chunk.char_start + span->end;
    a.text = std::string(doc.slice(a.start, a.end));
    a.confidence = answer_confidence(span->start_confidence, span->end_confidence);
    a.chunk_index = ci;
    const bool better = !best || a.confidence > best->confidence ||
                        (a.confidence == best->confidence &&
                         (a.start < best->start ||
                          (a.start == best->start && a.chunk_index < best->chunk_index)));
    if (better) best = std::move(a);
  }
  return best;
}

/// Drops one leading determiner (the, a, an) and trailing sentence
/// punctuation: "the Widgets" -> "Widgets", "An apple." -> "apple".
inline std::string normalize_answer(std::string_view text) {
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!text.empty() && is_ws(text.front())) text.remove_prefix(1);
  while (!text.empty()) {
    const char c = text.back();
    if (is_ws(c) || c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?')
      text.remove_suffix(1);
    else
      break;
  }
  for (std::string_view det : {"the", "an", "a"}) {
    if (text.size() > det.size() && ascii_lower(text.substr(0, det.size())) == det &&
        is_ws(text[det.size()])) {
      auto rest = text.substr(det.size());
      while (!rest.empty() && is_ws(rest.front())) rest.remove_prefix(1);
      if (!rest.empty()) text = rest;
      break;
    }
  }
  return std::string(text);
}

/// Deterministic stand-in QA model: finds a known answer phrase in the
/// context (case-insensitive, whole words) with confidence 1.0.
///
/// The answer key maps either exact question texts or field names to
/// phrases. A field-name key applies when its humanized form occurs in the
/// question; the longest such key wins.
class BaselineExtractor final : public SpanExtractor {
 public:
  explicit BaselineExtractor(std::map<std::string, std::string> answer_key)
      : key_(std::move(answer_key)) {}

  std::optional<ExtractedSpan> answer(std::string_view question,
                                      std::string_view context) const override {
    const auto phrase = phrase_for(question);
    if (!phrase || phrase->empty()) return std::nullopt;
    const auto hay = ascii_lower(context);
    const auto needle = ascii_lower(*phrase);
    auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || (c & 0x80); };
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + 1)) {
      const std::size_t end = pos + needle.size();
      const bool left_ok = pos == 0 || !word(hay[pos - 1]) || !word(hay[pos]);
      const bool right_ok = end == hay.size() || !word(hay[end]) || !word(hay[end - 1]);
      if (!left_ok || !right_ok) continue;
      const auto starts = utf8::char_starts(context);
      auto to_char = [&](std::size_t byte) {
        return static_cast<std::size_t>(std::lower_bound(starts.begin(), starts.end(), byte) -
                                        starts.begin());
      };
      return ExtractedSpan{to_char(pos), to_char(end), 1.0, 1.0};
    }
    return std::nullopt;
  }

  std::string id() const override { return "baseline-string-match"; }

  const std::map<std::string, std::string>& answer_key() const noexcept { return key_; }

 private:
  std::optional<std::string> phrase_for(std::string_view question) const {
    if (auto it = key_.find(std::string(question)); it != key_.end()) return it->second;
    const auto q = " " + ascii_lower(question) + " ";
    std::string qwords;
    for (char c : q) qwords += std::isalnum(static_cast<unsigned char>(c)) ? c : ' ';
    const std::string* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [k, v] : key_) {
      const auto human = " " + humanize(k) + " ";
      if (human.size() > 2 && qwords.find(human) != std::string::npos && human.size() > best_len) {
        best = &v;
        best_len = human.size();
      }
    }
    if (!best) return std::nullopt;
    return *best;
  }

  std::map<std::string, std::string> key_;
};

struct FillResult {
  DataInstance instance;
  std::map<std::string, double> confidences;
  std::map<std::string, Answer> answers;   // raw, before normalization
  std::vector<std::string> unanswered;     // effective-field order
};

namespace detail {

inline std::optional<Value> value_for_field(const FieldDecl& field, const std::string& text) {
  if (field.kind == FieldKind::Relationship) return Reference{text};
  const auto& t = field.type_name;
  if (t == "String" || t == "DateTime" || t == "MonetaryAmount") return text;
  if (t == "Integer") {
    try {
      std::size_t used = 0;
      const auto v = std::stoll(text, &used);
      if (used == text.size()) return static_cast<std::int64_t>(v);
    } catch (const std::exception&) {
    }
    return text;
  }
  if (t == "Double") {
    try {
      std::size_t used = 0;
      const auto v = std::stod(text, &used);
      if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    return text;
  }
  if (t == "Boolean") {
    const auto l = ascii_lower(text);
    if (l == "true" || l == "yes") return true;
    if (l == "false" || l == "no") return false;
    return text;
  }
  return std::nullopt;  // nested class values are not extracted
}

}  // namespace detail

/// Asks one question per effective field of `class_name`. Fields without an
/// answer stay unset and are listed in `unanswered`.
inline FillResult fill_instance(const ConcertoModel& model, const std::string& class_name,
                                const SourceDocument& doc, const SpanExtractor& extractor,
                                std::size_t window = kDefaultWindow,
                                std::size_t stride = kDefaultStride) {
  FillResult result;
  result.instance.class_name = class_name;
  for (const auto& field : effective_fields(model, class_name)) {
    const auto question = generate_question(field.name, field.type_name);
    auto answer = extract_field(question, doc, extractor, window, stride);
    std::optional<Value> value;
    if (answer) value = detail::value_for_field(field, normalize_answer(answer->text));
    if (!value) {
      result.unanswered.push_back(field.name);
      continue;
    }
    result.instance.values.emplace(field.name, std::move(*value));
    result.confidences[field.name] = answer->confidence;
    result.answers.emplace(field.name, std::move(*answer));
  }
  return result;
}

}  // namespace slc
