#pragma once

// Cicero natural-language templates: literal text interleaved with
// {{variable}} and {{{variable}}} marks.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "slc/core.hpp"
#include "slc/error.hpp"
#include "slc/text.hpp"

namespace slc {

namespace cicero {

struct Literal {
  std::string text;
  friend bool operator==(const Literal&, const Literal&) = default;
};

struct Variable {
  std::string name;
  bool raw = false;  // triple-brace form
  friend bool operator==(const Variable&, const Variable&) = default;
};

using Segment = std::variant<Literal, Variable>;

}  // namespace cicero

/// Normalized template: no empty or adjacent literals, unique identifier
/// variable names, and no brace characters inside literals.
class CiceroTemplate {
 public:
  CiceroTemplate() = default;

  explicit CiceroTemplate(std::vector<cicero::Segment> segments) {
    std::set<std::string> seen;
    std::size_t position = 0;  // character offset in the serialized form
    for (auto& seg : segments) {
      if (auto* lit = std::get_if<cicero::Literal>(&seg)) {
        if (lit->text.empty()) continue;
        const auto starts = utf8::char_starts(lit->text);
        for (std::size_t ci = 0; ci + 1 < starts.size(); ++ci) {
          const char c = lit->text[starts[ci]];
          if (c == '{' || c == '}')
            throw Error(Errc::UnbalancedBraces, "brace inside literal text",
                        {{"position", position + ci}});
        }
        position += starts.size() - 1;
        if (!segments_.empty() && std::holds_alternative<cicero::Literal>(segments_.back()))
          std::get<cicero::Literal>(segments_.back()).text += lit->text;
        else
          segments_.push_back(std::move(*lit));
      } else {
        auto& var = std::get<cicero::Variable>(seg);
        if (var.name.empty())
          throw Error(Errc::EmptyVariableName, "empty variable name", {{"position", position}});
        if (!is_identifier(var.name))
          throw Error(Errc::InvalidVariableName, "invalid variable name: " + var.name,
                      {{"position", position}, {"name", var.name}});
        if (!seen.insert(var.name).second)
          throw Error(Errc::DuplicateVariable, "duplicate variable: " + var.name,
                      {{"name", var.name}});
        position += var.name.size() + (var.raw ? 6 : 4);
        segments_.push_back(std::move(var));
      }
    }
  }

  const std::vector<cicero::Segment>& segments() const noexcept { return segments_; }

  /// Variables in segment order.
  std::vector<cicero::Variable> variables() const {
    std::vector<cicero::Variable> out;
    for (const auto& s : segments_)
      if (auto* v = std::get_if<cicero::Variable>(&s)) out.push_back(*v);
    return out;
  }

  /// Template source text ("Cicero file" contents).
  std::string serialize() const {
    std::string out;
    for (const auto& s : segments_) {
      if (auto* lit = std::get_if<cicero::Literal>(&s)) {
        out += lit->text;
      } else {
        const auto& v = std::get<cicero::Variable>(s);
        out += v.raw ? "{{{" : "{{";
        out += v.name;
        out += v.raw ? "}}}" : "}}";
      }
    }
    return out;
  }

  friend bool operator==(const CiceroTemplate&, const CiceroTemplate&) = default;

 private:
  std::vector<cicero::Segment> segments_;
};

namespace detail {
inline std::size_t char_offset_of(const std::vector<std::size_t>& starts, std::size_t byte) {
  return static_cast<std::size_t>(std::lower_bound(starts.begin(), starts.end(), byte) -
                                  starts.begin());
}
}  // namespace detail

inline CiceroTemplate parse_template(std::string_view text) {
  const auto starts = utf8::char_starts(text);
  auto pos = [&](std::size_t byte) { return detail::char_offset_of(starts, byte); };

  std::vector<cicero::Segment> segments;
  std::set<std::string> seen;
  std::string literal;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c == '}')
      throw Error(Errc::UnbalancedBraces, "unexpected closing brace", {{"position", pos(i)}});
    if (c != '{') {
      literal += c;
      ++i;
      continue;
    }
    std::size_t open = 0;
    while (i + open < n && text[i + open] == '{') ++open;
    if (open == 1)
      throw Error(Errc::UnbalancedBraces, "single opening brace", {{"position", pos(i)}});
    if (open > 3)
      throw Error(Errc::NestedBraces, "nested braces", {{"position", pos(i + 3)}});

    const std::size_t name_start = i + open;
    std::size_t j = name_start;
    while (j < n && text[j] != '{' && text[j] != '}') ++j;
    if (j == n)
      throw Error(Errc::UnbalancedBraces, "unclosed variable mark", {{"position", pos(i)}});
    if (text[j] == '{')
      throw Error(Errc::NestedBraces, "nested braces", {{"position", pos(j)}});
    std::size_t close = 0;
    while (j + close < n && text[j + close] == '}') ++close;

    const std::string name(text.substr(name_start, j - name_start));
    if (name.empty())
      throw Error(Errc::EmptyVariableName, "empty variable name", {{"position", pos(i)}});
    if (close != open)
      throw Error(Errc::UnbalancedBraces, "mismatched closing braces", {{"position", pos(j)}});
    if (!is_identifier(name))
      throw Error(Errc::InvalidVariableName, "invalid variable name: " + name,
                  {{"position", pos(name_start)}, {"name", name}});
    if (!seen.insert(name).second)
      throw Error(Errc::DuplicateVariable, "duplicate variable: " + name, {{"name", name}});

    if (!literal.empty()) segments.emplace_back(cicero::Literal{std::move(literal)});
    literal.clear();
    segments.emplace_back(cicero::Variable{name, open == 3});
    i = j + close;
  }
  if (!literal.empty()) segments.emplace_back(cicero::Literal{std::move(literal)});
  return CiceroTemplate(std::move(segments));
}

inline std::string render(const CiceroTemplate& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& s : tmpl.segments()) {
    if (auto* lit = std::get_if<cicero::Literal>(&s)) {
      out += lit->text;
    } else {
      const auto& v = std::get<cicero::Variable>(s);
      auto it = values.find(v.name);
      if (it == values.end())
        throw Error(Errc::MissingValue, "no value for variable " + v.name, {{"name", v.name}});
      out += it->second;
    }
  }
  return out;
}

inline std::vector<cicero::Variable> list_variables(const CiceroTemplate& tmpl) {
  return tmpl.variables();
}

/// Turns the marked spans of a document into variables; everything else
/// becomes literal text.
inline CiceroTemplate apply_marks(const SourceDocument& document,
                                  std::vector<VariableBinding> marks) {
  std::stable_sort(marks.begin(), marks.end(), [](const auto& a, const auto& b) {
    return a.span.start < b.span.start || (a.span.start == b.span.start && a.span.end < b.span.end);
  });
  std::set<std::string> names;
  for (std::size_t k = 0; k < marks.size(); ++k) {
    const auto& m = marks[k];
    if (!document.is_token_aligned(m.span.start, m.span.end))
      throw Error(Errc::MisalignedMark, "mark is not token-aligned: " + m.variable_name,
                  {{"name", m.variable_name}, {"start", m.span.start}, {"end", m.span.end}});
    if (!names.insert(m.variable_name).second)
      throw Error(Errc::DuplicateVariable, "duplicate variable: " + m.variable_name,
                  {{"name", m.variable_name}});
    if (k > 0 && marks[k - 1].span.end > m.span.start)
      throw Error(Errc::OverlappingMarks,
                  "marks overlap: " + marks[k - 1].variable_name + ", " + m.variable_name,
                  {{"a", marks[k - 1].variable_name}, {"b", m.variable_name}});
  }

  std::vector<cicero::Segment> segments;
  std::size_t cursor = 0;
  for (const auto& m : marks) {
    segments.emplace_back(cicero::Literal{std::string(document.slice(cursor, m.span.start))});
    segments.emplace_back(cicero::Variable{m.variable_name, m.raw});
    cursor = m.span.end;
  }
  segments.emplace_back(
      cicero::Literal{std::string(document.slice(cursor, document.char_length()))});
  return CiceroTemplate(std::move(segments));
}

}  // namespace slc
