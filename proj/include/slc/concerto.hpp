#pragma once

// A Concerto grammar subset:
//
//   model := declaration*
//   declaration := ("asset" | "participant" | "transaction" | "concept")
//                  Name ["extends" Name] "{" field* "}"
//   field := ("o" | "-->") Type name ["optional"]
//
// plus data instances validated against a model and their JSON form.

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "slc/error.hpp"
#include "slc/text.hpp"

namespace slc {

enum class DeclKind { Asset, Participant, Transaction, Concept };
enum class FieldKind { Property, Relationship };

inline std::string_view to_string(DeclKind k) noexcept {
  switch (k) {
    case DeclKind::Asset: return "asset";
    case DeclKind::Participant: return "participant";
    case DeclKind::Transaction: return "transaction";
    case DeclKind::Concept: return "concept";
  }
  return "concept";
}

inline std::optional<DeclKind> decl_kind_from(std::string_view s) noexcept {
  if (s == "asset") return DeclKind::Asset;
  if (s == "participant") return DeclKind::Participant;
  if (s == "transaction") return DeclKind::Transaction;
  if (s == "concept") return DeclKind::Concept;
  return std::nullopt;
}

struct FieldDecl {
  FieldKind kind = FieldKind::Property;
  std::string type_name;
  std::string name;
  bool optional = false;

  friend bool operator==(const FieldDecl&, const FieldDecl&) = default;
};

struct Declaration {
  DeclKind kind = DeclKind::Concept;
  std::string name;
  std::optional<std::string> super;
  std::vector<FieldDecl> fields;

  friend bool operator==(const Declaration&, const Declaration&) = default;
};

namespace concerto {

inline const std::vector<std::string>& primitive_types() {
  static const std::vector<std::string> types{"String",  "MonetaryAmount", "DateTime",
                                              "Integer", "Double",         "Boolean"};
  return types;
}

inline bool is_primitive(std::string_view type) {
  for (const auto& p : primitive_types())
    if (p == type) return true;
  return false;
}

/// Built-in marker classes. They carry no fields in this subset.
inline const std::vector<Declaration>& builtin_declarations() {
  static const std::vector<Declaration> decls{
      Declaration{DeclKind::Asset, "Contract", std::nullopt, {}},
      Declaration{DeclKind::Participant, "Party", std::nullopt, {}},
  };
  return decls;
}

}  // namespace concerto

class ConcertoModel {
 public:
  ConcertoModel() = default;
  explicit ConcertoModel(std::vector<Declaration> declarations)
      : declarations_(std::move(declarations)) {}

  const std::vector<Declaration>& declarations() const noexcept { return declarations_; }

  /// Declared or built-in class by name; nullptr when absent.
  const Declaration* find(std::string_view name) const noexcept {
    for (const auto& d : declarations_)
      if (d.name == name) return &d;
    for (const auto& d : concerto::builtin_declarations())
      if (d.name == name) return &d;
    return nullptr;
  }

  bool is_class(std::string_view name) const noexcept { return find(name) != nullptr; }

  /// True when `type` resolves to a primitive or class.
  bool resolves_type(std::string_view type) const noexcept {
    return concerto::is_primitive(type) || is_class(type);
  }

  /// True when `sub` equals `base` or inherits from it.
  bool is_subtype(std::string_view sub, std::string_view base) const noexcept {
    std::size_t guard = 0;
    const Declaration* d = find(sub);
    while (d != nullptr && guard++ <= declarations_.size() + 2) {
      if (d->name == base) return true;
      if (!d->super) return false;
      d = find(*d->super);
    }
    return false;
  }

  friend bool operator==(const ConcertoModel&, const ConcertoModel&) = default;

 private:
  std::vector<Declaration> declarations_;
};

namespace detail {

struct CtoToken {
  enum Kind { Ident, LBrace, RBrace, Arrow, End } kind;
  std::string text;
  std::size_t line;
  std::size_t col;
};

class CtoLexer {
 public:
  explicit CtoLexer(std::string_view src) : src_(src) {}

  CtoToken next() {
    skip_trivia();
    const std::size_t line = line_, col = col_;
    if (pos_ >= src_.size()) return {CtoToken::End, "", line, col};
    const char c = src_[pos_];
    if (c == '{') {
      advance();
      return {CtoToken::LBrace, "{", line, col};
    }
    if (c == '}') {
      advance();
      return {CtoToken::RBrace, "}", line, col};
    }
    if (src_.substr(pos_, 3) == "-->") {
      advance(3);
      return {CtoToken::Arrow, "-->", line, col};
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      std::string word;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        word += src_[pos_];
        advance();
      }
      if (!is_identifier(word)) fail("invalid identifier '" + word + "'", line, col);
      return {CtoToken::Ident, std::move(word), line, col};
    }
    fail(std::string("unexpected character '") + c + "'", line, col);
  }

  [[noreturn]] static void fail(const std::string& what, std::size_t line, std::size_t col) {
    throw Error(Errc::SyntaxError,
                "syntax error at " + std::to_string(line) + ":" + std::to_string(col) + ": " + what,
                {{"line", line}, {"col", col}});
  }

 private:
  void advance(std::size_t n = 1) {
    for (std::size_t k = 0; k < n && pos_ < src_.size(); ++k) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_trivia() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
      if (src_.substr(pos_, 2) == "//") {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (src_.substr(pos_, 2) == "/*") {
        const std::size_t line = line_, col = col_;
        advance(2);
        while (pos_ < src_.size() && src_.substr(pos_, 2) != "*/") advance();
        if (pos_ >= src_.size()) fail("unterminated comment", line, col);
        advance(2);
      } else {
        return;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

}  // namespace detail

inline ConcertoModel parse_model(std::string_view text) {
  detail::CtoLexer lexer(text);
  auto tok = lexer.next();
  auto expect_ident = [&](const char* what) {
    if (tok.kind != detail::CtoToken::Ident)
      detail::CtoLexer::fail(std::string("expected ") + what, tok.line, tok.col);
    auto word = tok.text;
    tok = lexer.next();
    return word;
  };

  std::vector<Declaration> decls;
  while (tok.kind != detail::CtoToken::End) {
    Declaration decl;
    const auto kind = tok.kind == detail::CtoToken::Ident ? decl_kind_from(tok.text) : std::nullopt;
    if (!kind)
      detail::CtoLexer::fail("expected asset, participant, transaction or concept", tok.line,
                             tok.col);
    decl.kind = *kind;
    tok = lexer.next();
    decl.name = expect_ident("declaration name");
    if (tok.kind == detail::CtoToken::Ident && tok.text == "extends") {
      tok = lexer.next();
      decl.super = expect_ident("super type name");
    }
    if (tok.kind != detail::CtoToken::LBrace)
      detail::CtoLexer::fail("expected '{'", tok.line, tok.col);
    tok = lexer.next();
    while (tok.kind != detail::CtoToken::RBrace) {
      FieldDecl field;
      if (tok.kind == detail::CtoToken::Arrow) {
        field.kind = FieldKind::Relationship;
      } else if (tok.kind == detail::CtoToken::Ident && tok.text == "o") {
        field.kind = FieldKind::Property;
      } else {
        detail::CtoLexer::fail("expected 'o', '-->' or '}'", tok.line, tok.col);
      }
      tok = lexer.next();
      field.type_name = expect_ident("field type");
      field.name = expect_ident("field name");
      if (field.name == "optional")
        detail::CtoLexer::fail("'optional' is reserved", tok.line, tok.col);
      if (tok.kind == detail::CtoToken::Ident && tok.text == "optional") {
        field.optional = true;
        tok = lexer.next();
      }
      decl.fields.push_back(std::move(field));
    }
    tok = lexer.next();
    decls.push_back(std::move(decl));
  }

  // Semantic checks, in a fixed order.
  std::set<std::string> names;
  for (const auto& d : decls) {
    bool builtin = false;
    for (const auto& b : concerto::builtin_declarations()) builtin = builtin || b.name == d.name;
    if (builtin || concerto::is_primitive(d.name) || !names.insert(d.name).second)
      throw Error(Errc::DuplicateDeclaration, "duplicate declaration: " + d.name,
                  {{"name", d.name}});
  }
  ConcertoModel model(std::move(decls));
  for (const auto& d : model.declarations())
    if (d.super && !model.is_class(*d.super))
      throw Error(Errc::UnknownSuperType, "unknown super type: " + *d.super,
                  {{"name", *d.super}, {"declaration", d.name}});
  for (const auto& d : model.declarations()) {
    std::vector<std::string> path{d.name};
    const Declaration* cur = &d;
    while (cur->super) {
      cur = model.find(*cur->super);
      path.push_back(cur->name);
      if (cur->name == d.name)
        throw Error(Errc::CyclicInheritance, "cyclic inheritance involving " + d.name,
                    {{"path", path}});
      if (path.size() > model.declarations().size() + 1) break;  // cycle not through d
    }
  }
  for (const auto& d : model.declarations()) {
    for (const auto& f : d.fields) {
      const bool ok = f.kind == FieldKind::Relationship ? model.is_class(f.type_name)
                                                        : model.resolves_type(f.type_name);
      if (!ok)
        throw Error(Errc::UnknownType, "unknown type " + f.type_name + " for field " + f.name,
                    {{"type", f.type_name}, {"field", f.name}, {"declaration", d.name}});
    }
  }
  for (const auto& d : model.declarations()) {
    std::set<std::string> seen;
    std::vector<const Declaration*> chain;
    for (const Declaration* cur = &d; cur; cur = cur->super ? model.find(*cur->super) : nullptr)
      chain.push_back(cur);
    for (const auto* c : chain)
      for (const auto& f : c->fields)
        if (!seen.insert(f.name).second)
          throw Error(Errc::DuplicateField, "duplicate field " + f.name + " in " + d.name,
                      {{"field", f.name}, {"declaration", d.name}});
  }
  return model;
}

inline std::string print_model(const ConcertoModel& model) {
  std::string out;
  bool first = true;
  for (const auto& d : model.declarations()) {
    if (!first) out += "\n";
    first = false;
    out += to_string(d.kind);
    out += " " + d.name;
    if (d.super) out += " extends " + *d.super;
    out += " {\n";
    for (const auto& f : d.fields) {
      out += f.kind == FieldKind::Relationship ? "  --> " : "  o ";
      out += f.type_name + " " + f.name;
      if (f.optional) out += " optional";
      out += "\n";
    }
    out += "}\n";
  }
  return out;
}

/// Inherited fields first (root to leaf), then the class's own.
inline std::vector<FieldDecl> effective_fields(const ConcertoModel& model,
                                               std::string_view class_name) {
  const Declaration* d = model.find(class_name);
  if (!d)
    throw Error(Errc::UnknownClass, "unknown class: " + std::string(class_name),
                {{"name", class_name}});
  std::vector<const Declaration*> chain;
  for (const Declaration* cur = d; cur; cur = cur->super ? model.find(*cur->super) : nullptr)
    chain.push_back(cur);
  std::vector<FieldDecl> out;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it)
    out.insert(out.end(), (*it)->fields.begin(), (*it)->fields.end());
  return out;
}

// ---------------------------------------------------------------------------
// Data instances

struct DataInstance;

struct Reference {
  std::string id;
  friend bool operator==(const Reference&, const Reference&) = default;
};

/// Owning, deep-comparing pointer to a nested instance.
class Nested {
 public:
  explicit Nested(DataInstance value);
  const DataInstance& get() const noexcept { return *ptr_; }
  friend bool operator==(const Nested& a, const Nested& b);

 private:
  std::shared_ptr<const DataInstance> ptr_;
};

using Value = std::variant<std::string, std::int64_t, double, bool, Reference, Nested>;

struct DataInstance {
  std::string class_name;
  std::map<std::string, Value> values;

  friend bool operator==(const DataInstance&, const DataInstance&) = default;
};

inline Nested::Nested(DataInstance value)
    : ptr_(std::make_shared<const DataInstance>(std::move(value))) {}
inline bool operator==(const Nested& a, const Nested& b) { return a.get() == b.get(); }

enum class ViolationKind { MissingField, UnknownField, TypeMismatch, UnknownClass };

inline std::string_view to_string(ViolationKind k) noexcept {
  switch (k) {
    case ViolationKind::MissingField: return "missing_field";
    case ViolationKind::UnknownField: return "unknown_field";
    case ViolationKind::TypeMismatch: return "type_mismatch";
    case ViolationKind::UnknownClass: return "unknown_class";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string path;  // dotted field path, or the class name for unknown_class
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool ok() const noexcept { return violations.empty(); }

  json to_json() const {
    json v = json::array();
    for (const auto& x : violations)
      v.push_back({{"kind", to_string(x.kind)}, {"field", x.path}, {"message", x.message}});
    return {{"violations", v}, {"warnings", warnings}};
  }
};

namespace detail {

inline bool looks_like_monetary_amount(const std::string& s) {
  static const std::regex re(R"(^-?[0-9]+(\.[0-9]+)? [A-Z]{3}$)");
  return std::regex_match(s, re);
}

inline std::string value_type_name(const Value& v) {
  switch (v.index()) {
    case 0: return "string";
    case 1: return "integer";
    case 2: return "double";
    case 3: return "boolean";
    case 4: return "reference";
    default: return "object";
  }
}

inline void validate_into(const ConcertoModel& model, const DataInstance& inst,
                          const std::string& prefix, ValidationReport& report) {
  if (!model.is_class(inst.class_name)) {
    report.violations.push_back({ViolationKind::UnknownClass, prefix.empty() ? inst.class_name : prefix,
                                 "unknown class " + inst.class_name});
    return;
  }
  const auto fields = effective_fields(model, inst.class_name);
  std::set<std::string> declared;
  for (const auto& f : fields) {
    declared.insert(f.name);
    const std::string path = prefix.empty() ? f.name : prefix + "." + f.name;
    auto it = inst.values.find(f.name);
    if (it == inst.values.end()) {
      if (!f.optional)
        report.violations.push_back({ViolationKind::MissingField, path, "missing field " + f.name});
      continue;
    }
    const Value& v = it->second;
    auto mismatch = [&](const std::string& expected) {
      report.violations.push_back({ViolationKind::TypeMismatch, path,
                                   "expected " + expected + ", got " + value_type_name(v)});
    };
    if (f.kind == FieldKind::Relationship) {
      if (!std::holds_alternative<Reference>(v) && !std::holds_alternative<std::string>(v))
        mismatch("reference to " + f.type_name);
      continue;
    }
    const auto& t = f.type_name;
    if (t == "String" || t == "DateTime") {
      if (!std::holds_alternative<std::string>(v)) mismatch(t);
    } else if (t == "MonetaryAmount") {
      if (!std::holds_alternative<std::string>(v)) {
        mismatch(t);
      } else if (!looks_like_monetary_amount(std::get<std::string>(v))) {
        report.warnings.push_back(path + ": MonetaryAmount '" + std::get<std::string>(v) +
                                  "' is not of the form '<decimal> <CUR>'");
      }
    } else if (t == "Integer") {
      if (!std::holds_alternative<std::int64_t>(v)) mismatch(t);
    } else if (t == "Double") {
      if (!std::holds_alternative<double>(v) && !std::holds_alternative<std::int64_t>(v))
        mismatch(t);
    } else if (t == "Boolean") {
      if (!std::holds_alternative<bool>(v)) mismatch(t);
    } else {
      const auto* nested = std::get_if<Nested>(&v);
      if (!nested) {
        mismatch(t);
      } else if (model.is_class(nested->get().class_name) &&
                 !model.is_subtype(nested->get().class_name, t)) {
        mismatch(t);
      } else {
        validate_into(model, nested->get(), path, report);
      }
    }
  }
  for (const auto& [key, _] : inst.values)
    if (!declared.count(key))
      report.violations.push_back({ViolationKind::UnknownField,
                                   prefix.empty() ? key : prefix + "." + key,
                                   "undeclared field " + key});
}

}  // namespace detail

inline ValidationReport validate_instance(const ConcertoModel& model, const DataInstance& instance) {
  ValidationReport report;
  detail::validate_into(model, instance, "", report);
  return report;
}

inline json instance_to_json_value(const DataInstance& instance) {
  json obj = json::object();
  obj["$class"] = instance.class_name;
  for (const auto& [key, v] : instance.values) {
    std::visit(
        [&, k = key](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Reference>)
            obj[k] = x.id;
          else if constexpr (std::is_same_v<T, Nested>)
            obj[k] = instance_to_json_value(x.get());
          else
            obj[k] = x;
        },
        v);
  }
  return obj;
}

/// Canonical JSON: sorted keys, no insignificant whitespace.
inline std::string instance_to_json(const DataInstance& instance) {
  return instance_to_json_value(instance).dump();
}

/// Lenient decoding: types follow the model where a field is declared; no
/// validation is applied.
inline DataInstance decode_instance(const ConcertoModel& model, const json& obj,
                                    const std::optional<std::string>& default_class = std::nullopt) {
  if (!obj.is_object()) throw Error(Errc::InvalidInstance, "instance must be a JSON object");
  DataInstance inst;
  if (auto it = obj.find("$class"); it != obj.end()) {
    if (!it->is_string()) throw Error(Errc::InvalidInstance, "$class must be a string");
    inst.class_name = it->get<std::string>();
  } else if (default_class) {
    inst.class_name = *default_class;
  } else {
    throw Error(Errc::InvalidInstance, "instance has no $class");
  }
  std::map<std::string, FieldDecl> fields;
  if (model.is_class(inst.class_name))
    for (auto& f : effective_fields(model, inst.class_name)) fields.emplace(f.name, f);

  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (it.key() == "$class") continue;
    const auto fit = fields.find(it.key());
    const FieldDecl* field = fit == fields.end() ? nullptr : &fit->second;
    const json& v = it.value();
    Value value;
    if (v.is_string()) {
      if (field && field->kind == FieldKind::Relationship)
        value = Reference{v.get<std::string>()};
      else
        value = v.get<std::string>();
    } else if (v.is_boolean()) {
      value = v.get<bool>();
    } else if (v.is_number_integer()) {
      value = v.get<std::int64_t>();
    } else if (v.is_number_float()) {
      value = v.get<double>();
    } else if (v.is_object()) {
      std::optional<std::string> nested_class;
      if (field) nested_class = field->type_name;
      value = Nested(decode_instance(model, v, nested_class));
    } else {
      throw Error(Errc::InvalidInstance, "unsupported JSON value for field " + it.key(),
                  {{"field", it.key()}});
    }
    inst.values.emplace(it.key(), std::move(value));
  }
  return inst;
}

/// Parses and validates an instance. Violations raise InvalidInstance with
/// the report in the error details.
inline DataInstance instance_from_json(const ConcertoModel& model, std::string_view text,
                                       const std::optional<std::string>& default_class = std::nullopt) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::JsonSyntaxError, e.what(), {{"byte", e.byte}});
  }
  auto inst = decode_instance(model, obj, default_class);
  auto report = validate_instance(model, inst);
  if (!report.ok())
    throw Error(Errc::InvalidInstance, "instance does not validate", report.to_json());
  return inst;
}

}  // namespace slc
