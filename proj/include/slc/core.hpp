#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "slc/error.hpp"
#include "slc/text.hpp"

namespace slc {

/// SLC entity type produced by the tagger (String, Party, Object,
/// TemporalUnit, or a user-registered extension).
class EntityLabel {
 public:
  EntityLabel() = default;
  explicit EntityLabel(std::string name) : name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

  friend auto operator<=>(const EntityLabel&, const EntityLabel&) = default;
  friend bool operator==(const EntityLabel&, const EntityLabel&) = default;

 private:
  std::string name_;
};

namespace labels {
inline const EntityLabel String{"String"};
inline const EntityLabel Party{"Party"};
inline const EntityLabel Object{"Object"};
inline const EntityLabel TemporalUnit{"TemporalUnit"};

inline const std::vector<EntityLabel>& builtins() {
  static const std::vector<EntityLabel> all{String, Party, Object, TemporalUnit};
  return all;
}
}  // namespace labels

/// Set of known labels. The four built-ins are always present.
class LabelRegistry {
 public:
  LabelRegistry() {
    for (const auto& l : labels::builtins()) names_.insert(l.name());
  }

  LabelRegistry(const LabelRegistry& other) : names_(other.snapshot_names()) {}
  LabelRegistry& operator=(const LabelRegistry& other) {
    if (this != &other) {
      auto copy = other.snapshot_names();
      std::unique_lock lock(mutex_);
      names_ = std::move(copy);
    }
    return *this;
  }

  EntityLabel add(const std::string& name) {
    if (!is_identifier(name))
      throw Error(Errc::BadRequest, "label name must be an identifier: " + name);
    std::unique_lock lock(mutex_);
    if (!names_.insert(name).second)
      throw Error(Errc::DuplicateName, "label already registered: " + name, {{"label", name}});
    return EntityLabel{name};
  }

  bool contains(const EntityLabel& label) const {
    std::shared_lock lock(mutex_);
    return names_.count(label.name()) != 0;
  }

  std::vector<EntityLabel> all() const {
    std::vector<EntityLabel> out;
    for (const auto& n : snapshot_names()) out.emplace_back(n);
    return out;
  }

 private:
  std::set<std::string> snapshot_names() const {
    std::shared_lock lock(mutex_);
    return names_;
  }

  mutable std::shared_mutex mutex_;
  std::set<std::string> names_;
};

struct LabeledSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  EntityLabel label;
  double probability = 0.0;

  friend bool operator==(const LabeledSpan&, const LabeledSpan&) = default;
};

inline bool spans_overlap(std::size_t a_start, std::size_t a_end, std::size_t b_start,
                          std::size_t b_end) noexcept {
  return a_start < b_end && b_start < a_end;
}

/// A text span bound to a Cicero variable.
struct VariableBinding {
  LabeledSpan span;
  std::string variable_name;
  std::string concerto_type;
  bool raw = false;
  // Later occurrences of the same surface form; they stay literal text.
  std::vector<LabeledSpan> occurrences;

  friend bool operator==(const VariableBinding&, const VariableBinding&) = default;
};

/// Concerto type assigned to a freshly proposed mark of the given label.
inline std::string default_concerto_type(const EntityLabel& label) {
  if (label == labels::Party) return "Party";
  if (label == labels::TemporalUnit) return "DateTime";
  return "String";
}

}  // namespace slc
