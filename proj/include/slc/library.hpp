#pragma once

// On-disk template library: one subdirectory per template holding
// sample.txt, template.cicero, model.cto and metadata.json. The directory
// name is the template id.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slc/error.hpp"
#include "slc/retrieval.hpp"

namespace slc {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string(), {{"path", path.string()}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling file and rename, so readers never see a
/// partially written file.
inline void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string(), {{"path", tmp.string()}});
    out << contents;
    out.flush();
    if (!out) throw Error(Errc::Io, "short write to " + tmp.string(), {{"path", tmp.string()}});
  }
  fs::rename(tmp, path);
}

inline TemplateRecord load_template_dir(const fs::path& dir) {
  TemplateRecord rec;
  rec.id = dir.filename().string();
  rec.sample_text = read_file(dir / "sample.txt");
  rec.cicero_text = read_file(dir / "template.cicero");
  rec.concerto_text = read_file(dir / "model.cto");
  rec.name = rec.id;
  if (fs::exists(dir / "metadata.json")) {
    json meta;
    try {
      meta = json::parse(read_file(dir / "metadata.json"));
    } catch (const json::parse_error& e) {
      throw Error(Errc::JsonSyntaxError, dir.string() + "/metadata.json: " + e.what());
    }
    if (!meta.is_object())
      throw Error(Errc::BadRequest, dir.string() + "/metadata.json must be an object");
    for (auto it = meta.begin(); it != meta.end(); ++it) {
      if (!it->is_string()) continue;
      if (it.key() == "name")
        rec.name = it->get<std::string>();
      else
        rec.metadata[it.key()] = it->get<std::string>();
    }
  }
  return rec;
}

/// Every template under `root`, ordered by id. A missing root is an empty
/// library.
inline std::vector<TemplateRecord> load_library(const fs::path& root) {
  std::vector<TemplateRecord> out;
  if (!fs::exists(root)) return out;
  if (!fs::is_directory(root))
    throw Error(Errc::Io, root.string() + " is not a directory", {{"path", root.string()}});
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "sample.txt"))
      out.push_back(load_template_dir(entry.path()));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

inline void save_template(const fs::path& root, const TemplateRecord& rec) {
  const auto dir = root / rec.id;
  fs::create_directories(dir);
  write_file_atomic(dir / "sample.txt", rec.sample_text);
  write_file_atomic(dir / "template.cicero", rec.cicero_text);
  write_file_atomic(dir / "model.cto", rec.concerto_text);
  json meta = json::object();
  meta["name"] = rec.name;
  for (const auto& [k, v] : rec.metadata) meta[k] = v;
  write_file_atomic(dir / "metadata.json", meta.dump(2) + "\n");
}

}  // namespace slc
