#pragma once

// Command-line front end. Kept in a header so the test suite can drive it
// in-process with captured streams.
//
// Exit codes: 0 ok, 1 pipeline or validation failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "slc/library.hpp"
#include "slc/pipeline.hpp"
#include "slc/service.hpp"

namespace slc::cli {

namespace fs = std::filesystem;

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

/// Flag value if given, else the environment variable, else `fallback`.
inline std::string setting(const std::string& flag, const char* env, const std::string& fallback = "") {
  if (!flag.empty()) return flag;
  if (const char* v = std::getenv(env); v && *v) return v;
  return fallback;
}

inline fs::path library_path(const std::string& library_flag, const std::string& data_flag) {
  const auto lib = setting(library_flag, "SLC_LIBRARY_DIR");
  if (!lib.empty()) return lib;
  return fs::path(setting(data_flag, "SLC_DATA_DIR", "slc-data")) / "library";
}

inline json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::JsonSyntaxError, path.string() + ": " + e.what());
  }
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

struct ConvertArgs {
  std::string input;
  std::string template_id;
  std::string answers;
  std::string gazetteer;
  std::string patterns;
  std::string library;
  std::string data_dir;
  std::string out = ".";
  std::string threshold;
  bool force = false;
  bool keep_names = false;
};

inline int run_convert(const ConvertArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.input, "input file");
  if (!a.answers.empty()) require_file(a.answers, "answer key");
  if (!a.gazetteer.empty()) require_file(a.gazetteer, "gazetteer");
  if (!a.patterns.empty()) require_file(a.patterns, "pattern table");

  double threshold = kDefaultThreshold;
  if (const auto t = setting(a.threshold, "SLC_THRESHOLD"); !t.empty()) {
    try {
      threshold = std::stod(t);
    } catch (const std::exception&) {
      throw UsageError("threshold must be a number: " + t);
    }
  }

  PipelineConfig pc;
  pc.library_dir = library_path(a.library, a.data_dir);
  Pipeline pipeline(pc);
  pipeline.load_library();
  if (!pipeline.index().get(a.template_id)) throw UsageError("unknown template: " + a.template_id);

  const Gazetteers gaz = a.gazetteer.empty() ? Gazetteers{} : codec::gazetteers_from_json(read_json_file(a.gazetteer));
  const PatternTable pat = a.patterns.empty() ? PatternTable{} : codec::patterns_from_json(read_json_file(a.patterns));
  std::map<std::string, std::string> key;
  if (!a.answers.empty()) {
    const auto j = read_json_file(a.answers);
    if (!j.is_object()) throw Error(Errc::BadRequest, "answer key must be a JSON object of strings");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it->is_string()) throw Error(Errc::BadRequest, "answer key values must be strings");
      key[it.key()] = it->get<std::string>();
    }
  }

  const auto job = pipeline.create_job(read_file(a.input));
  pipeline.select_template(job.id, a.template_id);
  pipeline.auto_mark(job.id, BaselineTagger(gaz, pat), threshold);
  pipeline.auto_extract(job.id, BaselineExtractor(key));
  if (!a.keep_names)
    if (auto renames = pipeline.suggest_renames(job.id); !renames.empty())
      pipeline.update_marks(job.id, renames);

  const auto output = pipeline.emit_output(job.id, a.force);
  const fs::path dir = a.out;
  write_file_atomic(dir / "template.cicero", output.cicero_text);
  write_file_atomic(dir / "instance.json", output.instance_json + "\n");
  write_file_atomic(dir / "provenance.json", output.provenance.dump(2) + "\n");
  for (const auto& w : output.warnings) err << "warning: " << w << "\n";
  out << "wrote " << (dir / "template.cicero").string() << ", " << (dir / "instance.json").string()
      << ", " << (dir / "provenance.json").string() << "\n";
  return kOk;
}

inline int run_index(const std::string& dir, std::ostream& out) {
  if (!fs::is_directory(dir)) throw UsageError("library directory not found: " + dir);
  TemplateIndex index;
  for (auto& rec : load_library(dir)) index.index_template(std::move(rec));
  const auto stats = index.stats();
  for (const auto& rec : index.records()) out << rec.id << "\t" << rec.name << "\n";
  out << "indexed " << stats.doc_count << " templates, " << stats.doc_frequencies.size() << " terms\n";
  return kOk;
}

inline int run_templates_list(const fs::path& dir, std::ostream& out) {
  for (const auto& rec : load_library(dir)) out << rec.id << "\t" << rec.name << "\n";
  return kOk;
}

inline int run_serve(const std::string& data_flag, const std::string& port_flag, const std::string& library_flag,
                     const std::string& tagger_flag, const std::string& qa_flag, const std::string& threshold_flag,
                     std::ostream& out) {
  ServiceConfig cfg;
  cfg.data_dir = setting(data_flag, "SLC_DATA_DIR", "slc-data");
  cfg.library_dir = library_path(library_flag, cfg.data_dir.string());
  cfg.tagger_url = setting(tagger_flag, "SLC_TAGGER_URL");
  cfg.qa_url = setting(qa_flag, "SLC_QA_URL");
  int port = 8080;
  try {
    port = std::stoi(setting(port_flag, "SLC_PORT", "8080"));
    if (const auto t = setting(threshold_flag, "SLC_THRESHOLD"); !t.empty()) cfg.default_threshold = std::stod(t);
  } catch (const std::exception&) {
    throw UsageError("port and threshold must be numbers");
  }
  Service service(cfg);
  const int bound = service.bind("0.0.0.0", port);
  out << "listening on port " << bound << " (data dir " << cfg.data_dir.string() << ")" << std::endl;
  return service.listen() ? kOk : kFailure;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Converts legal contract text into Cicero templates and Concerto instances", "slc"};
  app.require_subcommand(1);

  std::string data_dir, port, library, tagger_url, qa_url, threshold;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--data-dir", data_dir, "Job store and library root (env SLC_DATA_DIR)");
  serve->add_option("--port", port, "Listen port (env SLC_PORT)");
  serve->add_option("--library", library, "Template library (env SLC_LIBRARY_DIR)");
  serve->add_option("--tagger-url", tagger_url, "Remote tagger base URL (env SLC_TAGGER_URL)");
  serve->add_option("--qa-url", qa_url, "Remote QA base URL (env SLC_QA_URL)");
  serve->add_option("--threshold", threshold, "Default mark threshold (env SLC_THRESHOLD)");

  std::string index_dir;
  auto* index = app.add_subcommand("index", "Index a template library and print its contents");
  index->add_option("library-dir", index_dir, "Library directory")->required();

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "Convert one contract with the baseline models");
  convert->add_option("file", conv.input, "Contract text file")->required();
  convert->add_option("--template", conv.template_id, "Template id from the library")->required();
  convert->add_option("--answers", conv.answers, "Answer key JSON {field: phrase}");
  convert->add_option("--gazetteer", conv.gazetteer, "Gazetteer JSON {label: [phrase...]}");
  convert->add_option("--patterns", conv.patterns, "Pattern JSON {label: [regex...]}");
  convert->add_option("--library", conv.library, "Template library (env SLC_LIBRARY_DIR)");
  convert->add_option("--data-dir", conv.data_dir, "Data dir whose library/ is used (env SLC_DATA_DIR)");
  convert->add_option("--out", conv.out, "Output directory");
  convert->add_option("--threshold", conv.threshold, "Mark threshold (env SLC_THRESHOLD)");
  convert->add_flag("--force", conv.force, "Emit even if the instance fails validation");
  convert->add_flag("--keep-names", conv.keep_names, "Keep tagger variable names (party1, ...)");

  std::string list_library, list_data;
  auto* templates = app.add_subcommand("templates", "Template library commands");
  templates->require_subcommand(1);
  auto* list = templates->add_subcommand("list", "List library templates");
  list->add_option("--library", list_library, "Template library (env SLC_LIBRARY_DIR)");
  list->add_option("--data-dir", list_data, "Data dir whose library/ is used (env SLC_DATA_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*serve) return run_serve(data_dir, port, library, tagger_url, qa_url, threshold, out);
    if (*index) return run_index(index_dir, out);
    if (*convert) return run_convert(conv, out, err);
    if (*list) return run_templates_list(library_path(list_library, list_data), out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << code_name(e.code()) << ": " << e.what() << "\n";
    if (!e.details().is_null()) err << e.details().dump(2) << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace slc::cli
