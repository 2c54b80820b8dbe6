#pragma once

// HTTP surface of the conversion pipeline, plus clients and a reference
// server for the model-server wire protocols:
//
//   POST {tagger}/tag     {text, tokens, labels, versions} -> {matrix}
//   POST {qa}/answer      {question, context} -> {start, end, start_confidence,
//                                                 end_confidence} | {abstain: true}
//   POST {tagger}/retrain {queue: [...]}
//
// All offsets on the wire are character offsets.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include <nlohmann/json.hpp>

#include "slc/codec.hpp"
#include "slc/error.hpp"
#include "slc/job.hpp"
#include "slc/pipeline.hpp"
#include "slc/qa.hpp"
#include "slc/tagger.hpp"

namespace slc {

// ---------------------------------------------------------------------------
// Remote model clients

struct RemoteOptions {
  std::chrono::milliseconds timeout{5000};
  int retries = 1;
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_at = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  SplitUrl out;
  out.origin = path_at == std::string::npos ? url : url.substr(0, path_at);
  out.prefix = path_at == std::string::npos ? "" : url.substr(path_at);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

/// POST with one retry on transport failure or 5xx. Anything else that is
/// not a 2xx JSON answer is a protocol violation.
inline json post_json(const std::string& base_url, const std::string& path, const json& body,
                      const RemoteOptions& opts) {
  const auto url = split_url(base_url);
  std::string last_error;
  for (int attempt = 0; attempt <= opts.retries; ++attempt) {
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(opts.timeout.count() / 1000);
    const auto usecs = static_cast<time_t>((opts.timeout.count() % 1000) * 1000);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(url.prefix + path, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::ProtocolViolation,
                  "model server answered HTTP " + std::to_string(res->status) + " for " + path,
                  {{"status", res->status}, {"url", base_url + path}});
    try {
      return json::parse(res->body);
    } catch (const json::parse_error&) {
      throw Error(Errc::ProtocolViolation, "model server returned invalid JSON",
                  {{"url", base_url + path}});
    }
  }
  throw Error(Errc::RemoteUnavailable, "model server unavailable: " + last_error,
              {{"url", base_url + path}, {"attempts", opts.retries + 1}});
}

}  // namespace detail

class RemoteTagger final : public Tagger {
 public:
  RemoteTagger(std::string base_url, std::vector<EntityLabel> labels,
               std::map<EntityLabel, std::string> versions, RemoteOptions opts = {})
      : base_url_(std::move(base_url)), labels_(std::move(labels)), versions_(std::move(versions)),
        opts_(opts) {}

  TokenLabelMatrix tag(const SourceDocument& document) const override {
    const auto response =
        detail::post_json(base_url_, "/tag", codec::tag_request(document, labels_, versions_), opts_);
    return codec::matrix_from_json(response, document.tokens().size());
  }

  std::map<EntityLabel, std::string> versions() const override { return versions_; }

 private:
  std::string base_url_;
  std::vector<EntityLabel> labels_;
  std::map<EntityLabel, std::string> versions_;
  RemoteOptions opts_;
};

class RemoteExtractor final : public SpanExtractor {
 public:
  explicit RemoteExtractor(std::string base_url, RemoteOptions opts = {})
      : base_url_(std::move(base_url)), opts_(opts) {}

  std::optional<ExtractedSpan> answer(std::string_view question,
                                      std::string_view context) const override {
    const json body{{"question", question}, {"context", context}};
    return codec::extracted_span_from_json(detail::post_json(base_url_, "/answer", body, opts_));
  }

  std::string id() const override { return "remote:" + base_url_; }

 private:
  std::string base_url_;
  RemoteOptions opts_;
};

/// Sends the active-learning queue to the model server.
class RemoteRetrain final : public RetrainHook {
 public:
  explicit RemoteRetrain(std::string base_url, RemoteOptions opts = {})
      : base_url_(std::move(base_url)), opts_(opts) {}

  void retrain(const std::vector<ContributionRecord>& queue) override {
    json arr = json::array();
    for (const auto& r : queue) arr.push_back(r.to_json());
    detail::post_json(base_url_, "/retrain", {{"queue", arr}}, opts_);
  }

 private:
  std::string base_url_;
  RemoteOptions opts_;
};

// ---------------------------------------------------------------------------
// HTTP helpers

namespace http {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()),
            {{"code", code_name(e.code())}, {"message", e.what()}, {"details", e.details()}});
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::BadRequest, std::string("request body is not JSON: ") + e.what());
  }
}

/// Wraps a handler so that errors become the {code, message, details}
/// envelope.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, Error(Errc::BadRequest, e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "INTERNAL"}, {"message", e.what()}, {"details", nullptr}});
    }
  };
}

}  // namespace http

// ---------------------------------------------------------------------------
// Reference model server

/// Serves a Tagger and a SpanExtractor over the wire protocols. Used as the
/// stub model server in tests and for local runs with the baseline models.
class ModelServer {
 public:
  ModelServer(std::shared_ptr<const Tagger> tagger, std::shared_ptr<const SpanExtractor> extractor)
      : tagger_(std::move(tagger)), extractor_(std::move(extractor)) {
    server_.Post("/tag", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!tagger_) throw Error(Errc::NotFound, "no tagger served here");
      const auto body = http::parse_body(req);
      const SourceDocument doc("", codec::detail::field<std::string>(body, "text"));
      const auto offsets = codec::detail::field<json>(body, "tokens");
      if (!offsets.is_array() || offsets.size() != doc.tokens().size())
        throw Error(Errc::BadRequest, "token offsets do not match the text");
      for (std::size_t k = 0; k < offsets.size(); ++k)
        if (offsets[k] != json::array({doc.tokens()[k].start, doc.tokens()[k].end}))
          throw Error(Errc::BadRequest, "token offsets do not match the text", {{"token", k}});
      ++tag_calls_;
      http::send_json(res, 200, codec::to_json(tagger_->tag(doc)));
    }));
    server_.Post("/answer", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!extractor_) throw Error(Errc::NotFound, "no extractor served here");
      const auto body = http::parse_body(req);
      const auto span = extractor_->answer(codec::detail::field<std::string>(body, "question"),
                                           codec::detail::field<std::string>(body, "context"));
      ++answer_calls_;
      http::send_json(res, 200, codec::to_json(span));
    }));
    server_.Post("/retrain", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = http::parse_body(req);
      std::lock_guard lock(mutex_);
      retrain_batches_.push_back(codec::detail::field<json>(body, "queue"));
      http::send_json(res, 200, {{"accepted", retrain_batches_.back().size()}});
    }));
  }

  ~ModelServer() { stop(); }

  /// Binds to an ephemeral port on 127.0.0.1 and serves on a background thread.
  int start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t tag_calls() const noexcept { return tag_calls_; }
  std::size_t answer_calls() const noexcept { return answer_calls_; }
  std::vector<json> retrain_batches() const {
    std::lock_guard lock(mutex_);
    return retrain_batches_;
  }

 private:
  std::shared_ptr<const Tagger> tagger_;
  std::shared_ptr<const SpanExtractor> extractor_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> tag_calls_{0};
  std::atomic<std::size_t> answer_calls_{0};
  mutable std::mutex mutex_;
  std::vector<json> retrain_batches_;
};

// ---------------------------------------------------------------------------
// Conversion service

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::filesystem::path library_dir;  // defaults to <data_dir>/library
  std::string tagger_url;             // empty: baseline tagger only
  std::string qa_url;                 // empty: baseline extractor only
  double default_threshold = kDefaultThreshold;
  Gazetteers default_gazetteers;
  RemoteOptions remote;
  std::function<std::string()> clock = utc_timestamp;
};

inline json job_view(const ConversionJob& job) {
  auto j = jobs::to_json(job);
  json hints = json::array();
  if (!job.template_cicero.empty())
    for (const auto& v : parse_template(job.template_cicero).variables())
      hints.push_back({{"name", v.name}, {"raw", v.raw}});
  j["template_variables"] = hints;
  return j;
}

class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), pipeline_(make_pipeline_config(cfg_)) {
    pipeline_.load_library();
    routes();
  }

  ~Service() { stop(); }

  Pipeline& pipeline() noexcept { return pipeline_; }
  TaggerVersionRegistry& registry() noexcept { return registry_; }
  httplib::Server& http() noexcept { return server_; }

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }

  /// Blocks serving requests until stop().
  bool listen() { return server_.listen_after_bind(); }

  /// Serves on a background thread.
  void start_background() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  static PipelineConfig make_pipeline_config(const ServiceConfig& cfg) {
    PipelineConfig pc;
    pc.data_dir = cfg.data_dir;
    pc.library_dir = !cfg.library_dir.empty() ? cfg.library_dir
                     : cfg.data_dir.empty()   ? std::filesystem::path{}
                                              : cfg.data_dir / "library";
    pc.clock = cfg.clock;
    return pc;
  }

  std::unique_ptr<Tagger> tagger_for(const json& body) const {
    if (body.contains("gazetteers") || body.contains("patterns"))
      return std::make_unique<BaselineTagger>(
          codec::gazetteers_from_json(body.value("gazetteers", json())),
          codec::patterns_from_json(body.value("patterns", json())));
    if (!cfg_.tagger_url.empty()) {
      std::vector<EntityLabel> labels;
      if (body.contains("labels")) {
        for (const auto& l : body["labels"]) labels.emplace_back(l.get<std::string>());
      } else {
        labels = registry_.labels();
      }
      if (labels.empty())
        throw Error(Errc::UnknownLabel, "no tagger versions registered for the remote tagger");
      auto versions = registry_.resolve(labels, codec::versions_from_json(body.value("pins", json())));
      return std::make_unique<RemoteTagger>(cfg_.tagger_url, labels, std::move(versions), cfg_.remote);
    }
    return std::make_unique<BaselineTagger>(cfg_.default_gazetteers);
  }

  std::unique_ptr<SpanExtractor> extractor_for(const json& body) const {
    if (body.contains("answers"))
      return std::make_unique<BaselineExtractor>(
          body["answers"].get<std::map<std::string, std::string>>());
    if (!cfg_.qa_url.empty()) return std::make_unique<RemoteExtractor>(cfg_.qa_url, cfg_.remote);
    throw Error(Errc::BadRequest, "no QA model configured; pass an answer key");
  }

  void routes() {
    using httplib::Request;
    using httplib::Response;
    auto& s = server_;

    s.Get("/health", http::guarded([](const Request&, Response& res) {
      http::send_json(res, 200, {{"status", "ok"}});
    }));

    s.Post("/jobs", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      auto job = pipeline_.create_job(codec::detail::field<std::string>(body, "text"));
      http::send_json(res, 201, job_view(job));
    }));

    s.Get(R"(/jobs/([^/]+))", http::guarded([this](const Request& req, Response& res) {
      http::send_json(res, 200, job_view(pipeline_.get_job(req.matches[1])));
    }));

    s.Get(R"(/jobs/([^/]+)/templates)", http::guarded([this](const Request& req, Response& res) {
      std::size_t n = 5;
      if (req.has_param("n")) {
        try {
          n = std::stoul(req.get_param_value("n"));
        } catch (const std::exception&) {
          throw Error(Errc::BadRequest, "n must be a non-negative integer");
        }
      }
      json list = json::array();
      for (const auto& st : pipeline_.suggest_templates(req.matches[1], n))
        list.push_back({{"id", st.record.id},
                        {"name", st.record.name},
                        {"score", st.score},
                        {"cicero_text", st.record.cicero_text},
                        {"concerto_text", st.record.concerto_text}});
      http::send_json(res, 200, {{"templates", list}});
    }));

    s.Put(R"(/jobs/([^/]+)/template)", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      http::send_json(res, 200,
                      job_view(pipeline_.select_template(
                          req.matches[1], codec::detail::field<std::string>(body, "template_id"))));
    }));

    s.Post(R"(/jobs/([^/]+)/marks:auto)", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto tagger = tagger_for(body);
      const double threshold = codec::detail::field_or<double>(body, "threshold", cfg_.default_threshold);
      http::send_json(res, 200, job_view(pipeline_.auto_mark(req.matches[1], *tagger, threshold)));
    }));

    s.Patch(R"(/jobs/([^/]+)/marks)", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto edits = mark_edits_from_json(codec::detail::field<json>(body, "edits"));
      http::send_json(res, 200, job_view(pipeline_.update_marks(req.matches[1], edits)));
    }));

    s.Get(R"(/jobs/([^/]+)/renames)", http::guarded([this](const Request& req, Response& res) {
      json edits = json::array();
      for (const auto& e : pipeline_.suggest_renames(req.matches[1])) edits.push_back(to_json(e));
      http::send_json(res, 200, {{"edits", edits}});
    }));

    s.Post(R"(/jobs/([^/]+)/extract)", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto extractor = extractor_for(body);
      http::send_json(res, 200, job_view(pipeline_.auto_extract(req.matches[1], *extractor)));
    }));

    s.Patch(R"(/jobs/([^/]+)/values)", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto values = codec::detail::field<json>(body, "values");
      if (!values.is_object() || values.empty())
        throw Error(Errc::BadRequest, "values must be a non-empty object");
      std::optional<ConversionJob> job;
      for (auto it = values.begin(); it != values.end(); ++it)
        job = pipeline_.update_value(req.matches[1], it.key(),
                                     it->is_null() ? std::nullopt : std::optional<json>(*it));
      http::send_json(res, 200, job_view(*job));
    }));

    s.Post(R"(/jobs/([^/]+)/output)", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto out = pipeline_.emit_output(req.matches[1], codec::detail::field_or<bool>(body, "force", false));
      http::send_json(res, 200, out.to_json_value());
    }));

    s.Post("/templates", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto rec = pipeline_.contribute(codec::detail::field<std::string>(body, "job_id"),
                                            codec::detail::field<std::string>(body, "name"));
      http::send_json(res, 201, rec.to_json());
    }));

    s.Get("/templates", http::guarded([this](const Request&, Response& res) {
      json list = json::array();
      for (const auto& r : pipeline_.index().records())
        list.push_back({{"id", r.id}, {"name", r.name}, {"metadata", r.metadata}});
      http::send_json(res, 200, {{"templates", list}});
    }));

    s.Get("/taggers", http::guarded([this](const Request&, Response& res) {
      json list = json::array();
      for (const auto& v : registry_.all())
        list.push_back({{"label", v.label.name()}, {"version", v.version}, {"source", to_string(v.source)}});
      http::send_json(res, 200, {{"versions", list}});
    }));

    s.Post("/taggers", http::guarded([this](const Request& req, Response& res) {
      const auto body = http::parse_body(req);
      const auto source = codec::detail::field_or<std::string>(body, "source", "remote");
      if (source != "remote" && source != "baseline")
        throw Error(Errc::BadRequest, "source must be 'baseline' or 'remote'");
      registry_.register_version(EntityLabel{codec::detail::field<std::string>(body, "label")},
                                 codec::detail::field<std::string>(body, "version"),
                                 source == "remote" ? TaggerSource::Remote : TaggerSource::Baseline);
      http::send_json(res, 201, body);
    }));

    s.set_error_handler([](const Request& req, Response& res) {
      if (res.status == 404 && res.body.empty())
        http::send_json(res, 404, {{"code", code_name(Errc::NotFound)},
                                   {"message", "no route for " + req.method + " " + req.path},
                                   {"details", nullptr}});
    });
  }

  ServiceConfig cfg_;
  Pipeline pipeline_;
  TaggerVersionRegistry registry_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace slc
