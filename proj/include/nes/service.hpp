#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "nes/log.hpp"
#include "nes/retrieval.hpp"
#include "nes/serialize.hpp"

namespace nes {

inline constexpr int kDefaultPort = 7334;

/// Shared, immutable serving state.
struct ServiceState {
  std::string corpus_name;  // optional request field "corpus" must match when given
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const IndexBundle> index;
  std::shared_ptr<const EmbeddingProvider> provider;
  std::shared_ptr<const AlignModel> model;
  std::size_t search_cap = 10000;
  std::chrono::seconds session_ttl{600};
};

struct Session {
  std::string id;
  std::string query;
  SessionConfig config;
  std::mutex mu;
  Aggregator aggregator;
  std::optional<SearchSummary> summary;
  bool finished = false;
  std::chrono::steady_clock::time_point touched = std::chrono::steady_clock::now();
};

class SessionStore {
 public:
  explicit SessionStore(std::chrono::seconds ttl) : ttl_(ttl) {}

  std::shared_ptr<Session> create(std::string query, const SessionConfig& cfg) {
    std::lock_guard lock(mu_);
    evict_locked();
    auto s = std::make_shared<Session>();
    s->id = "s" + std::to_string(++counter_);
    s->query = std::move(query);
    s->config = cfg;
    sessions_[s->id] = s;
    return s;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mu_);
    evict_locked();
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return nullptr;
    it->second->touched = std::chrono::steady_clock::now();
    return it->second;
  }

  std::size_t size() {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

 private:
  void evict_locked() {
    const auto now = std::chrono::steady_clock::now();
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      std::unique_lock slock(it->second->mu, std::try_to_lock);
      const bool stale = slock.owns_lock() && it->second->finished && now - it->second->touched > ttl_;
      if (slock.owns_lock()) slock.unlock();
      it = stale ? sessions_.erase(it) : std::next(it);
    }
  }

  std::chrono::seconds ttl_;
  std::mutex mu_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

inline int http_status(Errc c) {
  switch (c) {
    case Errc::UnknownCorpus:
    case Errc::UnknownId: return 404;
    case Errc::ModelMissing: return 409;
    case Errc::IoError: return 500;
    default: return 400;
  }
}

class Service {
 public:
  explicit Service(ServiceState state) : state_(std::move(state)), sessions_(state_.session_ttl) { routes(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  httplib::Server& http() { return server_; }
  SessionStore& sessions() { return sessions_; }

  bool listen(const std::string& host, int port) {
    log::info("listening on " + host + ":" + std::to_string(port));
    return server_.listen(host, port);
  }
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const json::Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, Errc code, const std::string& msg) {
    const std::string name(errc_name(code));
    log::debug("request failed: " + name + ": " + msg);
    send_json(res, http_status(code), {{"error", name}, {"message", msg}});
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) fail(Errc::InvalidArgument, "request body must be a JSON object");
    return body;
  }

  static std::string query_of(const nlohmann::json& body) {
    if (!body.contains("query") || !body["query"].is_string()) fail(Errc::EmptyQuery, "missing query");
    return body["query"].get<std::string>();
  }

  void require_corpus(const nlohmann::json& body) const {
    if (!state_.corpus) fail(Errc::UnknownCorpus, "no corpus loaded");
    if (body.contains("corpus") && body["corpus"].is_string() && body["corpus"].get<std::string>() != state_.corpus_name)
      fail(Errc::UnknownCorpus, "unknown corpus '" + body["corpus"].get<std::string>() + "'");
  }

  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      send_error(res, e.code(), e.message());
    } catch (const std::exception& e) {
      send_error(res, Errc::InvalidArgument, e.what());
    }
  }

  void routes() {
    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      json::Json j;
      j["status"] = "ok";
      j["corpus"] = state_.corpus_name;
      j["sentences"] = state_.corpus ? state_.corpus->size() : 0;
      j["index"] = static_cast<bool>(state_.index);
      j["model"] = state_.model && !state_.model->empty();
      j["sessions"] = sessions_.size();
      send_json(res, 200, j);
    });

    server_.Get(R"(/api/sentence/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!state_.corpus) fail(Errc::UnknownCorpus, "no corpus loaded");
        const std::string raw = req.matches[1];
        SentenceId id = 0;
        try {
          std::size_t used = 0;
          id = std::stoull(raw, &used);
          if (used != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
          fail(Errc::UnknownId, "bad sentence id '" + raw + "'");
        }
        send_json(res, 200, json::to_json(state_.corpus->get(id)));
      });
    });

    server_.Post("/api/search", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        require_corpus(body);
        CaptureMode mode = CaptureMode::subtree;
        if (body.contains("capture_display_mode") && body["capture_display_mode"].is_string())
          mode = json::mode_from_name(body["capture_display_mode"].get<std::string>());
        bool truncated = false;
        const auto results = symbolic_search(query_of(body), *state_.corpus, mode, state_.search_cap, &truncated);
        json::Json j;
        j["matches"] = json::Json::array();
        for (const auto& r : results) j["matches"].push_back(json::to_json(r));
        j["aggregate"] = json::to_json(aggregate(results));
        j["truncated"] = truncated;
        send_json(res, 200, j);
      });
    });

    server_.Post("/api/neural-search", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { start_neural(req, res); });
    });

    server_.Get("/api/aggregate", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.get_param_value("session");
        auto s = sessions_.find(id);
        if (!s) {
          send_json(res, 404, {{"error", "UnknownSession"}, {"message", "no session '" + id + "'"}});
          return;
        }
        std::lock_guard lock(s->mu);
        json::Json j;
        j["session"] = s->id;
        j["finished"] = s->finished;
        j["results"] = s->aggregator.results();
        j.update(json::to_json(s->aggregator.table()));
        send_json(res, 200, j);
      });
    });
  }

  void start_neural(const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    require_corpus(body);
    if (!state_.model || state_.model->empty()) fail(Errc::ModelMissing, "no alignment model loaded");
    if (!state_.index || !state_.provider) fail(Errc::ModelMissing, "no sentence index loaded");
    const SessionConfig cfg =
        json::session_config_from_json(body.contains("session") ? body["session"] : nlohmann::json());
    const std::string query = query_of(body);
    const SearchContext ctx{state_.corpus.get(), state_.index.get(), state_.provider.get(), state_.model.get()};
    auto plan = std::make_shared<NeuralSearchPlan>(prepare_neural_search(query, ctx, cfg));
    auto session = sessions_.create(query, cfg);
    log::info("session " + session->id + ": " + std::to_string(plan->symbolic.size()) + " symbolic matches for '" +
              query + "'");
    res.set_header("X-Session-Id", session->id);
    res.set_chunked_content_provider(
        "application/x-ndjson", [plan, ctx, cfg, session](std::size_t, httplib::DataSink& sink) {
          const SearchSummary summary = run_neural_search(*plan, ctx, cfg, [&](const StreamRecord& rec) {
            const std::string line = json::to_record(rec, session->id).dump() + "\n";
            {
              std::lock_guard lock(session->mu);
              if (const auto* r = std::get_if<ExtractionResult>(&rec)) session->aggregator.add(*r);
              else session->summary = std::get<SearchSummary>(rec);
            }
            return sink.write(line.data(), line.size());
          });
          {
            std::lock_guard lock(session->mu);
            session->finished = true;
            session->summary = summary;
            session->touched = std::chrono::steady_clock::now();
          }
          if (summary.aborted) {
            log::info("session " + session->id + " aborted by client");
            return false;
          }
          sink.done();
          return true;
        });
  }

  ServiceState state_;
  SessionStore sessions_;
  httplib::Server server_;
};

}  // namespace nes
