#pragma once

#include <fanout/consistency.hpp>
#include <fanout/engine.hpp>
#include <fanout/weighing.hpp>
#include <fanout/workspace.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

namespace httplib { class Server; }

namespace fanout {

struct DecidedWeights
{
    nlohmann::json strategy;
    WeightTable table;
    bool overridden = false; ///< committed despite failing validation
};

/// One analyst's walk through the weighing targets of a query.
struct Session
{
    std::string id;
    std::string graph_id;
    std::shared_ptr<const Workspace> ws;
    QueryPlan plan;
    std::map<std::string, DecidedWeights> decided;
    std::map<std::string, nlohmann::json> responses; ///< request token -> response, for retried commits

    /// Previews and views share the lock; commits take it exclusively.
    mutable std::shared_mutex mutex;

    /// Index of the first undecided target; equals targets.size() once complete.
    std::size_t cursor() const;
    bool complete() const { return cursor() == plan.targets.size(); }
    /// Decided tables, plus equal weighing for undecided targets.
    WeightMap preview_weights() const;
    WeightMap decided_weights() const;
};

/// HTTP status for an error code: 404 NotFound, 400 malformed requests, 500 I/O, 422 otherwise.
int http_status(const std::string &code);

/// The session workflow behind the HTTP routes.  Every operation takes and returns JSON and throws
/// fanout::Error; `mount` translates errors to {code, message, details} responses.
class Service
{
  public:
    /// Sessions saved with `snapshot` go to `snapshot_dir`; empty disables persistence.
    explicit Service(std::filesystem::path snapshot_dir = {});

    /// Registers a loaded workspace under `id`, replacing any graph with that id; an empty id allocates one.
    /// Existing sessions keep the workspace they were created on.  Returns the id.
    std::string add_graph(Workspace ws, std::string id = {});

    nlohmann::json upload_graph(const nlohmann::json &bundle);          ///< POST /graphs
    nlohmann::json get_graph(const std::string &id) const;              ///< GET /graphs/{id}
    nlohmann::json list_metrics(const std::string &graph_id = {}) const; ///< GET /metrics
    nlohmann::json create_session(const nlohmann::json &request);       ///< POST /sessions
    nlohmann::json get_session(const std::string &id);                  ///< GET /sessions/{id}
    nlohmann::json preview(const std::string &id, const nlohmann::json &request) const;
    nlohmann::json commit(const std::string &id, const nlohmann::json &request);
    nlohmann::json view(const std::string &id, const std::string &target, std::size_t offset, std::size_t limit) const;
    nlohmann::json snapshot(const std::string &id);                     ///< POST /sessions/{id}/snapshot

    /// Writes / reads the JSON snapshot of a session (workspace included).
    static nlohmann::json snapshot_json(const Session &s);
    nlohmann::json export_session(const std::string &id) const;
    /// Restores a session from a snapshot document, registering its workspace if needed.
    std::string restore(const nlohmann::json &snapshot);

    /// Digest of the session's mutable state (decided weights, cursor, tokens).
    std::string state_hash(const std::string &id) const;

    /// Registers the HTTP routes on `server`.
    void mount(httplib::Server &server);

  private:
    std::shared_ptr<Session> session(const std::string &id) const;
    std::shared_ptr<const Workspace> graph(const std::string &id) const;
    nlohmann::json summary(const Session &s) const;
    std::string new_id(const char *prefix);

    std::filesystem::path snapshot_dir_;
    mutable std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<const Workspace>> graphs_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t next_graph_ = 1;
    std::uint64_t id_state_;
};

}
