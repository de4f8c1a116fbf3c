#include <fanout/service.hpp>

#include <fanout/error.hpp>

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace fanout {

using nlohmann::json;

/*======================================================================================================================
 * Session
 *====================================================================================================================*/

std::size_t Session::cursor() const
{
    for (std::size_t i = 0; i != plan.targets.size(); ++i)
        if (not decided.count(plan.targets[i].relation)) return i;
    return plan.targets.size();
}

WeightMap Session::decided_weights() const
{
    WeightMap out;
    for (const auto &[rel, d] : decided) out.emplace(rel, d.table);
    return out;
}

WeightMap Session::preview_weights() const { return with_default_weights(plan, ws->db, decided_weights()); }

int http_status(const std::string &code)
{
    if (code == errc::NotFound) return 404;
    if (code == errc::BadRequest or code == errc::ParseError or code == errc::TypeError or code == errc::RangeError)
        return 400;
    if (code == errc::IoError) return 500;
    return 422;
}

namespace {

json finalized(const Annotation &a)
{
    auto v = sr_finalize(a);
    return v ? json(*v) : json(nullptr);
}

json target_json(const WeighingTarget &t)
{
    return {{"relation", t.relation}, {"join_key", t.join_key}, {"parent", t.parent}, {"parent_key", t.parent_key}};
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

bool safe_id(const std::string &id)
{
    return not id.empty() and id.size() <= 64 and std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) or c == '-' or c == '_';
    });
}

const WeighingTarget & require_target(const QueryPlan &plan, const std::string &relation)
{
    if (auto *t = plan.find_target(relation)) return *t;
    std::vector<std::string> names;
    for (const auto &t : plan.targets) names.push_back(t.relation);
    throw Error(errc::NotAWeighingTarget, "'" + relation + "' is not a weighing target of this session",
                {{"relation", relation}, {"targets", names}});
}

const json & require_field(const json &request, const char *field)
{
    if (not request.is_object() or not request.contains(field))
        throw Error(errc::BadRequest, std::string("request needs '") + field + "'", {{"field", field}});
    return request[field];
}

}

/*======================================================================================================================
 * Service
 *====================================================================================================================*/

Service::Service(std::filesystem::path snapshot_dir)
    : snapshot_dir_(std::move(snapshot_dir)),
      id_state_(std::random_device{}() ^ static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()))
{ }

std::string Service::new_id(const char *prefix)
{
    // splitmix64 over a random seed; opaque, not guessable from the previous id alone
    std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    std::ostringstream os;
    os << prefix << std::hex << std::setw(16) << std::setfill('0') << z;
    return os.str();
}

std::string Service::add_graph(Workspace ws, std::string id)
{
    std::lock_guard lock(registry_mutex_);
    if (id.empty())
        do id = "g" + std::to_string(next_graph_++);
        while (graphs_.count(id));
    if (not safe_id(id)) throw Error(errc::BadRequest, "invalid graph id '" + id + "'");
    graphs_[id] = std::make_shared<const Workspace>(std::move(ws));
    return id;
}

std::shared_ptr<const Workspace> Service::graph(const std::string &id) const
{
    std::lock_guard lock(registry_mutex_);
    auto it = graphs_.find(id);
    if (it == graphs_.end()) throw Error(errc::NotFound, "no graph '" + id + "'", {{"graph_id", id}});
    return it->second;
}

std::shared_ptr<Session> Service::session(const std::string &id) const
{
    std::lock_guard lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(errc::NotFound, "no session '" + id + "'", {{"session_id", id}});
    return it->second;
}

json Service::upload_graph(const json &bundle)
{
    return get_graph(add_graph(workspace_from_bundle(bundle), bundle.value("id", std::string())));
}

json Service::get_graph(const std::string &id) const
{
    auto ws = graph(id);
    json relations = json::array();
    for (const auto &[name, rel] : ws->db.relations())
        relations.push_back({{"name", name}, {"attributes", schema_to_json(rel.schema())}, {"rows", rel.size()}});
    return {{"graph_id", id}, {"graph", ws->graph.to_json()}, {"relations", relations},
            {"render", render_data(*ws)}, {"semantic", ws->semantic.to_json()}};
}

json Service::list_metrics(const std::string &graph_id) const
{
    std::vector<std::pair<std::string, std::shared_ptr<const Workspace>>> selected;
    if (graph_id.empty()) {
        std::lock_guard lock(registry_mutex_);
        selected.assign(graphs_.begin(), graphs_.end());
    } else {
        selected.emplace_back(graph_id, graph(graph_id));
    }
    json metrics = json::array();
    for (const auto &[id, ws] : selected)
        for (const auto &b : ws->semantic.base_queries) {
            json m = to_json(b.metric);
            m["graph_id"] = id;
            m["base_relations"] = b.relations;
            m["sql"] = b.metric.to_sql();
            metrics.push_back(std::move(m));
        }
    return {{"metrics", metrics}};
}

json Service::summary(const Session &s) const
{
    auto cursor = s.cursor();
    json targets = json::array();
    for (std::size_t i = 0; i != s.plan.targets.size(); ++i) {
        const auto &t = s.plan.targets[i];
        json tj = target_json(t);
        tj["index"] = i;
        auto it = s.decided.find(t.relation);
        tj["decided"] = it != s.decided.end();
        tj["strategy"] = it != s.decided.end() ? it->second.strategy : json(nullptr);
        tj["overridden"] = it != s.decided.end() and it->second.overridden;
        targets.push_back(std::move(tj));
    }
    json steps = json::array();
    for (const auto &step : s.plan.subtree)
        steps.push_back({{"parent", step.parent}, {"child", step.child}, {"parent_key", step.parent_attrs},
                         {"child_key", step.child_attrs}, {"child_is_many", step.child_is_many}});

    bool complete = cursor == s.plan.targets.size();
    const std::string *frontier = complete ? nullptr : &s.plan.targets[cursor].relation;
    auto base = evaluate_base(s.plan, s.ws->db);

    json out = {{"id", s.id},
                {"graph_id", s.graph_id},
                {"query", to_json(s.plan.query)},
                {"metric", to_json(s.plan.query.base.metric)},
                {"targets", targets},
                {"subtree", steps},
                {"cursor", cursor},
                {"frontier", frontier ? json(*frontier) : json(nullptr)},
                {"complete", complete},
                {"base_total", finalized(base.total())},
                {"base_result", base.to_json()},
                {"join_graph", render_data(*s.ws, &s.plan, frontier)}};
    out["final_report"] = complete ? check(s.plan, s.ws->db, s.decided_weights()).to_json() : json(nullptr);
    return out;
}

json Service::create_session(const json &request)
{
    auto graph_id = require_field(request, "graph_id").get<std::string>();
    auto ws = graph(graph_id);
    const json &query_doc = request.contains("query") ? request["query"] : request;
    auto q = query_from_json(query_doc, ws->semantic);

    auto s = std::make_shared<Session>();
    s->graph_id = graph_id;
    s->ws = ws;
    s->plan = resolve(q, ws->graph, ws->db);
    {
        std::lock_guard lock(registry_mutex_);
        do s->id = new_id("s");
        while (sessions_.count(s->id));
        sessions_[s->id] = s;
    }
    std::shared_lock lock(s->mutex);
    return summary(*s);
}

json Service::get_session(const std::string &id)
{
    std::shared_ptr<Session> s;
    try {
        s = session(id);
    } catch (const Error &e) {
        auto path = snapshot_dir_ / (id + ".json");
        if (snapshot_dir_.empty() or not safe_id(id) or not std::filesystem::exists(path)) throw;
        std::ifstream in(path);
        restore(json::parse(in));
        s = session(id);
    }
    std::shared_lock lock(s->mutex);
    return summary(*s);
}

json Service::preview(const std::string &id, const json &request) const
{
    auto s = session(id);
    std::shared_lock lock(s->mutex);
    const auto &target = require_target(s->plan, require_field(request, "target").get<std::string>());
    const json &strategy_doc = require_field(request, "strategy");
    auto strategy = strategy_from_json(strategy_doc);
    std::size_t sample_n = request.value("sample_n", std::size_t{100});

    const auto &rel = s->ws->db.at(target.relation);
    auto table = build_weight_table(strategy, rel, target.join_key);
    auto validation = validate(table, rel);

    auto weights = s->preview_weights();
    weights.insert_or_assign(target.relation, table);
    auto report = check(s->plan, s->ws->db, weights);

    return {{"target", target_json(target)},
            {"strategy", to_json(strategy)},
            {"validation", validation.to_json()},
            {"flagged", not validation.ok},
            {"weights", table.to_json()},
            {"partial_view", partial_view(s->plan, s->ws->db, weights, target.relation, 0, sample_n).to_json()},
            {"q_result", report.query_result.to_json()},
            {"q_base_result", report.base_result.to_json()},
            {"consistency", report.to_json()}};
}

json Service::commit(const std::string &id, const json &request)
{
    auto s = session(id);
    std::unique_lock lock(s->mutex);
    auto token = request.value("request_token", std::string());
    if (not token.empty())
        if (auto it = s->responses.find(token); it != s->responses.end()) return it->second;

    const auto &target = require_target(s->plan, require_field(request, "target").get<std::string>());
    auto strategy = strategy_from_json(require_field(request, "strategy"));
    bool override_flag = request.value("override", false);

    const auto &rel = s->ws->db.at(target.relation);
    auto table = build_weight_table(strategy, rel, target.join_key);
    auto validation = validate(table, rel);
    if (not validation.ok and not override_flag)
        throw Error(errc::ValidationFailed, "weights for " + target.relation + " fail validation: " + validation.summary(),
                    validation.to_json());

    s->decided.insert_or_assign(target.relation, DecidedWeights{to_json(strategy), std::move(table), not validation.ok});
    auto out = summary(*s);
    if (not token.empty()) s->responses[token] = out;
    return out;
}

json Service::view(const std::string &id, const std::string &target, std::size_t offset, std::size_t limit) const
{
    auto s = session(id);
    std::shared_lock lock(s->mutex);
    return partial_view(s->plan, s->ws->db, s->preview_weights(), target, offset, limit).to_json();
}

json Service::snapshot_json(const Session &s)
{
    json decided = json::object();
    for (const auto &[rel, d] : s.decided) {
        json w = json::object();
        for (const auto &[row, weight] : d.table.entries) w[std::to_string(row)] = weight.to_string();
        decided[rel] = {{"strategy", d.strategy}, {"overridden", d.overridden}, {"weights", w}};
    }
    return {{"version", 1},
            {"id", s.id},
            {"graph_id", s.graph_id},
            {"workspace", workspace_to_bundle(*s.ws)},
            {"query", to_json(s.plan.query)},
            {"decided", decided},
            {"responses", s.responses}};
}

json Service::export_session(const std::string &id) const
{
    auto s = session(id);
    std::shared_lock lock(s->mutex);
    return snapshot_json(*s);
}

json Service::snapshot(const std::string &id)
{
    if (snapshot_dir_.empty()) throw Error(errc::BadRequest, "snapshots are disabled (no snapshot directory)");
    auto doc = export_session(id);
    std::filesystem::create_directories(snapshot_dir_);
    auto path = snapshot_dir_ / (id + ".json");
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (not out) throw Error(errc::IoError, "cannot write " + tmp.string(), {{"path", tmp.string()}});
        out << doc.dump(1) << '\n';
    }
    std::filesystem::rename(tmp, path);
    return {{"id", id}, {"path", path.string()}};
}

std::string Service::restore(const json &doc)
{
    try {
        auto id = doc.at("id").get<std::string>();
        auto graph_id = doc.at("graph_id").get<std::string>();
        if (not safe_id(id)) throw Error(errc::BadRequest, "invalid session id '" + id + "'");
        std::shared_ptr<const Workspace> ws;
        {
            std::lock_guard lock(registry_mutex_);
            if (auto it = graphs_.find(graph_id); it != graphs_.end()) ws = it->second;
        }
        if (not ws) {
            add_graph(workspace_from_bundle(doc.at("workspace")), graph_id);
            ws = graph(graph_id);
        }

        auto s = std::make_shared<Session>();
        s->id = id;
        s->graph_id = graph_id;
        s->ws = ws;
        s->plan = resolve(query_from_json(doc.at("query"), ws->semantic), ws->graph, ws->db);
        for (const auto &[rel, d] : doc.at("decided").items()) {
            const auto &target = require_target(s->plan, rel);
            auto entries = weights_from_json(d.at("weights"));
            s->decided.emplace(rel, DecidedWeights{d.at("strategy"), WeightTable{rel, target.join_key, std::move(entries)},
                                                   d.value("overridden", false)});
        }
        const json responses = doc.value("responses", json::object());
        for (const auto &[token, response] : responses.items()) s->responses[token] = response;

        std::lock_guard lock(registry_mutex_);
        sessions_[id] = s;
        return id;
    } catch (const json::exception &e) {
        throw Error(errc::ParseError, std::string("malformed snapshot: ") + e.what());
    }
}

std::string Service::state_hash(const std::string &id) const
{
    auto s = session(id);
    std::shared_lock lock(s->mutex);
    auto doc = snapshot_json(*s);
    doc.erase("workspace");
    doc["cursor"] = s->cursor();
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(doc.dump());
    return os.str();
}

/*======================================================================================================================
 * HTTP
 *====================================================================================================================*/

namespace {

template<typename F>
void respond(httplib::Response &res, F &&f, int ok_status = 200)
{
    try {
        json body = f();
        res.status = ok_status;
        res.set_content(body.dump(), "application/json");
    } catch (const Error &e) {
        res.status = http_status(e.code());
        res.set_content(e.to_json().dump(), "application/json");
    } catch (const json::exception &e) {
        res.status = 400;
        res.set_content(json{{"code", errc::BadRequest}, {"message", e.what()}, {"details", nullptr}}.dump(),
                        "application/json");
    } catch (const std::exception &e) {
        res.status = 500;
        res.set_content(json{{"code", "InternalError"}, {"message", e.what()}, {"details", nullptr}}.dump(),
                        "application/json");
    }
}

json body_json(const httplib::Request &req)
{
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error &e) {
        throw Error(errc::BadRequest, std::string("request body is not JSON: ") + e.what());
    }
}

std::size_t size_param(const httplib::Request &req, const char *name, std::size_t fallback)
{
    if (not req.has_param(name)) return fallback;
    auto text = req.get_param_value(name);
    std::size_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() or end != text.data() + text.size())
        throw Error(errc::RangeError, std::string("'") + name + "' must be a non-negative integer", {{name, text}});
    return value;
}

}

void Service::mount(httplib::Server &server)
{
    server.Post("/graphs", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return upload_graph(body_json(req)); }, 201);
    });
    server.Get("/graphs/:id", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return get_graph(req.path_params.at("id")); });
    });
    server.Get("/metrics", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return list_metrics(req.has_param("graph_id") ? req.get_param_value("graph_id") : ""); });
    });
    server.Post("/sessions", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return create_session(body_json(req)); }, 201);
    });
    server.Get("/sessions/:id", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return get_session(req.path_params.at("id")); });
    });
    server.Post("/sessions/:id/preview", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return preview(req.path_params.at("id"), body_json(req)); });
    });
    server.Post("/sessions/:id/commit", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return commit(req.path_params.at("id"), body_json(req)); });
    });
    server.Get("/sessions/:id/view", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] {
            if (not req.has_param("target")) throw Error(errc::BadRequest, "view needs a 'target' parameter");
            return view(req.path_params.at("id"), req.get_param_value("target"), size_param(req, "offset", 0),
                        size_param(req, "limit", 100));
        });
    });
    server.Post("/sessions/:id/snapshot", [this](const httplib::Request &req, httplib::Response &res) {
        respond(res, [&] { return snapshot(req.path_params.at("id")); });
    });
}

}
