#include <fanout/consistency.hpp>
#include <fanout/engine.hpp>
#include <fanout/error.hpp>
#include <fanout/service.hpp>
#include <fanout/weighing.hpp>
#include <fanout/workspace.hpp>

#include <CLI11.hpp>
#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fanout;

namespace {

constexpr int exit_consistent = 0;
constexpr int exit_error = 1;
constexpr int exit_inconsistent = 2;

struct Config
{
    std::string data_dir = ".";
    std::string graph_file;
    std::string semantic_file;
    std::optional<std::string> null_token;
    std::string output = "text";
    std::size_t sample_n = 100;
    double tolerance = 1e-9;
};

struct QuerySpec
{
    std::string metric;
    std::vector<std::string> group_by;
    std::vector<std::string> where;
    std::vector<std::string> joins;
    std::vector<std::string> weigh;
    std::vector<std::string> views;
    bool pushdown = false;
    bool allow_invalid = false;
};

Workspace load(const Config &cfg)
{
    fs::path dir(cfg.data_dir);
    fs::path graph = cfg.graph_file.empty() ? dir / "graph.json" : fs::path(cfg.graph_file);
    fs::path semantic = cfg.semantic_file.empty() ? dir / "semantic.json" : fs::path(cfg.semantic_file);
    return load_workspace(graph, semantic, cfg.null_token);
}

/// Splits comma lists so `--group-by A.source,U.name` and repeated flags both work.
std::vector<std::string> split_commas(const std::vector<std::string> &items)
{
    std::vector<std::string> out;
    for (const auto &item : items) {
        std::size_t start = 0;
        while (start <= item.size()) {
            auto comma = item.find(',', start);
            auto part = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (not part.empty()) out.push_back(part);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return out;
}

ExploratoryQuery build_query(const Workspace &ws, const QuerySpec &spec)
{
    ExploratoryQuery q;
    q.base = ws.semantic.base_query(spec.metric);
    q.group_by = split_commas(spec.group_by);
    q.joins = split_commas(spec.joins);
    if (not spec.where.empty()) {
        Predicate p;
        for (const auto &w : spec.where) p.atoms.push_back(parse_atom(w));
        q.selection = std::move(p);
    }
    return q;
}

struct Weighed
{
    std::string relation;
    WeighingStrategy strategy;
    WeightTable table;
    WeightValidation validation;
};

std::vector<Weighed> build_weights(const QueryPlan &plan, const Database &db, const std::vector<std::string> &specs,
                                   bool allow_invalid)
{
    std::vector<Weighed> out;
    for (const auto &spec : specs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos or eq == 0)
            throw Error(errc::InvalidStrategy, "--weigh expects REL=STRATEGY, got '" + spec + "'", {{"spec", spec}});
        auto rel = spec.substr(0, eq);
        const auto *target = plan.find_target(rel);
        if (not target) {
            std::vector<std::string> names;
            for (const auto &t : plan.targets) names.push_back(t.relation);
            throw Error(errc::NotAWeighingTarget, "'" + rel + "' is not a weighing target of this query",
                        {{"relation", rel}, {"targets", names}});
        }
        for (const auto &w : out)
            if (w.relation == rel) throw Error(errc::InvalidStrategy, "'" + rel + "' is weighed twice", {{"relation", rel}});
        auto strategy = parse_strategy(std::string_view(spec).substr(eq + 1));
        const auto &r = db.at(rel);
        auto table = build_weight_table(strategy, r, target->join_key);
        auto validation = validate(table, r);
        if (not validation.ok and not allow_invalid)
            throw Error(errc::ValidationFailed, "weights for " + rel + " fail validation: " + validation.summary(),
                        validation.to_json());
        out.push_back({rel, std::move(strategy), std::move(table), std::move(validation)});
    }
    return out;
}

json plan_json(const QueryPlan &plan)
{
    json steps = json::array(), targets = json::array();
    for (const auto &s : plan.subtree)
        steps.push_back({{"parent", s.parent}, {"child", s.child}, {"parent_key", s.parent_attrs}, {"child_key", s.child_attrs}});
    for (const auto &t : plan.targets) targets.push_back({{"relation", t.relation}, {"join_key", t.join_key}});
    return {{"root", plan.root}, {"subtree", steps}, {"targets", targets}, {"payload_relation", plan.payload_relation}};
}

std::string plan_text(const QueryPlan &plan)
{
    std::ostringstream os;
    os << "join path: " << plan.root;
    for (const auto &s : plan.subtree) os << " -> " << s.child;
    os << '\n';
    if (plan.targets.empty()) {
        os << "weighing targets: none\n";
    } else {
        os << "weighing targets:";
        for (const auto &t : plan.targets) {
            os << ' ' << t.relation << '(';
            for (std::size_t i = 0; i != t.join_key.size(); ++i) os << (i ? "," : "") << t.join_key[i];
            os << ')';
        }
        os << '\n';
    }
    return os.str();
}

std::string view_text(const NestedView &v)
{
    std::ostringstream os;
    os << "groups of " << v.frontier << " by (";
    for (std::size_t i = 0; i != v.join_key.size(); ++i) os << (i ? ", " : "") << v.join_key[i];
    os << "), " << v.groups.size() << " of " << v.total_groups << " shown\n";
    for (const auto &g : v.groups) {
        os << "  key (";
        for (std::size_t i = 0; i != g.key.size(); ++i) os << (i ? ", " : "") << format_value(g.key[i]);
        os << ")  " << v.parent << " partial " << (g.parent_value ? format_value(Value(*g.parent_value)) : "NULL") << '\n';
        for (const auto &m : g.members) {
            os << "    row " << m.row_id << ':';
            for (const auto &val : m.values) os << ' ' << format_value(val);
            os << "  weight " << m.weight.to_string() << '\n';
        }
    }
    return os.str();
}

int cmd_run(const Config &cfg, const QuerySpec &spec)
{
    auto ws = load(cfg);
    auto plan = resolve(build_query(ws, spec), ws.graph, ws.db);
    auto weighed = build_weights(plan, ws.db, spec.weigh, spec.allow_invalid);
    WeightMap weights;
    for (const auto &w : weighed) weights.emplace(w.relation, w.table);

    auto report = check(plan, ws.db, weights, cfg.tolerance);
    if (spec.pushdown) {
        auto pushed = pushdown_aggregate(plan, ws.db, with_unit_weights(plan, ws.db, weights));
        pushed.keys = report.query_result.keys;
        report.query_result = std::move(pushed);
    }

    std::vector<NestedView> views;
    for (const auto &rel : spec.views)
        views.push_back(partial_view(plan, ws.db, with_unit_weights(plan, ws.db, weights), rel, 0, cfg.sample_n));

    if (cfg.output == "json") {
        json w = json::object();
        for (const auto &x : weighed)
            w[x.relation] = {{"strategy", to_json(x.strategy)}, {"validation", x.validation.to_json()}};
        json out = {{"query", to_json(plan.query)}, {"plan", plan_json(plan)}, {"weights", w},
                    {"result", report.query_result.to_json()}, {"report", report.to_json()},
                    {"exit_code", report.verdict == Verdict::Consistent ? exit_consistent : exit_inconsistent}};
        if (not views.empty()) {
            out["views"] = json::array();
            for (const auto &v : views) out["views"].push_back(v.to_json());
        }
        std::cout << out.dump(2) << '\n';
    } else {
        std::cout << "metric " << plan.query.base.metric.name << " = " << plan.query.base.metric.to_sql() << '\n'
                  << plan_text(plan);
        for (const auto &x : weighed) std::cout << "weights " << x.relation << ": " << strategy_name(x.strategy) << " ("
                                                << x.validation.summary() << ")\n";
        std::cout << '\n' << report.render_text();
        for (const auto &v : views) std::cout << '\n' << view_text(v);
    }
    return report.verdict == Verdict::Consistent ? exit_consistent : exit_inconsistent;
}

int cmd_validate_graph(const Config &cfg)
{
    auto ws = load(cfg);
    if (cfg.output == "json") {
        std::cout << json{{"ok", true}, {"graph", ws.graph.to_json()}}.dump(2) << '\n';
    } else {
        std::cout << "join graph ok: " << ws.graph.nodes.size() << " relations, " << ws.graph.edges.size()
                  << " edges\n";
        for (const auto &e : ws.graph.edges) std::cout << "  " << e.left << " - " << e.right << "  "
                                                       << to_string(*e.cardinality) << '\n';
    }
    return exit_consistent;
}

int cmd_infer_cardinality(const Config &cfg)
{
    fs::path dir(cfg.data_dir);
    fs::path graph_path = cfg.graph_file.empty() ? dir / "graph.json" : fs::path(cfg.graph_file);
    std::ifstream in(graph_path);
    if (not in) throw Error(errc::IoError, "cannot open " + graph_path.string());
    auto doc = json::parse(in);
    auto null_token = cfg.null_token ? *cfg.null_token : doc.value("null_token", std::string());
    Database db;
    for (const auto &r : doc.at("relations")) {
        auto name = r.at("name").get<std::string>();
        db.add(load_csv((graph_path.parent_path() / r.value("file", name + ".csv")).string(),
                        schema_from_json(name, r.at("attributes")), null_token));
    }
    auto graph = JoinGraph::from_json(doc);
    json edges = json::array();
    for (auto e : graph.edges) {
        auto declared = e.cardinality;
        auto observed = infer_cardinality(e, db);
        edges.push_back({{"left", e.left}, {"right", e.right}, {"observed", std::string(to_string(observed))},
                         {"declared", declared ? json(std::string(to_string(*declared))) : json(nullptr)}});
        if (cfg.output != "json") {
            std::cout << e.left << " - " << e.right << " on";
            for (const auto &[l, r] : e.on) std::cout << ' ' << e.left << '.' << l << '=' << e.right << '.' << r;
            std::cout << ": " << to_string(observed) << (declared ? " (declared " + std::string(to_string(*declared)) + ")" : "")
                      << '\n';
        }
    }
    if (cfg.output == "json") std::cout << json{{"edges", edges}}.dump(2) << '\n';
    return exit_consistent;
}

int cmd_serve(const Config &cfg, const std::string &host, int port, const std::string &snapshot_dir,
              const std::string &graph_id)
{
    Service service{fs::path(snapshot_dir)};
    auto id = service.add_graph(load(cfg), graph_id);
    httplib::Server server;
    service.mount(server);
    std::cerr << "serving graph '" << id << "' on http://" << host << ':' << port << '\n';
    if (not server.listen(host, port)) throw Error(errc::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    return exit_consistent;
}

int cmd_snapshot_save(const Config &cfg, const QuerySpec &spec, const std::string &out_path)
{
    auto dir = fs::path(out_path).parent_path();
    Service service{dir.empty() ? fs::path(".") : dir};
    auto graph_id = service.add_graph(load(cfg), "default");
    json where = json::array();
    for (const auto &w : spec.where) where.push_back(w);
    auto summary = service.create_session({{"graph_id", graph_id},
                                           {"query", {{"metric", spec.metric}, {"group_by", split_commas(spec.group_by)},
                                                      {"joins", split_commas(spec.joins)}, {"where", where}}}});
    auto id = summary.at("id").get<std::string>();
    for (const auto &w : spec.weigh) {
        auto eq = w.find('=');
        if (eq == std::string::npos) throw Error(errc::InvalidStrategy, "--weigh expects REL=STRATEGY, got '" + w + "'");
        summary = service.commit(id, {{"target", w.substr(0, eq)},
                                      {"strategy", to_json(parse_strategy(std::string_view(w).substr(eq + 1)))},
                                      {"override", spec.allow_invalid}});
    }
    if (not dir.empty()) fs::create_directories(dir);
    std::ofstream out(out_path);
    if (not out) throw Error(errc::IoError, "cannot write " + out_path);
    out << service.export_session(id).dump(1) << '\n';
    std::cout << (cfg.output == "json" ? json{{"id", id}, {"path", out_path}}.dump() : "saved session " + id + " to " + out_path)
              << '\n';
    return exit_consistent;
}

int cmd_snapshot_show(const Config &cfg, const std::string &path)
{
    std::ifstream in(path);
    if (not in) throw Error(errc::IoError, "cannot open " + path, {{"path", path}});
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        throw Error(errc::ParseError, path + ": " + e.what());
    }
    Service service;
    auto id = service.restore(doc);
    auto summary = service.get_session(id);
    if (cfg.output == "json") {
        std::cout << summary.dump(2) << '\n';
    } else {
        std::cout << "session " << id << " (" << summary["query"]["metric"].get<std::string>() << ")\n";
        for (const auto &t : summary["targets"])
            std::cout << "  " << t["relation"].get<std::string>() << ": "
                      << (t["decided"].get<bool>() ? t["strategy"]["type"].get<std::string>() : std::string("undecided"))
                      << '\n';
        if (summary["complete"].get<bool>()) {
            const auto &report = summary["final_report"];
            std::cout << '\n';
            for (const auto &row : report["query_result"]["rows"]) {
                std::string key;
                for (const auto &cell : row["key"])
                    key += (key.empty() ? "" : ", ") + (cell.is_string() ? cell.get<std::string>() : cell.dump());
                std::cout << (key.empty() ? "total" : key) << " | "
                          << (row["value"].is_null() ? "NULL" : format_value(Value(row["value"].get<double>()))) << '\n';
            }
            std::cout << "\ncomplete, verdict " << report["verdict"].get<std::string>() << '\n';
        } else
            std::cout << "next target: " << summary["frontier"].get<std::string>() << '\n';
    }
    if (not summary["complete"].get<bool>()) return exit_consistent;
    return summary["final_report"]["verdict"] == "Consistent" ? exit_consistent : exit_inconsistent;
}

void add_query_options(CLI::App *cmd, QuerySpec &spec)
{
    cmd->add_option("--metric", spec.metric, "Metric name from the semantic layer")->required();
    cmd->add_option("--group-by", spec.group_by, "Qualified group-by attributes (repeatable, comma separated)");
    cmd->add_option("--where", spec.where, "Selection atom such as \"A.source = Google\" (repeatable, conjunctive)");
    cmd->add_option("--join", spec.joins, "Extra relations to join (repeatable, comma separated)");
    cmd->add_option("--weigh", spec.weigh,
                    "REL=equal | REL=order:attr[:first|last] | REL=position:attr:fw:lw | REL=prop:attr | REL=custom:file");
    cmd->add_flag("--allow-invalid-weights", spec.allow_invalid, "Accept weight tables whose groups do not sum to 1");
}

}

int main(int argc, char **argv)
{
    CLI::App app{"Fanout-consistent metric evaluation over declared join graphs"};
    app.require_subcommand(1);
    app.fallthrough();

    Config cfg;
    app.add_option("--data-dir", cfg.data_dir, "Directory with graph.json, semantic.json and the CSVs")
        ->envname("FANOUT_GUARD_DATA");
    app.add_option("--graph", cfg.graph_file, "Join graph file (default: <data-dir>/graph.json)");
    app.add_option("--semantic", cfg.semantic_file, "Semantic layer file (default: <data-dir>/semantic.json)");
    app.add_option("--null-token", cfg.null_token, "CSV null token (default: the graph file's null_token)");
    app.add_option("--output", cfg.output, "Output format")->check(CLI::IsMember({"text", "json"}));
    app.add_option("--sample-n", cfg.sample_n, "Join-key groups shown in nested views")->check(CLI::PositiveNumber);
    app.add_option("--tolerance", cfg.tolerance, "Relative tolerance for SUM/AVG consistency")->check(CLI::NonNegativeNumber);

    QuerySpec spec;
    auto *run = app.add_subcommand("run", "Evaluate a query and check its consistency");
    add_query_options(run, spec);
    run->add_flag("--pushdown", spec.pushdown, "Compute the grouped result by partial aggregation");
    run->add_option("--view", spec.views, "Print the nested partial-aggregate view of a joined relation");

    auto *validate_graph = app.add_subcommand("validate-graph", "Check the join graph against the data");
    auto *infer = app.add_subcommand("infer-cardinality", "Report each edge's observed cardinality");

    std::string host = "127.0.0.1", snapshot_dir = "snapshots", graph_id = "default";
    int port = 8080;
    auto *serve = app.add_subcommand("serve", "Run the HTTP session service");
    serve->add_option("--host", host);
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--snapshot-dir", snapshot_dir, "Where session snapshots are written");
    serve->add_option("--graph-id", graph_id, "Id the loaded graph is served under");

    auto *snapshot = app.add_subcommand("snapshot", "Save or inspect session snapshots");
    snapshot->require_subcommand(1);
    snapshot->fallthrough();
    std::string save_path, show_path;
    auto *save = snapshot->add_subcommand("save", "Create a session from flags, commit its weights and save it");
    add_query_options(save, spec);
    save->add_option("--out", save_path, "Snapshot file")->required();
    auto *show = snapshot->add_subcommand("show", "Summarize a saved session");
    show->add_option("file", show_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : exit_error;
    }

    try {
        if (*run) return cmd_run(cfg, spec);
        if (*validate_graph) return cmd_validate_graph(cfg);
        if (*infer) return cmd_infer_cardinality(cfg);
        if (*serve) return cmd_serve(cfg, host, port, snapshot_dir, graph_id);
        if (*save) return cmd_snapshot_save(cfg, spec, save_path);
        if (*show) return cmd_snapshot_show(cfg, show_path);
    } catch (const Error &e) {
        if (cfg.output == "json") std::cout << json{{"error", e.to_json()}}.dump(2) << '\n';
        std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
        return exit_error;
    } catch (const std::exception &e) {
        if (cfg.output == "json")
            std::cout << json{{"error", {{"code", "InternalError"}, {"message", e.what()}, {"details", nullptr}}}}.dump(2)
                      << '\n';
        std::cerr << "error: " << e.what() << '\n';
        return exit_error;
    }
    return exit_error;
}
