#include <fanout/workspace.hpp>

#include <fanout/error.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fanout {

using nlohmann::json;

Schema schema_from_json(const std::string &name, const json &attributes)
{
    std::vector<Attribute> attrs;
    try {
        for (const auto &a : attributes)
            attrs.push_back({a.at("name").get<std::string>(), value_type_from_string(a.at("type").get<std::string>())});
    } catch (const json::exception &e) {
        throw Error(errc::ParseError, "malformed attributes of '" + name + "': " + e.what(), {{"relation", name}});
    }
    return Schema(name, std::move(attrs));
}

json schema_to_json(const Schema &schema)
{
    json out = json::array();
    for (const auto &a : schema.attributes()) out.push_back({{"name", a.name}, {"type", std::string(to_string(a.type))}});
    return out;
}

namespace {

json read_json_file(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (not in) throw Error(errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw Error(errc::ParseError, path.string() + ": " + e.what(), {{"path", path.string()}});
    }
}

const json & relation_list(const json &graph_doc)
{
    if (not graph_doc.is_object() or not graph_doc.contains("relations") or not graph_doc["relations"].is_array())
        throw Error(errc::ParseError, "join graph needs a 'relations' array");
    return graph_doc["relations"];
}

std::string relation_name(const json &r)
{
    if (not r.is_object() or not r.contains("name") or not r.contains("attributes"))
        throw Error(errc::ParseError, "each relation needs 'name' and 'attributes'");
    return r["name"].get<std::string>();
}

}

Workspace load_workspace(const std::filesystem::path &graph_file, const std::filesystem::path &semantic_file,
                         std::optional<std::string> null_token)
{
    auto graph_doc = read_json_file(graph_file);
    Workspace ws;
    ws.null_token = null_token ? *null_token : graph_doc.value("null_token", std::string());
    auto dir = graph_file.parent_path();
    for (const auto &r : relation_list(graph_doc)) {
        auto name = relation_name(r);
        auto file = r.value("file", name + ".csv");
        ws.db.add(load_csv((dir / file).string(), schema_from_json(name, r["attributes"]), ws.null_token));
    }
    ws.graph = validate(JoinGraph::from_json(graph_doc), ws.db);
    ws.semantic = SemanticLayer::from_json(read_json_file(semantic_file));
    return ws;
}

Workspace workspace_from_bundle(const json &bundle)
{
    if (not bundle.is_object() or not bundle.contains("graph") or not bundle.contains("semantic")
        or not bundle.contains("tables"))
        throw Error(errc::BadRequest, "bundle needs 'graph', 'semantic' and 'tables'");
    const auto &graph_doc = bundle["graph"];
    Workspace ws;
    ws.null_token = bundle.value("null_token", graph_doc.value("null_token", std::string()));
    for (const auto &r : relation_list(graph_doc)) {
        auto name = relation_name(r);
        if (not bundle["tables"].contains(name))
            throw Error(errc::BadRequest, "bundle has no table for '" + name + "'", {{"relation", name}});
        std::istringstream csv(bundle["tables"][name].get<std::string>());
        ws.db.add(read_csv(csv, schema_from_json(name, r["attributes"]), ws.null_token, name));
    }
    ws.graph = validate(JoinGraph::from_json(graph_doc), ws.db);
    ws.semantic = SemanticLayer::from_json(bundle["semantic"]);
    return ws;
}

json workspace_to_bundle(const Workspace &ws)
{
    json graph = ws.graph.to_json();
    json relations = json::array(), tables = json::object();
    for (const auto &[name, rel] : ws.db.relations()) {
        relations.push_back({{"name", name}, {"attributes", schema_to_json(rel.schema())}});
        std::ostringstream csv;
        write_csv(csv, rel, ws.null_token);
        tables[name] = csv.str();
    }
    graph["relations"] = relations;
    return {{"graph", graph}, {"semantic", ws.semantic.to_json()}, {"tables", tables}, {"null_token", ws.null_token}};
}

json render_data(const Workspace &ws, const QueryPlan *plan, const std::string *frontier)
{
    json nodes = json::array(), edges = json::array();
    for (const auto &n : ws.graph.nodes) {
        json node = {{"id", n}, {"fact", std::find(ws.graph.fact_tables.begin(), ws.graph.fact_tables.end(), n)
                                             != ws.graph.fact_tables.end()}};
        std::string role = "neutral";
        if (plan) {
            if (plan->base_relations().count(n)) role = "base";
            else if (frontier and *frontier == n) role = "frontier";
            else if (plan->find_target(n)) role = "target";
            else if (plan->relations().count(n)) role = "joined";
        }
        node["role"] = role;
        nodes.push_back(std::move(node));
    }
    for (std::size_t i = 0; i != ws.graph.edges.size(); ++i) {
        const auto &e = ws.graph.edges[i];
        json on = json::array();
        for (const auto &[l, r] : e.on) on.push_back({l, r});
        bool in_plan = false;
        if (plan)
            for (const auto &s : plan->subtree) in_plan = in_plan or s.edge == i;
        edges.push_back({{"left", e.left}, {"right", e.right}, {"on", on},
                         {"cardinality", e.cardinality ? json(std::string(to_string(*e.cardinality))) : json(nullptr)},
                         {"left_many", e.cardinality ? left_is_many(*e.cardinality) : true},
                         {"right_many", e.cardinality ? right_is_many(*e.cardinality) : true},
                         {"in_plan", in_plan}});
    }
    return {{"nodes", nodes}, {"edges", edges}};
}

}
