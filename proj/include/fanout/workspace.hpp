#pragma once

#include <fanout/join_graph.hpp>
#include <fanout/relation.hpp>
#include <fanout/semantic_model.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace fanout {

/// A loaded data set: relations, validated join graph and semantic layer.
struct Workspace
{
    Database db;
    JoinGraph graph;
    SemanticLayer semantic;
    std::string null_token;
};

/// `[{name, type}, ...]` as a schema for relation `name`.
Schema schema_from_json(const std::string &name, const nlohmann::json &attributes);
nlohmann::json schema_to_json(const Schema &schema);

/// Reads a join-graph file whose relations are `{name, file, attributes}` objects (files relative to the
/// graph file's directory) and a semantic-layer file.  The null token comes from the graph file's
/// `null_token` unless overridden.  The graph is validated against the data.
Workspace load_workspace(const std::filesystem::path &graph_file, const std::filesystem::path &semantic_file,
                         std::optional<std::string> null_token = std::nullopt);

/// Upload form: {graph, semantic, tables: {name: csv text}, null_token?}.  Graph relations carry their
/// attributes inline; `file` is ignored.
Workspace workspace_from_bundle(const nlohmann::json &bundle);
/// The inverse of `workspace_from_bundle`.
nlohmann::json workspace_to_bundle(const Workspace &ws);

/// Join-graph drawing data: nodes tagged base/frontier/target, edges labelled with cardinalities.
nlohmann::json render_data(const Workspace &ws, const QueryPlan *plan = nullptr,
                           const std::string *frontier = nullptr);

}
