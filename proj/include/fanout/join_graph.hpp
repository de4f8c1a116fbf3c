#pragma once

#include <fanout/relation.hpp>

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fanout {

/// Oriented left -> right: ManyToOne means many left rows per right row.
enum class Cardinality { OneToOne, OneToMany, ManyToOne, ManyToMany };

std::string_view to_string(Cardinality c);
Cardinality cardinality_from_string(std::string_view s);
bool left_is_many(Cardinality c);
bool right_is_many(Cardinality c);

struct JoinEdge
{
    std::string left;
    std::string right;
    std::vector<std::pair<std::string, std::string>> on; ///< (left attribute, right attribute)
    std::optional<Cardinality> cardinality;

    bool touches(std::string_view rel) const { return left == rel or right == rel; }
    const std::string & other(std::string_view rel) const { return left == rel ? right : left; }
    std::vector<std::string> attrs_of(std::string_view rel) const;
    bool is_many_side(std::string_view rel) const;
};

/// A declared tree of relations.  Edge cardinalities are optional on input and filled in by `validate`.
struct JoinGraph
{
    std::set<std::string> nodes;
    std::vector<JoinEdge> edges;
    std::vector<std::string> fact_tables;

    static JoinGraph from_json(const nlohmann::json &doc);
    nlohmann::json to_json() const;

    std::vector<std::size_t> incident_edges(std::string_view rel) const;
};

/// Checks that the graph is a tree over relations of `db`, that join attributes resolve with matching types,
/// and that declared cardinalities agree with the data.  Returns the graph with every cardinality resolved.
/// Throws CycleDetected, Disconnected, BadJoinAttr, UnknownRelation or CardinalityMismatch.
JoinGraph validate(JoinGraph graph, const Database &db);

/// A side is "one" iff its join-key projection has no duplicates among non-Null keys.  A declared label
/// contradicts the data when it claims "one" for a side that has duplicates.
Cardinality infer_cardinality(const JoinEdge &edge, const Database &db);

/// One oriented edge of a traversal: `child` is joined onto the already-joined `parent`.
struct TraversalStep
{
    std::size_t edge;
    std::string parent;
    std::string child;
    std::vector<std::string> parent_attrs;
    std::vector<std::string> child_attrs;
    bool child_is_many;

    /// parent_attrs qualified with the parent's name.
    std::vector<std::string> qualified_parent_attrs() const;
    std::vector<std::string> qualified_child_attrs() const;
};

using Traversal = std::vector<TraversalStep>;

/// The minimal connected subtree containing `required` (and `roots`), as a depth-first edge order.
/// The walk first covers edges among the roots starting at roots[0], then descends from each root (in
/// that visit order) into non-root relations.  Children are visited in lexicographic order.  With no
/// roots, the lexicographically smallest required relation is the root.  Throws UnknownRelation.
Traversal steiner_subtree(const JoinGraph &graph, const std::set<std::string> &required,
                          const std::vector<std::string> &roots = {});

/// Relations reached via their "many" side
struct WeighingTarget
{
    std::string relation;
    std::vector<std::string> join_key; ///< attributes of `relation` on the entering edge
    std::string parent;
    std::vector<std::string> parent_key;

    bool operator==(const WeighingTarget &) const = default;
};

/// Non-base relations entered through their "many" side need user weights; those entered through a "one"
/// side are implicitly weighted 1.  Requires resolved cardinalities.
std::vector<WeighingTarget> weighing_targets(const JoinGraph &graph, const std::set<std::string> &base,
                                             const Traversal &subtree);

}
