#pragma once

#include <fanout/join_graph.hpp>
#include <fanout/relation.hpp>
#include <fanout/semiring.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace fanout {

enum class Aggregate { Sum, Count, Avg, Max, Min };

std::string_view to_string(Aggregate agg);
Aggregate aggregate_from_string(std::string_view name);
SemiringKind semiring_for(Aggregate agg);

/// A single-attribute aggregate.  `payload` is a qualified attribute ("I.price") or "*" for COUNT(*).
struct Metric
{
    std::string name;
    Aggregate agg = Aggregate::Count;
    std::string payload = "*";

    SemiringKind kind() const { return semiring_for(agg); }
    bool is_count_star() const { return payload == "*"; }
    /// The relation holding the payload attribute; empty for COUNT(*).
    std::string payload_relation() const;
    std::string to_sql() const;

    bool operator==(const Metric &) const = default;
};

/// The metric together with the relations it is intentionally duplicated over.  The first relation is the
/// designated fact table and the root of every traversal.
struct BaseQuery
{
    Metric metric;
    std::vector<std::string> relations;

    bool operator==(const BaseQuery &) const = default;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CompareOp op);

struct Atom
{
    std::string attribute; ///< qualified
    CompareOp op;
    Value literal;

    bool operator==(const Atom &) const = default;
};

/// A conjunction of comparisons.  Null never satisfies an atom.
struct Predicate
{
    std::vector<Atom> atoms;

    bool operator==(const Predicate &) const = default;
};

/// Parses "A.source = Google", "I.price >= 25", "U.name != 'Joe'".  Literals stay Text until typed against a
/// schema by `resolve`.
Atom parse_atom(std::string_view text);
bool satisfies(const Value &cell, CompareOp op, const Value &literal);

struct ExploratoryQuery
{
    BaseQuery base;
    std::vector<std::string> group_by; ///< qualified attributes
    std::optional<Predicate> selection;
    std::vector<std::string> joins;    ///< extra relations to join even when no attribute of them is referenced

    bool operator==(const ExploratoryQuery &) const = default;
};

/// Relations referenced by the query's group-by and selection, plus its explicit joins.
std::set<std::string> referenced_relations(const ExploratoryQuery &q);

/// Metric and base-query declarations authored by the data engineer.
struct SemanticLayer
{
    std::vector<Metric> metrics;
    std::vector<BaseQuery> base_queries;

    static SemanticLayer from_json(const nlohmann::json &doc);
    nlohmann::json to_json() const;

    const Metric & metric(std::string_view name) const;         ///< throws UnknownMetric
    const BaseQuery & base_query(std::string_view metric) const; ///< throws UnknownMetric
};

struct QueryPlan
{
    ExploratoryQuery query;
    std::string root;
    Traversal base_subtree; ///< edges among the base relations only
    Traversal subtree;      ///< base edges first, then the extra joins, depth-first
    std::vector<WeighingTarget> targets;
    std::string payload_relation;

    SemiringKind kind() const { return query.base.metric.kind(); }
    std::set<std::string> base_relations() const;
    std::set<std::string> relations() const;
    const WeighingTarget * find_target(std::string_view relation) const;
};

/// Types the query against the database, checks the base query is connected and contains its payload, and
/// plans the Steiner subtree and weighing targets.  Tropical metrics never need weighing, so their plans
/// have no targets.  Throws UnknownAttribute, UnknownRelation, InvalidQuery, TypeError.
QueryPlan resolve(const ExploratoryQuery &q, const JoinGraph &graph, const Database &db);

struct AnnotatedDatabase
{
    Database db;
    SemiringKind kind;
    std::size_t null_payload_count = 0;
};

/// Annotates the payload relation with the metric's payload and every other relation with the semiring one.
/// Rows with a Null payload are annotated zero and counted.  Throws MissingAttribute, NonNumericPayload.
AnnotatedDatabase annotate_for_metric(const Database &db, const Metric &metric);

nlohmann::json to_json(const Metric &m);
nlohmann::json to_json(const ExploratoryQuery &q);
/// Reads {metric, group_by?, where?, joins?}; `where` is a list of atom strings or {attr, op, value} objects.
ExploratoryQuery query_from_json(const nlohmann::json &doc, const SemanticLayer &layer);

}
