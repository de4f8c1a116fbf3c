#pragma once

#include <fanout/relation.hpp>
#include <fanout/semantic_model.hpp>
#include <fanout/semiring.hpp>
#include <fanout/weighing.hpp>

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fanout {

/// γ_keys(R): one annotation per distinct key tuple.  Absent groups are implicitly zero.
struct GroupedResult
{
    SemiringKind kind = SemiringKind::Count;
    std::vector<std::string> keys;
    std::map<Tuple, Annotation> groups;
    /// Global aggregate of the rows that failed the selection; set only when the query has a selection.
    std::optional<Annotation> not_selected_total;

    /// ⊕ over all groups (the selected partition).
    Annotation total() const;
    /// Annotation of a group, zero when absent.
    Annotation at(const Tuple &key) const;
    /// Finalized scalar of a group (nullopt when absent or degenerate).
    std::optional<double> value(const Tuple &key) const;

    /// {keys, rows: [{key, value}], not_selected_total}
    nlohmann::json to_json() const;
    std::string render_text() const;
};

/// Group-by aggregation: each group's annotation is the ⊕-fold of its members.  Null key values form their
/// own group.  Empty `keys` yields a single global group, zero over an empty input.
GroupedResult aggregate(const AnnotatedRelation &rel, const std::vector<std::string> &keys);

/// The grouped result as a relation with qualified key columns and the group annotations.
AnnotatedRelation to_relation(const GroupedResult &g, const Schema &key_schema);

enum class JoinMode { Inner, LeftOuter };

/// Hash equi-join; joined rows carry the ⊗ of both annotations.  Null keys never match.  In LeftOuter mode an
/// unmatched left row keeps its annotation (times `padding`, the annotation of the all-Null right tuple, when
/// given) and gets Null right attributes.  The output schema is the qualified left schema followed by the
/// qualified right schema.  Throws KindMismatch, BadJoinAttr.
AnnotatedRelation join(const AnnotatedRelation &left, const AnnotatedRelation &right,
                       const std::vector<std::pair<std::string, std::string>> &on, JoinMode mode,
                       const std::optional<Annotation> &padding = std::nullopt);

/// relation name -> weights for that relation
using WeightMap = std::map<std::string, WeightTable, std::less<>>;

/// The base query total γ(R1 ⟕ ... ⟕ Rk) as a single global group.
GroupedResult evaluate_base(const QueryPlan &plan, const Database &db);

/// Materializes the weighed left-outer join chain along the plan's depth-first order, splits rows by the
/// selection (Null predicate cells count as not selected), and groups the selected rows.  Every weighing
/// target needs an entry in `weights` (MissingWeights otherwise); entries for other relations are ignored.
GroupedResult evaluate(const QueryPlan &plan, const Database &db, const WeightMap &weights);

/// Same result as `evaluate`, computed bottom-up over the join tree: each relation is first aggregated onto
/// its join keys and referenced attributes, and each subtree is aggregated onto the key towards its parent
/// before being joined.  Many-to-many joins shrink to one-to-many joins of partial aggregates.
GroupedResult pushdown_aggregate(const QueryPlan &plan, const Database &db, const WeightMap &weights);

/// Weights for every target: the given table, or equal weighing when absent.
WeightMap with_default_weights(const QueryPlan &plan, const Database &db, const WeightMap &weights);

/// Annotated database with every target relation weighed; relations without an entry stay unweighed.
AnnotatedDatabase weighed_database(const QueryPlan &plan, const Database &db, const WeightMap &weights);

/*======================================================================================================================
 * Nested partial-aggregate views
 *====================================================================================================================*/

struct NestedMember
{
    RowId row_id;
    Tuple values;
    Weight weight;
};

struct NestedGroup
{
    Tuple key;
    /// Finalized aggregate of everything joined before the frontier, for this key.
    std::optional<double> parent_value;
    Annotation parent_annotation;
    std::vector<NestedMember> members;
};

/// One page of the frontier relation's join-key groups, in ascending key order, each paired with the parent
/// side's partial aggregate.
struct NestedView
{
    std::string frontier;
    std::vector<std::string> join_key;
    std::string parent;
    std::vector<std::string> parent_key;
    std::vector<std::string> columns; ///< frontier attribute names
    std::vector<NestedGroup> groups;
    std::size_t offset = 0;
    std::size_t total_groups = 0;
    bool end_of_data = true;

    nlohmann::json to_json() const;
};

/// Groups of the frontier relation with non-Null keys, paged by offset/limit.  Earlier targets use their
/// weights from `weights` (equal weighing when absent); the members show the frontier's current weights.
/// Throws UnknownRelation when the frontier is not joined by the plan, RangeError when limit is 0.
NestedView partial_view(const QueryPlan &plan, const Database &db, const WeightMap &weights,
                        std::string_view frontier, std::size_t offset, std::size_t limit);

}
