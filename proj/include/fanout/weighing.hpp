#pragma once

#include <fanout/relation.hpp>
#include <fanout/semiring.hpp>

#include <json.hpp>

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace fanout {

/*======================================================================================================================
 * Strategies
 *====================================================================================================================*/

/// Every row of a group of n rows gets 1/n.
struct EqualWeighing
{
    bool operator==(const EqualWeighing &) const = default;
};

enum class Pick { First, Last };

/// The first (or last) row by `attr` gets 1, the others 0.
struct OrderBased
{
    std::string attr;
    Pick pick = Pick::Last;

    bool operator==(const OrderBased &) const = default;
};

/// U-shaped: first and last rows by `attr` get fixed shares, the middle rows split the rest evenly.
struct PositionBased
{
    std::string attr;
    Weight first_w;
    Weight last_w;

    bool operator==(const PositionBased &) const = default;
};

/// Rows share the group's unit weight in proportion to a positive numeric attribute.
struct Proportional
{
    std::string attr;

    bool operator==(const Proportional &) const = default;
};

/// Verbatim per-row weights keyed by row id.
struct Custom
{
    std::map<RowId, Weight> entries;

    bool operator==(const Custom &) const = default;
};

using WeighingStrategy = std::variant<EqualWeighing, OrderBased, PositionBased, Proportional, Custom>;

std::string strategy_name(const WeighingStrategy &s);

/// Command-line mini syntax: equal | order:attr[:first|last] | position:attr:first_w:last_w | prop:attr |
/// custom:path.  Custom files are CSV (row_id,weight) or JSON ({"weights": {row_id: weight}} or a list of
/// {row_id, weight}).
WeighingStrategy parse_strategy(std::string_view spec);
/// JSON form {type, params}.
WeighingStrategy strategy_from_json(const nlohmann::json &doc);
nlohmann::json to_json(const WeighingStrategy &s);

std::map<RowId, Weight> read_weight_csv(std::istream &in, std::string_view source = "<stream>");
std::map<RowId, Weight> weights_from_json(const nlohmann::json &doc);
std::map<RowId, Weight> load_weight_file(const std::string &path);

/*======================================================================================================================
 * Weight tables
 *====================================================================================================================*/

/// Per-row weights of one relation; each non-Null join-key group is meant to sum to one.
struct WeightTable
{
    std::string relation;
    std::vector<std::string> join_key;
    std::map<RowId, Weight> entries;

    const Weight & at(RowId id) const;
    nlohmann::json to_json() const;
};

/// Weights of 1 for every row: the unweighed relation.
WeightTable unit_weights(const AnnotatedRelation &rel, const std::vector<std::string> &join_key);

/// Throws InvalidStrategy, NonPositiveProportionalValue (row cited), MissingOrderAttr, MissingRowId.
WeightTable build_weight_table(const WeighingStrategy &strategy, const AnnotatedRelation &rel,
                               const std::vector<std::string> &join_key);

struct GroupSum
{
    Tuple key;
    Rational sum;
};

struct WeightValidation
{
    bool ok = true;
    std::vector<GroupSum> violations;   ///< non-Null groups whose sum is not 1
    std::vector<RowId> missing_rows;    ///< relation rows without an entry
    std::vector<RowId> unknown_rows;    ///< entries for rows the relation does not have
    std::vector<RowId> null_key_rows;   ///< informational: these rows never join
    std::vector<RowId> above_one_rows;  ///< informational: weights greater than 1

    nlohmann::json to_json() const;
    std::string summary() const;
};

/// ok iff every row has an entry and every non-Null join-key group sums to 1 within `tolerance`.
WeightValidation validate(const WeightTable &wt, const AnnotatedRelation &rel, double tolerance = 1e-9);

/// Scales each row's annotation by its weight.  Throws UnsupportedScale for tropical kinds and MissingRowId
/// when a row has no weight.
AnnotatedRelation apply_weights(const WeightTable &wt, const AnnotatedRelation &rel);

}
