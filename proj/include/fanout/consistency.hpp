#pragma once

#include <fanout/engine.hpp>
#include <fanout/semantic_model.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace fanout {

enum class Verdict { Consistent, Inconsistent };

std::string_view to_string(Verdict v);

/// A join-key group whose weighted partial aggregate is not one.
struct FanoutGroup
{
    Tuple key;
    Rational partial;
};

struct RelationFanout
{
    std::string relation;
    std::vector<std::string> join_key;
    std::size_t violating_groups = 0;
    /// The worst groups by |partial - 1|, at most `top_k`, ties in ascending key order.
    std::vector<FanoutGroup> sample;

    nlohmann::json to_json() const;
};

struct ConsistencyReport
{
    SemiringKind kind = SemiringKind::Count;
    Annotation base_total;
    Annotation query_total;                       ///< ⊕ over the selected groups
    std::optional<Annotation> not_selected_total; ///< only with a selection
    Verdict verdict = Verdict::Consistent;
    double tolerance = 1e-9;
    std::vector<RelationFanout> per_relation_fanout;
    GroupedResult query_result;
    GroupedResult base_result;
    std::size_t null_payload_count = 0;

    /// query_total ⊕ not_selected_total
    Annotation combined_total() const;

    nlohmann::json to_json() const;
    std::string render_text() const;
};

inline constexpr std::size_t fanout_top_k = 10;

/// Weights for every target: the given table, or unit weights (the unweighed relation) when absent.
WeightMap with_unit_weights(const QueryPlan &plan, const Database &db, const WeightMap &weights);

/// Evaluates Q_base and Q* and checks γ(Q*) ⊕ γ(Q*_¬) = Q_base.  Count is compared exactly; SumReal and Avg
/// within `tolerance` relative (Avg on the (count, sum) pair); tropical kinds exactly.  Targets missing from
/// `weights` are evaluated unweighed.
ConsistencyReport check(const QueryPlan &plan, const Database &db, const WeightMap &weights,
                        double tolerance = 1e-9);

/// For each weighing target, the join-key groups whose weight sum (the partial aggregate of a one-annotated
/// weighed copy) differs from one.  Targets without weights count as unweighed.  Relations with no
/// violating group are omitted, so an empty result means the sufficient condition holds.
std::vector<RelationFanout> diagnose(const QueryPlan &plan, const Database &db, const WeightMap &weights,
                                     double tolerance = 1e-9);

}
