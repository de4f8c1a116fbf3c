#include <fanout/consistency.hpp>

#include <fanout/error.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace fanout {

using nlohmann::json;

std::string_view to_string(Verdict v) { return v == Verdict::Consistent ? "Consistent" : "Inconsistent"; }

namespace {

json finalized_json(const Annotation &a)
{
    auto v = sr_finalize(a);
    return v ? json(*v) : json(nullptr);
}

std::string finalized_text(const Annotation &a)
{
    auto v = sr_finalize(a);
    if (not v) return "NULL";
    return format_value(Value(*v));
}

std::string key_text(const std::vector<std::string> &attrs, const Tuple &key)
{
    std::string out;
    for (std::size_t i = 0; i != key.size(); ++i)
        out += (i ? ", " : "") + (i < attrs.size() ? attrs[i] : "?") + "=" + format_value(key[i]);
    return out;
}

Rational abs_diff_one(const Rational &r) { return r > 1 ? Rational(r - 1) : Rational(1 - r); }

}

json RelationFanout::to_json() const
{
    json groups = json::array();
    for (const auto &g : sample)
        groups.push_back({{"key", tuple_to_json(g.key)}, {"partial", to_double(g.partial)},
                          {"partial_exact", rational_to_string(g.partial)}});
    return {{"relation", relation}, {"join_key", join_key}, {"violating_groups", violating_groups}, {"sample", groups}};
}

Annotation ConsistencyReport::combined_total() const
{
    return not_selected_total ? query_total + *not_selected_total : query_total;
}

json ConsistencyReport::to_json() const
{
    json fanout = json::array();
    for (const auto &f : per_relation_fanout) fanout.push_back(f.to_json());
    json out = {{"kind", std::string(fanout::to_string(kind))},
                {"verdict", std::string(fanout::to_string(verdict))},
                {"base_total", finalized_json(base_total)},
                {"query_total", finalized_json(query_total)},
                {"not_selected_total", not_selected_total ? finalized_json(*not_selected_total) : json(nullptr)},
                {"combined_total", finalized_json(combined_total())},
                {"tolerance", tolerance},
                {"per_relation_fanout", fanout},
                {"query_result", query_result.to_json()},
                {"base_result", base_result.to_json()},
                {"null_payload_count", null_payload_count}};
    if (kind == SemiringKind::Avg) {
        auto pair = [](const Annotation &a) { return json{{"count", a.avg_value().count}, {"sum", a.avg_value().sum}}; };
        out["base_pair"] = pair(base_total);
        out["combined_pair"] = pair(combined_total());
    }
    return out;
}

std::string ConsistencyReport::render_text() const
{
    std::ostringstream os;
    os << query_result.render_text() << '\n';
    os << "base total:     " << finalized_text(base_total) << '\n';
    os << "query total:    " << finalized_text(query_total) << '\n';
    if (not_selected_total) os << "not selected:   " << finalized_text(*not_selected_total) << '\n';
    os << "verdict:        " << fanout::to_string(verdict) << '\n';
    if (null_payload_count) os << "null payloads:  " << null_payload_count << " row(s) ignored\n";
    for (const auto &f : per_relation_fanout) {
        os << "fanout in " << f.relation << " on (";
        for (std::size_t i = 0; i != f.join_key.size(); ++i) os << (i ? ", " : "") << f.join_key[i];
        os << "): " << f.violating_groups << " group(s) with partial aggregate != 1\n";
        for (const auto &g : f.sample)
            os << "  " << key_text(f.join_key, g.key) << "  partial " << rational_to_string(g.partial) << '\n';
    }
    return os.str();
}

WeightMap with_unit_weights(const QueryPlan &plan, const Database &db, const WeightMap &weights)
{
    WeightMap out;
    for (const auto &t : plan.targets) {
        auto it = weights.find(t.relation);
        out.emplace(t.relation, it != weights.end() ? it->second : unit_weights(db.at(t.relation), t.join_key));
    }
    return out;
}

ConsistencyReport check(const QueryPlan &plan, const Database &db, const WeightMap &weights, double tolerance)
{
    auto all = with_unit_weights(plan, db, weights);

    ConsistencyReport report;
    report.kind = plan.kind();
    report.tolerance = tolerance;
    report.base_result = evaluate_base(plan, db);
    report.query_result = evaluate(plan, db, all);
    report.base_total = report.base_result.total();
    report.query_total = report.query_result.total();
    report.not_selected_total = report.query_result.not_selected_total;
    report.null_payload_count = annotate_for_metric(db, plan.query.base.metric).null_payload_count;

    bool holds = approx_equal(report.combined_total(), report.base_total, tolerance);
    report.verdict = holds ? Verdict::Consistent : Verdict::Inconsistent;
    report.per_relation_fanout = diagnose(plan, db, all, tolerance);
    return report;
}

std::vector<RelationFanout> diagnose(const QueryPlan &plan, const Database &db, const WeightMap &weights,
                                     double tolerance)
{
    const Rational tol = rational_from_double(tolerance);
    std::vector<RelationFanout> out;
    for (const auto &t : plan.targets) {
        const auto &rel = db.at(t.relation);
        auto it = weights.find(t.relation);
        const WeightTable wt = it != weights.end() ? it->second : unit_weights(rel, t.join_key);

        auto ones = rel.reannotated(SemiringKind::Count, [](const Row &) { return Annotation::one(SemiringKind::Count); });
        auto partials = aggregate(apply_weights(wt, ones), t.join_key);

        RelationFanout f;
        f.relation = t.relation;
        f.join_key = t.join_key;
        for (const auto &[key, ann] : partials.groups) {
            if (join_key_has_null(key)) continue;
            if (abs_diff_one(ann.count_value()) > tol) f.sample.push_back({key, ann.count_value()});
        }
        if (f.sample.empty()) continue;
        f.violating_groups = f.sample.size();
        std::stable_sort(f.sample.begin(), f.sample.end(), [](const FanoutGroup &a, const FanoutGroup &b) {
            return abs_diff_one(a.partial) > abs_diff_one(b.partial);
        });
        if (f.sample.size() > fanout_top_k) f.sample.resize(fanout_top_k);
        out.push_back(std::move(f));
    }
    return out;
}

}
