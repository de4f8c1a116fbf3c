#include "oracle.hpp"

#include <algorithm>

namespace fanout::testing {

namespace {

/// One output row of the join: for each relation, the matched row or nullptr when padded.
using JoinedRow = std::map<std::string, const Row *>;

Value cell(const Database &db, const JoinedRow &jr, const std::string &qualified)
{
    auto [rel, attr] = split_qualified(qualified);
    auto it = jr.find(rel);
    if (it == jr.end() or it->second == nullptr) return Value{};
    return it->second->values[db.at(rel).schema().index_of(attr)];
}

std::vector<JoinedRow> nested_loop_join(const QueryPlan &plan, const Traversal &steps, const Database &db)
{
    std::vector<JoinedRow> out;
    for (const auto &row : db.at(plan.root).rows()) out.push_back({{plan.root, &row}});
    for (const auto &step : steps) {
        const auto &child = db.at(step.child);
        std::vector<JoinedRow> next;
        for (const auto &jr : out) {
            bool matched = false;
            const Row *p = jr.at(step.parent);
            if (p != nullptr) {
                for (const auto &c : child.rows()) {
                    bool eq = true;
                    for (std::size_t k = 0; k < step.parent_attrs.size() and eq; ++k) {
                        const Value &pv = p->values[db.at(step.parent).schema().index_of(step.parent_attrs[k])];
                        const Value &cv = c.values[child.schema().index_of(step.child_attrs[k])];
                        eq = not is_null(pv) and not is_null(cv) and pv == cv;
                    }
                    if (not eq) continue;
                    matched = true;
                    auto extended = jr;
                    extended[step.child] = &c;
                    next.push_back(std::move(extended));
                }
            }
            if (not matched) {
                auto extended = jr;
                extended[step.child] = nullptr;
                next.push_back(std::move(extended));
            }
        }
        out = std::move(next);
    }
    return out;
}

bool compare(const Value &v, CompareOp op, const Value &lit)
{
    if (is_null(v) or is_null(lit)) return false;
    auto a = numeric_value(v), b = numeric_value(lit);
    if (a and b) {
        switch (op) {
            case CompareOp::Eq: return *a == *b;
            case CompareOp::Ne: return *a != *b;
            case CompareOp::Lt: return *a < *b;
            case CompareOp::Le: return *a <= *b;
            case CompareOp::Gt: return *a > *b;
            case CompareOp::Ge: return *a >= *b;
        }
    }
    const auto &s = std::get<std::string>(v);
    const auto &t = std::get<std::string>(lit);
    switch (op) {
        case CompareOp::Eq: return s == t;
        case CompareOp::Ne: return s != t;
        case CompareOp::Lt: return s < t;
        case CompareOp::Le: return s <= t;
        case CompareOp::Gt: return s > t;
        case CompareOp::Ge: return s >= t;
    }
    return false;
}

struct Accumulator
{
    Rational count{0};
    double sum = 0;
    double weight = 0;
    std::optional<double> extreme;
};

}

OracleResult oracle_evaluate(const QueryPlan &plan, const Database &db, const WeightMap &weights)
{
    const auto &q = plan.query;
    const auto &metric = q.base.metric;
    auto rows = nested_loop_join(plan, plan.subtree, db);

    std::string payload_attr;
    if (not metric.is_count_star()) payload_attr = metric.payload;

    std::map<Tuple, Accumulator> acc;
    Accumulator rest;
    if (q.group_by.empty()) acc[{}];

    for (const auto &jr : rows) {
        Rational w{1};
        for (const auto &t : plan.targets)
            if (const Row *r = jr.at(t.relation)) w *= weights.at(t.relation).at(r->id).value();

        bool selected = true;
        if (q.selection)
            for (const auto &a : q.selection->atoms) selected = selected and compare(cell(db, jr, a.attribute), a.op, a.literal);
        Tuple key;
        for (const auto &g : q.group_by) key.push_back(cell(db, jr, g));
        Accumulator &a = selected ? acc[key] : rest;

        const Row *payload_row = jr.at(plan.payload_relation);
        if (payload_row == nullptr) continue;
        Value x = payload_attr.empty() ? Value(std::int64_t{1}) : cell(db, jr, payload_attr);
        if (is_null(x)) continue;
        double xv = *numeric_value(x);
        a.count += w;
        a.sum += to_double(w) * xv;
        a.weight += to_double(w);
        if (metric.agg == Aggregate::Max) a.extreme = a.extreme ? std::max(*a.extreme, xv) : xv;
        if (metric.agg == Aggregate::Min) a.extreme = a.extreme ? std::min(*a.extreme, xv) : xv;
    }

    auto finalize = [&](const Accumulator &a) -> std::optional<double> {
        switch (metric.agg) {
            case Aggregate::Count: return to_double(a.count);
            case Aggregate::Sum: return a.sum;
            case Aggregate::Avg: return a.count == 0 ? std::nullopt : std::optional(a.sum / to_double(a.count));
            case Aggregate::Max:
            case Aggregate::Min: return a.extreme;
        }
        return std::nullopt;
    };

    OracleResult out;
    out.joined_rows = rows.size();
    for (const auto &[key, a] : acc) {
        out.groups[key] = finalize(a);
        out.exact_counts[key] = a.count;
    }
    if (q.selection) {
        out.not_selected = finalize(rest);
        out.exact_not_selected = rest.count;
    }
    return out;
}

std::optional<double> oracle_base_total(const QueryPlan &plan, const Database &db)
{
    QueryPlan base = plan;
    base.subtree = plan.base_subtree;
    base.targets.clear();
    base.query.group_by.clear();
    base.query.selection.reset();
    return oracle_evaluate(base, db, {}).groups.at({});
}

}
