#include <fanout/semantic_model.hpp>

#include <fanout/error.hpp>

#include <algorithm>

namespace fanout {

using nlohmann::json;

std::string_view to_string(Aggregate agg)
{
    switch (agg) {
        case Aggregate::Sum: return "SUM";
        case Aggregate::Count: return "COUNT";
        case Aggregate::Avg: return "AVG";
        case Aggregate::Max: return "MAX";
        case Aggregate::Min: return "MIN";
    }
    return "?";
}

Aggregate aggregate_from_string(std::string_view name)
{
    std::string upper(name);
    for (auto &c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (auto a : {Aggregate::Sum, Aggregate::Count, Aggregate::Avg, Aggregate::Max, Aggregate::Min})
        if (to_string(a) == upper) return a;
    throw Error(errc::ParseError, "unknown aggregate '" + std::string(name) + "'");
}

SemiringKind semiring_for(Aggregate agg)
{
    switch (agg) {
        case Aggregate::Sum: return SemiringKind::SumReal;
        case Aggregate::Count: return SemiringKind::Count;
        case Aggregate::Avg: return SemiringKind::Avg;
        case Aggregate::Max: return SemiringKind::MaxTropical;
        case Aggregate::Min: return SemiringKind::MinTropical;
    }
    return SemiringKind::Count;
}

std::string Metric::payload_relation() const
{
    if (is_count_star()) return {};
    return split_qualified(payload).first;
}

std::string Metric::to_sql() const { return std::string(to_string(agg)) + "(" + payload + ")"; }

std::string_view to_string(CompareOp op)
{
    switch (op) {
        case CompareOp::Eq: return "=";
        case CompareOp::Ne: return "!=";
        case CompareOp::Lt: return "<";
        case CompareOp::Le: return "<=";
        case CompareOp::Gt: return ">";
        case CompareOp::Ge: return ">=";
    }
    return "?";
}

namespace {

std::string_view trim(std::string_view s)
{
    while (not s.empty() and std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (not s.empty() and std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

CompareOp op_from_string(std::string_view op)
{
    if (op == "=" or op == "==") return CompareOp::Eq;
    if (op == "!=" or op == "<>") return CompareOp::Ne;
    if (op == "<") return CompareOp::Lt;
    if (op == "<=") return CompareOp::Le;
    if (op == ">") return CompareOp::Gt;
    if (op == ">=") return CompareOp::Ge;
    throw Error(errc::ParseError, "unknown comparison operator '" + std::string(op) + "'");
}

/// Retypes a Text literal to the attribute's type.
Value type_literal(const Value &literal, const Attribute &attr, std::string_view qualified)
{
    if (is_null(literal))
        throw Error(errc::TypeError, "NULL literal in predicate on '" + std::string(qualified) + "' never matches");
    if (attr.type == ValueType::Text) {
        if (auto s = std::get_if<std::string>(&literal)) return *s;
        return format_value(literal);
    }
    if (auto s = std::get_if<std::string>(&literal)) {
        try {
            // Int columns may still be compared against fractional literals
            if (attr.type == ValueType::Int and s->find_first_of(".eE") != std::string::npos)
                return parse_value(*s, ValueType::Real);
            return parse_value(*s, attr.type);
        } catch (const Error &) {
            throw Error(errc::TypeError, "literal '" + *s + "' does not fit " + std::string(qualified) + " (" +
                                             std::string(to_string(attr.type)) + ")",
                        {{"attribute", std::string(qualified)}, {"literal", *s}});
        }
    }
    if (not numeric_value(literal))
        throw Error(errc::TypeError, "literal does not fit " + std::string(qualified), {{"attribute", std::string(qualified)}});
    return literal;
}

}

Atom parse_atom(std::string_view text)
{
    static constexpr std::string_view ops[] = {"<=", ">=", "!=", "<>", "==", "=", "<", ">"};
    std::size_t best = std::string_view::npos;
    std::string_view best_op;
    for (auto op : ops) {
        auto pos = text.find(op);
        if (pos != std::string_view::npos and (pos < best or (pos == best and op.size() > best_op.size()))) {
            best = pos;
            best_op = op;
        }
    }
    if (best == std::string_view::npos)
        throw Error(errc::ParseError, "predicate '" + std::string(text) + "' has no comparison operator");
    auto attr = trim(text.substr(0, best));
    auto lit = trim(text.substr(best + best_op.size()));
    if (attr.empty() or lit.empty())
        throw Error(errc::ParseError, "malformed predicate '" + std::string(text) + "'");
    if (lit.size() >= 2 and (lit.front() == '\'' or lit.front() == '"') and lit.back() == lit.front())
        lit = lit.substr(1, lit.size() - 2);
    split_qualified(attr);
    return Atom{std::string(attr), op_from_string(best_op), std::string(lit)};
}

bool satisfies(const Value &cell, CompareOp op, const Value &literal)
{
    if (is_null(cell) or is_null(literal)) return false;
    int cmp;
    auto a = numeric_value(cell), b = numeric_value(literal);
    if (a and b) {
        cmp = *a < *b ? -1 : (*a > *b ? 1 : 0);
    } else {
        auto x = std::get_if<std::string>(&cell);
        auto y = std::get_if<std::string>(&literal);
        if (not x or not y) return false;
        int c = x->compare(*y);
        cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    switch (op) {
        case CompareOp::Eq: return cmp == 0;
        case CompareOp::Ne: return cmp != 0;
        case CompareOp::Lt: return cmp < 0;
        case CompareOp::Le: return cmp <= 0;
        case CompareOp::Gt: return cmp > 0;
        case CompareOp::Ge: return cmp >= 0;
    }
    return false;
}

std::set<std::string> referenced_relations(const ExploratoryQuery &q)
{
    std::set<std::string> out(q.joins.begin(), q.joins.end());
    for (const auto &g : q.group_by) out.insert(split_qualified(g).first);
    if (q.selection)
        for (const auto &a : q.selection->atoms) out.insert(split_qualified(a.attribute).first);
    return out;
}

/*======================================================================================================================
 * SemanticLayer
 *====================================================================================================================*/

SemanticLayer SemanticLayer::from_json(const json &doc)
{
    SemanticLayer layer;
    try {
        for (const auto &m : doc.at("metrics")) {
            Metric metric{m.at("name").get<std::string>(), aggregate_from_string(m.at("agg").get<std::string>()),
                          m.value("payload", std::string("*"))};
            if (metric.is_count_star() and metric.agg != Aggregate::Count)
                throw Error(errc::ParseError, "metric '" + metric.name + "': only COUNT accepts '*'");
            if (not metric.is_count_star()) split_qualified(metric.payload);
            for (const auto &other : layer.metrics)
                if (other.name == metric.name) throw Error(errc::ParseError, "duplicate metric '" + metric.name + "'");
            layer.metrics.push_back(std::move(metric));
        }
        for (const auto &b : doc.value("base_queries", json::array())) {
            BaseQuery base{layer.metric(b.at("metric").get<std::string>()), b.at("relations").get<std::vector<std::string>>()};
            layer.base_queries.push_back(std::move(base));
        }
    } catch (const json::exception &e) {
        throw Error(errc::ParseError, std::string("malformed semantic layer: ") + e.what());
    }
    return layer;
}

json SemanticLayer::to_json() const
{
    json ms = json::array(), bs = json::array();
    for (const auto &m : metrics) ms.push_back(fanout::to_json(m));
    for (const auto &b : base_queries) bs.push_back({{"metric", b.metric.name}, {"relations", b.relations}});
    return {{"metrics", ms}, {"base_queries", bs}};
}

const Metric & SemanticLayer::metric(std::string_view name) const
{
    for (const auto &m : metrics)
        if (m.name == name) return m;
    throw Error(errc::UnknownMetric, "unknown metric '" + std::string(name) + "'", {{"metric", std::string(name)}});
}

const BaseQuery & SemanticLayer::base_query(std::string_view metric_name) const
{
    for (const auto &b : base_queries)
        if (b.metric.name == metric_name) return b;
    metric(metric_name);
    throw Error(errc::UnknownMetric, "metric '" + std::string(metric_name) + "' has no base query",
                {{"metric", std::string(metric_name)}});
}

/*======================================================================================================================
 * Plans
 *====================================================================================================================*/

std::set<std::string> QueryPlan::base_relations() const
{
    return {query.base.relations.begin(), query.base.relations.end()};
}

std::set<std::string> QueryPlan::relations() const
{
    std::set<std::string> out{root};
    for (const auto &s : subtree) out.insert(s.child);
    return out;
}

const WeighingTarget * QueryPlan::find_target(std::string_view relation) const
{
    for (const auto &t : targets)
        if (t.relation == relation) return &t;
    return nullptr;
}

QueryPlan resolve(const ExploratoryQuery &q, const JoinGraph &graph, const Database &db)
{
    const auto &base = q.base;
    if (base.relations.empty())
        throw Error(errc::InvalidQuery, "base query for '" + base.metric.name + "' lists no relations");
    std::set<std::string> base_set;
    for (const auto &r : base.relations) {
        if (not graph.nodes.count(r))
            throw Error(errc::UnknownRelation, "base relation '" + r + "' is not in the join graph", {{"relation", r}});
        if (not base_set.insert(r).second)
            throw Error(errc::InvalidQuery, "base relation '" + r + "' listed twice", {{"relation", r}});
    }

    auto check_attr = [&](const std::string &qualified) -> const Attribute & {
        auto [rel, attr] = split_qualified(qualified);
        if (not graph.nodes.count(rel))
            throw Error(errc::UnknownAttribute, "'" + qualified + "' refers to relation '" + rel + "' outside the join graph",
                        {{"attribute", qualified}});
        const auto &schema = db.at(rel).schema();
        auto idx = schema.find(attr);
        if (not idx)
            throw Error(errc::UnknownAttribute, "unknown attribute '" + qualified + "'", {{"attribute", qualified}});
        return schema[*idx];
    };

    QueryPlan plan;
    plan.query = q;
    plan.root = base.relations.front();

    const auto &metric = base.metric;
    if (metric.is_count_star()) {
        plan.payload_relation = plan.root;
    } else {
        check_attr(metric.payload);
        plan.payload_relation = metric.payload_relation();
        if (not base_set.count(plan.payload_relation))
            throw Error(errc::InvalidQuery,
                        "payload relation '" + plan.payload_relation + "' of metric '" + metric.name +
                            "' is not in its base query",
                        {{"metric", metric.name}, {"relation", plan.payload_relation}});
    }

    for (const auto &g : q.group_by) check_attr(g);
    if (q.selection) {
        for (auto &atom : plan.query.selection->atoms) atom.literal = type_literal(atom.literal, check_attr(atom.attribute), atom.attribute);
    }
    for (const auto &j : q.joins)
        if (not graph.nodes.count(j))
            throw Error(errc::UnknownRelation, "joined relation '" + j + "' is not in the join graph", {{"relation", j}});

    plan.base_subtree = steiner_subtree(graph, base_set, base.relations);
    for (const auto &step : plan.base_subtree)
        if (not base_set.count(step.child))
            throw Error(errc::InvalidQuery,
                        "base relations of '" + metric.name + "' are not connected; path runs through '" + step.child + "'",
                        {{"metric", metric.name}, {"via", step.child}});

    auto required = referenced_relations(plan.query);
    required.insert(base_set.begin(), base_set.end());
    plan.subtree = steiner_subtree(graph, required, base.relations);
    if (is_scalable(metric.kind())) plan.targets = weighing_targets(graph, base_set, plan.subtree);
    return plan;
}

/*======================================================================================================================
 * Annotation
 *====================================================================================================================*/

AnnotatedDatabase annotate_for_metric(const Database &db, const Metric &metric)
{
    const SemiringKind kind = metric.kind();
    AnnotatedDatabase out{{}, kind, 0};

    std::string payload_rel;
    std::size_t payload_idx = 0;
    if (not metric.is_count_star()) {
        auto [rel, attr] = split_qualified(metric.payload);
        payload_rel = rel;
        const auto &schema = db.at(rel).schema();
        auto idx = schema.find(attr);
        if (not idx)
            throw Error(errc::MissingAttribute, "metric '" + metric.name + "': no attribute '" + metric.payload + "'",
                        {{"metric", metric.name}, {"attribute", metric.payload}});
        payload_idx = *idx;
        if (metric.agg != Aggregate::Count and not is_numeric(schema[payload_idx].type))
            throw Error(errc::NonNumericPayload, "metric '" + metric.name + "': '" + metric.payload + "' is not numeric",
                        {{"metric", metric.name}, {"attribute", metric.payload}});
    }

    const Annotation one = Annotation::one(kind);
    for (const auto &[name, rel] : db.relations()) {
        if (name != payload_rel) {
            out.db.add(rel.reannotated(kind, [&](const Row &) { return one; }));
            continue;
        }
        out.db.add(rel.reannotated(kind, [&](const Row &row) {
            const Value &cell = row.values[payload_idx];
            if (is_null(cell)) {
                ++out.null_payload_count;
                return Annotation::zero(kind);
            }
            switch (metric.agg) {
                case Aggregate::Count: return Annotation::one(kind);
                case Aggregate::Sum: return Annotation::sum(*numeric_value(cell));
                case Aggregate::Avg: return Annotation::avg(1, *numeric_value(cell));
                case Aggregate::Max: return Annotation::max(*numeric_value(cell));
                case Aggregate::Min: return Annotation::min(*numeric_value(cell));
            }
            return one;
        }));
    }
    return out;
}

/*======================================================================================================================
 * JSON
 *====================================================================================================================*/

json to_json(const Metric &m)
{
    return {{"name", m.name}, {"agg", std::string(to_string(m.agg))}, {"payload", m.payload},
            {"semiring", std::string(to_string(m.kind()))}};
}

json to_json(const ExploratoryQuery &q)
{
    json where = json::array();
    if (q.selection)
        for (const auto &a : q.selection->atoms)
            where.push_back({{"attr", a.attribute}, {"op", std::string(to_string(a.op))}, {"value", value_to_json(a.literal)}});
    return {{"metric", q.base.metric.name}, {"base", q.base.relations}, {"group_by", q.group_by},
            {"where", where}, {"joins", q.joins}};
}

ExploratoryQuery query_from_json(const json &doc, const SemanticLayer &layer)
{
    ExploratoryQuery q;
    try {
        q.base = layer.base_query(doc.at("metric").get<std::string>());
        q.group_by = doc.value("group_by", std::vector<std::string>{});
        q.joins = doc.value("joins", std::vector<std::string>{});
        if (doc.contains("where") and not doc["where"].is_null() and not doc["where"].empty()) {
            Predicate p;
            for (const auto &w : doc["where"]) {
                if (w.is_string()) {
                    p.atoms.push_back(parse_atom(w.get<std::string>()));
                } else {
                    const auto &v = w.at("value");
                    Value lit = v.is_string() ? Value(v.get<std::string>())
                              : v.is_number_integer() ? Value(v.get<std::int64_t>())
                                                      : Value(v.get<double>());
                    p.atoms.push_back(Atom{w.at("attr").get<std::string>(), op_from_string(w.at("op").get<std::string>()), lit});
                }
            }
            q.selection = std::move(p);
        }
    } catch (const json::exception &e) {
        throw Error(errc::BadRequest, std::string("malformed query: ") + e.what());
    }
    return q;
}

}
