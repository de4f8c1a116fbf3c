#include <fanout/engine.hpp>

#include <fanout/error.hpp>

#include <algorithm>
#include <functional>
#include <iomanip>
#include <sstream>
#include <unordered_map>

namespace fanout {

using nlohmann::json;

/*======================================================================================================================
 * GroupedResult
 *====================================================================================================================*/

Annotation GroupedResult::total() const
{
    Annotation sum = Annotation::zero(kind);
    for (const auto &[_, ann] : groups) sum += ann;
    return sum;
}

Annotation GroupedResult::at(const Tuple &key) const
{
    auto it = groups.find(key);
    return it == groups.end() ? Annotation::zero(kind) : it->second;
}

std::optional<double> GroupedResult::value(const Tuple &key) const
{
    auto it = groups.find(key);
    if (it == groups.end()) return std::nullopt;
    return sr_finalize(it->second);
}

namespace {

json scalar_json(const std::optional<double> &v) { return v ? json(*v) : json(nullptr); }

std::string scalar_text(const std::optional<double> &v)
{
    if (not v) return "NULL";
    return format_value(Value(*v));
}

}

json GroupedResult::to_json() const
{
    json rows = json::array();
    for (const auto &[key, ann] : groups) rows.push_back({{"key", tuple_to_json(key)}, {"value", scalar_json(sr_finalize(ann))}});
    json out = {{"keys", keys}, {"rows", rows}};
    out["not_selected_total"] = not_selected_total ? scalar_json(sr_finalize(*not_selected_total)) : json(nullptr);
    return out;
}

std::string GroupedResult::render_text() const
{
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header = keys;
    header.push_back("value");
    cells.push_back(header);
    for (const auto &[key, ann] : groups) {
        std::vector<std::string> line;
        for (const auto &v : key) line.push_back(format_value(v));
        line.push_back(scalar_text(sr_finalize(ann)));
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto &line : cells)
        for (std::size_t i = 0; i != line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::ostringstream os;
    for (std::size_t r = 0; r != cells.size(); ++r) {
        for (std::size_t i = 0; i != cells[r].size(); ++i)
            os << (i ? " | " : "") << std::left << std::setw(static_cast<int>(width[i])) << cells[r][i];
        os << '\n';
        if (r == 0) {
            for (std::size_t i = 0; i != width.size(); ++i) os << (i ? "-+-" : "") << std::string(width[i], '-');
            os << '\n';
        }
    }
    if (not_selected_total) os << "(not selected: " << scalar_text(sr_finalize(*not_selected_total)) << ")\n";
    return os.str();
}

/*======================================================================================================================
 * Operators
 *====================================================================================================================*/

GroupedResult aggregate(const AnnotatedRelation &rel, const std::vector<std::string> &keys)
{
    GroupedResult out;
    out.kind = rel.require_annotated();
    auto pos = rel.positions(keys);
    for (auto p : pos) out.keys.push_back(rel.schema().qualified_name(p));
    if (keys.empty()) out.groups.emplace(Tuple{}, Annotation::zero(out.kind));
    for (const auto &row : rel.rows()) {
        auto key = rel.project(row, pos);
        auto it = out.groups.find(key);
        if (it == out.groups.end()) out.groups.emplace(std::move(key), row.ann);
        else it->second += row.ann;
    }
    return out;
}

AnnotatedRelation to_relation(const GroupedResult &g, const Schema &key_schema)
{
    AnnotatedRelation out(key_schema, g.kind);
    RowId id = 0;
    for (const auto &[key, ann] : g.groups) out.add_row_unchecked(id++, key, ann);
    return out;
}

namespace {

/// γ_keys(R) as a relation with qualified key columns.
AnnotatedRelation aggregate_relation(const AnnotatedRelation &rel, const std::vector<std::string> &keys)
{
    std::vector<Attribute> attrs;
    for (const auto &k : keys) {
        auto i = rel.schema().index_of(k);
        attrs.push_back({rel.schema().qualified_name(i), rel.schema()[i].type});
    }
    return to_relation(aggregate(rel, keys), Schema("", std::move(attrs)));
}

AnnotatedRelation qualified_copy(const AnnotatedRelation &rel)
{
    AnnotatedRelation out(rel.schema().qualified(), rel.annotation_kind());
    for (const auto &row : rel.rows()) out.add_row_unchecked(row.id, row.values, row.ann);
    return out;
}

std::vector<std::pair<std::string, std::string>> zip(const std::vector<std::string> &l, const std::vector<std::string> &r)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i != l.size(); ++i) out.emplace_back(l[i], r[i]);
    return out;
}

void push_unique(std::vector<std::string> &v, const std::string &s)
{
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

/// An unmatched row's missing side holds a Null payload when the payload relation is on that side.
std::optional<Annotation> padding_for(bool side_has_payload, SemiringKind kind)
{
    return side_has_payload ? std::optional(Annotation::zero(kind)) : std::nullopt;
}

}

AnnotatedRelation join(const AnnotatedRelation &left, const AnnotatedRelation &right,
                       const std::vector<std::pair<std::string, std::string>> &on, JoinMode mode,
                       const std::optional<Annotation> &padding)
{
    auto lk = left.require_annotated(), rk = right.require_annotated();
    if (lk != rk)
        throw Error(errc::KindMismatch, "cannot join " + std::string(to_string(lk)) + " with " + std::string(to_string(rk)),
                    {{"left", std::string(to_string(lk))}, {"right", std::string(to_string(rk))}});

    std::vector<std::size_t> lpos, rpos;
    for (const auto &[l, r] : on) {
        auto li = left.schema().find(l), ri = right.schema().find(r);
        if (not li or not ri)
            throw Error(errc::BadJoinAttr, "cannot resolve join condition " + l + " = " + r, {{"left", l}, {"right", r}});
        bool lnum = is_numeric(left.schema()[*li].type), rnum = is_numeric(right.schema()[*ri].type);
        if (left.schema()[*li].type != right.schema()[*ri].type and not(lnum and rnum))
            throw Error(errc::BadJoinAttr, "join attributes " + l + " and " + r + " have incompatible types",
                        {{"left", l}, {"right", r}});
        lpos.push_back(*li);
        rpos.push_back(*ri);
    }

    auto ls = left.schema().qualified(), rs = right.schema().qualified();
    std::vector<Attribute> attrs = ls.attributes();
    attrs.insert(attrs.end(), rs.attributes().begin(), rs.attributes().end());
    AnnotatedRelation out(Schema("", std::move(attrs)), lk);

    std::unordered_map<Tuple, std::vector<std::size_t>, TupleHash> index;
    for (std::size_t i = 0; i != right.rows().size(); ++i) {
        auto key = right.project(right.rows()[i], rpos);
        if (not join_key_has_null(key)) index[std::move(key)].push_back(i);
    }

    const Tuple nulls(right.schema().size(), Value{});
    RowId id = 0;
    for (const auto &lrow : left.rows()) {
        auto key = left.project(lrow, lpos);
        const std::vector<std::size_t> *matches = nullptr;
        if (not join_key_has_null(key))
            if (auto it = index.find(key); it != index.end()) matches = &it->second;
        if (matches) {
            for (auto ri : *matches) {
                const auto &rrow = right.rows()[ri];
                Tuple values = lrow.values;
                values.insert(values.end(), rrow.values.begin(), rrow.values.end());
                out.add_row_unchecked(id++, std::move(values), sr_mul(lrow.ann, rrow.ann));
            }
        } else if (mode == JoinMode::LeftOuter) {
            Tuple values = lrow.values;
            values.insert(values.end(), nulls.begin(), nulls.end());
            out.add_row_unchecked(id++, std::move(values), padding ? sr_mul(lrow.ann, *padding) : lrow.ann);
        }
    }
    return out;
}

/*======================================================================================================================
 * Query evaluation
 *====================================================================================================================*/

namespace {

void require_weights(const QueryPlan &plan, const WeightMap &weights)
{
    std::vector<std::string> missing;
    for (const auto &t : plan.targets)
        if (not weights.count(t.relation)) missing.push_back(t.relation);
    if (not missing.empty()) {
        std::string list;
        for (const auto &m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(errc::MissingWeights, "no weights for weighing targets: " + list, {{"targets", missing}});
    }
}

AnnotatedRelation materialize(const QueryPlan &plan, const Traversal &steps, std::size_t count, const AnnotatedDatabase &adb)
{
    AnnotatedRelation current = qualified_copy(adb.db.at(plan.root));
    for (std::size_t i = 0; i != count; ++i) {
        const auto &step = steps[i];
        // a payload deeper on this branch is reached through the Null-padded key and padded there
        current = join(current, adb.db.at(step.child), zip(step.qualified_parent_attrs(), step.child_attrs),
                       JoinMode::LeftOuter, padding_for(step.child == plan.payload_relation, adb.kind));
    }
    return current;
}

/// Splits rows by the plan's selection and groups the selected ones.
GroupedResult group_and_partition(const AnnotatedRelation &rel, const QueryPlan &plan)
{
    const auto &q = plan.query;
    GroupedResult out;
    out.kind = rel.require_annotated();
    out.keys = q.group_by;
    auto key_pos = rel.positions(q.group_by);

    std::vector<std::pair<std::size_t, const Atom *>> atoms;
    if (q.selection) {
        for (const auto &a : q.selection->atoms) atoms.emplace_back(rel.schema().index_of(a.attribute), &a);
        out.not_selected_total = Annotation::zero(out.kind);
    }
    if (q.group_by.empty()) out.groups.emplace(Tuple{}, Annotation::zero(out.kind));

    for (const auto &row : rel.rows()) {
        bool selected = std::all_of(atoms.begin(), atoms.end(), [&](const auto &a) {
            return satisfies(row.values[a.first], a.second->op, a.second->literal);
        });
        if (not selected) {
            *out.not_selected_total += row.ann;
            continue;
        }
        auto key = rel.project(row, key_pos);
        auto it = out.groups.find(key);
        if (it == out.groups.end()) out.groups.emplace(std::move(key), row.ann);
        else it->second += row.ann;
    }
    return out;
}

}

AnnotatedDatabase weighed_database(const QueryPlan &plan, const Database &db, const WeightMap &weights)
{
    auto adb = annotate_for_metric(db, plan.query.base.metric);
    for (const auto &t : plan.targets) {
        auto it = weights.find(t.relation);
        if (it == weights.end()) continue;
        adb.db.replace(apply_weights(it->second, adb.db.at(t.relation)));
    }
    return adb;
}

WeightMap with_default_weights(const QueryPlan &plan, const Database &db, const WeightMap &weights)
{
    WeightMap out;
    for (const auto &t : plan.targets) {
        auto it = weights.find(t.relation);
        out.emplace(t.relation, it != weights.end() ? it->second
                                                    : build_weight_table(EqualWeighing{}, db.at(t.relation), t.join_key));
    }
    return out;
}

GroupedResult evaluate_base(const QueryPlan &plan, const Database &db)
{
    auto adb = annotate_for_metric(db, plan.query.base.metric);
    auto joined = materialize(plan, plan.base_subtree, plan.base_subtree.size(), adb);
    return aggregate(joined, {});
}

GroupedResult evaluate(const QueryPlan &plan, const Database &db, const WeightMap &weights)
{
    require_weights(plan, weights);
    auto adb = weighed_database(plan, db, weights);
    auto joined = materialize(plan, plan.subtree, plan.subtree.size(), adb);
    return group_and_partition(joined, plan);
}

GroupedResult pushdown_aggregate(const QueryPlan &plan, const Database &db, const WeightMap &weights)
{
    require_weights(plan, weights);
    auto adb = weighed_database(plan, db, weights);

    // attributes each relation must keep because the query groups or filters on them
    std::map<std::string, std::vector<std::string>> referenced;
    auto note = [&](const std::string &qualified) { push_unique(referenced[split_qualified(qualified).first], qualified); };
    for (const auto &g : plan.query.group_by) note(g);
    if (plan.query.selection)
        for (const auto &a : plan.query.selection->atoms) note(a.attribute);

    std::map<std::string, std::vector<const TraversalStep *>> children;
    for (const auto &step : plan.subtree) children[step.parent].push_back(&step);

    struct Reduced
    {
        AnnotatedRelation rel;
        std::vector<std::string> referenced; ///< referenced attributes of the subtree
        bool has_payload;
    };

    // the subtree below `node` aggregated onto (key towards parent) ∪ (referenced attributes of the subtree)
    std::function<Reduced(const std::string &, const TraversalStep *)> reduce =
        [&](const std::string &node, const TraversalStep *entering) {
            std::vector<std::string> local, below = referenced[node];
            bool has_payload = node == plan.payload_relation;
            if (entering)
                for (const auto &a : entering->qualified_child_attrs()) push_unique(local, a);
            for (const auto *c : children[node])
                for (const auto &a : c->qualified_parent_attrs()) push_unique(local, a);
            for (const auto &a : below) push_unique(local, a);
            AnnotatedRelation current = aggregate_relation(adb.db.at(node), local);

            for (const auto *c : children[node]) {
                auto sub = reduce(c->child, c);
                current = join(current, sub.rel, zip(c->qualified_parent_attrs(), c->qualified_child_attrs()),
                               JoinMode::LeftOuter, padding_for(sub.has_payload, adb.kind));
                for (const auto &a : sub.referenced) push_unique(below, a);
                has_payload = has_payload or sub.has_payload;
            }

            std::vector<std::string> keep;
            if (entering)
                for (const auto &a : entering->qualified_child_attrs()) push_unique(keep, a);
            for (const auto &a : below) push_unique(keep, a);
            return Reduced{aggregate_relation(current, keep), below, has_payload};
        };

    auto reduced = reduce(plan.root, nullptr).rel;
    return group_and_partition(reduced, plan);
}

/*======================================================================================================================
 * Nested views
 *====================================================================================================================*/

json NestedView::to_json() const
{
    json gs = json::array();
    for (const auto &g : groups) {
        json members_json = json::array();
        for (const auto &m : g.members)
            members_json.push_back({{"row_id", m.row_id}, {"values", tuple_to_json(m.values)},
                                    {"weight", m.weight.to_double()}, {"weight_exact", m.weight.to_string()}});
        gs.push_back({{"key", tuple_to_json(g.key)}, {"parent_value", scalar_json(g.parent_value)}, {"rows", members_json}});
    }
    return {{"frontier", frontier}, {"join_key", join_key}, {"parent", parent}, {"parent_key", parent_key},
            {"columns", columns}, {"groups", gs}, {"offset", offset}, {"total_groups", total_groups},
            {"end_of_data", end_of_data}};
}

NestedView partial_view(const QueryPlan &plan, const Database &db, const WeightMap &weights,
                        std::string_view frontier, std::size_t offset, std::size_t limit)
{
    if (limit == 0) throw Error(errc::RangeError, "page limit must be at least 1", {{"limit", limit}});
    auto step_it = std::find_if(plan.subtree.begin(), plan.subtree.end(),
                                [&](const TraversalStep &s) { return s.child == frontier; });
    if (step_it == plan.subtree.end())
        throw Error(errc::UnknownRelation, "'" + std::string(frontier) + "' is not joined below the base query",
                    {{"relation", std::string(frontier)}});
    const auto &step = *step_it;

    auto all_weights = with_default_weights(plan, db, weights);
    auto adb = weighed_database(plan, db, all_weights);
    auto prefix = materialize(plan, plan.subtree, static_cast<std::size_t>(step_it - plan.subtree.begin()), adb);
    auto parent_partials = aggregate(prefix, step.qualified_parent_attrs());

    const auto &rel = db.at(step.child);
    auto wit = all_weights.find(step.child);
    const WeightTable member_weights = wit != all_weights.end() ? wit->second : unit_weights(rel, step.child_attrs);

    NestedView view;
    view.frontier = step.child;
    view.join_key = step.child_attrs;
    view.parent = step.parent;
    view.parent_key = step.parent_attrs;
    for (const auto &a : rel.schema().attributes()) view.columns.push_back(a.name);
    view.offset = offset;

    auto groups = rel.group_rows(step.child_attrs);
    std::size_t index = 0;
    for (const auto &[key, members] : groups) {
        if (join_key_has_null(key)) continue;
        std::size_t i = index++;
        if (i < offset or i >= offset + limit) continue;
        NestedGroup g;
        g.key = key;
        g.parent_annotation = parent_partials.at(key);
        g.parent_value = parent_partials.groups.count(key) ? sr_finalize(g.parent_annotation) : std::nullopt;
        for (auto r : members) {
            const auto &row = rel.rows()[r];
            g.members.push_back({row.id, row.values, member_weights.at(row.id)});
        }
        view.groups.push_back(std::move(g));
    }
    view.total_groups = index;
    view.end_of_data = offset + limit >= view.total_groups;
    return view;
}

}
