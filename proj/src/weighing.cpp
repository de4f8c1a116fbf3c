#include <fanout/weighing.hpp>

#include <fanout/error.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fanout {

using nlohmann::json;

namespace {

template<class... Ts> struct overloaded : Ts... { using Ts::operator()...; };

Weight weight_from_json(const json &v)
{
    if (v.is_string()) return Weight::parse(v.get<std::string>());
    if (v.is_number()) return Weight::parse(v.dump());
    throw Error(errc::ParseError, "weight must be a number or a string, got " + v.dump());
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i)
        if (i == s.size() or s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    return out;
}

Pick pick_from_string(std::string_view s)
{
    if (s == "first") return Pick::First;
    if (s == "last") return Pick::Last;
    throw Error(errc::InvalidStrategy, "order pick must be 'first' or 'last', got '" + std::string(s) + "'");
}

void check_position(const PositionBased &p)
{
    if (p.first_w.value() + p.last_w.value() > 1)
        throw Error(errc::InvalidStrategy,
                    "position-based shares must satisfy first_w + last_w <= 1, got " + p.first_w.to_string() + " + " +
                        p.last_w.to_string(),
                    {{"first_w", p.first_w.to_string()}, {"last_w", p.last_w.to_string()}});
}

std::size_t strategy_attr(const AnnotatedRelation &rel, const std::string &attr, std::string_view strategy)
{
    auto idx = rel.schema().find(attr);
    if (not idx)
        throw Error(errc::MissingOrderAttr,
                    std::string(strategy) + " weighing: relation '" + rel.name() + "' has no attribute '" + attr + "'",
                    {{"relation", rel.name()}, {"attribute", attr}});
    return *idx;
}

/// Row indices of a group ordered by (attr, row id) ascending.  Null ordering values are rejected.
std::vector<std::size_t> ordered_group(const AnnotatedRelation &rel, std::vector<std::size_t> group, std::size_t attr,
                                       std::string_view strategy)
{
    for (auto i : group)
        if (is_null(rel.rows()[i].values[attr]))
            throw Error(errc::MissingOrderAttr,
                        std::string(strategy) + " weighing: row " + std::to_string(rel.rows()[i].id) + " of '" +
                            rel.name() + "' has no value for '" + rel.schema()[attr].name + "'",
                        {{"relation", rel.name()}, {"row_id", rel.rows()[i].id}, {"attribute", rel.schema()[attr].name}});
    std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
        const auto &ra = rel.rows()[a], &rb = rel.rows()[b];
        if (ra.values[attr] != rb.values[attr]) return ra.values[attr] < rb.values[attr];
        return ra.id < rb.id;
    });
    return group;
}

}

std::string strategy_name(const WeighingStrategy &s)
{
    return std::visit(overloaded{
        [](const EqualWeighing &) { return std::string("equal"); },
        [](const OrderBased &o) { return "order(" + o.attr + ", " + (o.pick == Pick::First ? "first" : "last") + ")"; },
        [](const PositionBased &p) {
            return "position(" + p.attr + ", " + p.first_w.to_string() + ", " + p.last_w.to_string() + ")";
        },
        [](const Proportional &p) { return "proportional(" + p.attr + ")"; },
        [](const Custom &c) { return "custom(" + std::to_string(c.entries.size()) + " rows)"; },
    }, s);
}

/*======================================================================================================================
 * Parsing
 *====================================================================================================================*/

WeighingStrategy parse_strategy(std::string_view spec)
{
    auto bad = [&](const std::string &why) {
        return Error(errc::InvalidStrategy, "bad strategy '" + std::string(spec) + "': " + why, {{"spec", std::string(spec)}});
    };
    if (spec.rfind("custom:", 0) == 0) return Custom{load_weight_file(std::string(spec.substr(7)))};

    auto parts = split(spec, ':');
    const auto &type = parts[0];
    if (type == "equal") {
        if (parts.size() != 1) throw bad("'equal' takes no parameters");
        return EqualWeighing{};
    }
    if (type == "order") {
        if (parts.size() < 2 or parts.size() > 3 or parts[1].empty()) throw bad("expected order:attr[:first|last]");
        return OrderBased{parts[1], parts.size() == 3 ? pick_from_string(parts[2]) : Pick::Last};
    }
    if (type == "position") {
        if (parts.size() != 4 or parts[1].empty()) throw bad("expected position:attr:first_w:last_w");
        PositionBased p{parts[1], Weight::parse(parts[2]), Weight::parse(parts[3])};
        check_position(p);
        return p;
    }
    if (type == "prop" or type == "proportional") {
        if (parts.size() != 2 or parts[1].empty()) throw bad("expected prop:attr");
        return Proportional{parts[1]};
    }
    throw bad("unknown strategy type '" + type + "'");
}

WeighingStrategy strategy_from_json(const json &doc)
{
    try {
        auto type = doc.at("type").get<std::string>();
        json params = doc.value("params", json::object());
        if (type == "equal") return EqualWeighing{};
        if (type == "order")
            return OrderBased{params.at("attr").get<std::string>(), pick_from_string(params.value("pick", std::string("last")))};
        if (type == "position") {
            PositionBased p{params.at("attr").get<std::string>(), weight_from_json(params.at("first_w")),
                            weight_from_json(params.at("last_w"))};
            check_position(p);
            return p;
        }
        if (type == "proportional" or type == "prop") return Proportional{params.at("attr").get<std::string>()};
        if (type == "custom") return Custom{weights_from_json(params.contains("weights") ? params["weights"] : params)};
        throw Error(errc::InvalidStrategy, "unknown strategy type '" + type + "'", {{"type", type}});
    } catch (const json::exception &e) {
        throw Error(errc::InvalidStrategy, std::string("malformed strategy: ") + e.what());
    }
}

json to_json(const WeighingStrategy &s)
{
    return std::visit(overloaded{
        [](const EqualWeighing &) { return json{{"type", "equal"}, {"params", json::object()}}; },
        [](const OrderBased &o) {
            return json{{"type", "order"}, {"params", {{"attr", o.attr}, {"pick", o.pick == Pick::First ? "first" : "last"}}}};
        },
        [](const PositionBased &p) {
            return json{{"type", "position"},
                        {"params", {{"attr", p.attr}, {"first_w", p.first_w.to_string()}, {"last_w", p.last_w.to_string()}}}};
        },
        [](const Proportional &p) { return json{{"type", "proportional"}, {"params", {{"attr", p.attr}}}}; },
        [](const Custom &c) {
            json w = json::object();
            for (const auto &[id, weight] : c.entries) w[std::to_string(id)] = weight.to_string();
            return json{{"type", "custom"}, {"params", {{"weights", w}}}};
        },
    }, s);
}

std::map<RowId, Weight> read_weight_csv(std::istream &in, std::string_view source)
{
    auto records = parse_csv_records(in, source);
    if (records.empty() or records[0].size() != 2 or records[0][0].text != "row_id" or records[0][1].text != "weight")
        throw Error(errc::ParseError, std::string(source) + ": weight tables need the header 'row_id,weight'");
    std::map<RowId, Weight> out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto &rec = records[r];
        if (rec.size() == 1 and rec[0].text.empty()) continue;
        if (rec.size() != 2)
            throw Error(errc::ParseError, std::string(source) + ": line " + std::to_string(r + 1) + " needs 2 cells");
        RowId id;
        try {
            id = std::get<std::int64_t>(parse_value(rec[0].text, ValueType::Int));
        } catch (const Error &) {
            throw Error(errc::ParseError, std::string(source) + ": bad row_id '" + rec[0].text + "'", {{"line", r + 1}});
        }
        if (not out.emplace(id, Weight::parse(rec[1].text)).second)
            throw Error(errc::ParseError, std::string(source) + ": duplicate row_id " + std::to_string(id), {{"row_id", id}});
    }
    return out;
}

std::map<RowId, Weight> weights_from_json(const json &doc)
{
    std::map<RowId, Weight> out;
    const json &w = doc.is_object() and doc.contains("weights") ? doc["weights"] : doc;
    auto insert = [&](RowId id, Weight weight) {
        if (not out.emplace(id, std::move(weight)).second)
            throw Error(errc::ParseError, "duplicate row_id " + std::to_string(id), {{"row_id", id}});
    };
    try {
        if (w.is_object()) {
            for (const auto &[k, v] : w.items())
                insert(std::get<std::int64_t>(parse_value(k, ValueType::Int)), weight_from_json(v));
        } else if (w.is_array()) {
            for (const auto &e : w) insert(e.at("row_id").get<RowId>(), weight_from_json(e.at("weight")));
        } else {
            throw Error(errc::ParseError, "weights must be an object or a list");
        }
    } catch (const json::exception &e) {
        throw Error(errc::ParseError, std::string("malformed weight table: ") + e.what());
    } catch (const Error &e) {
        throw Error(errc::ParseError, std::string("malformed weight table: ") + e.what());
    }
    return out;
}

std::map<RowId, Weight> load_weight_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (not in) throw Error(errc::IoError, "cannot open weight table '" + path + "'", {{"path", path}});
    if (path.size() >= 5 and path.substr(path.size() - 5) == ".json") {
        try {
            return weights_from_json(json::parse(in));
        } catch (const json::parse_error &e) {
            throw Error(errc::ParseError, path + ": " + e.what());
        }
    }
    return read_weight_csv(in, path);
}

/*======================================================================================================================
 * WeightTable
 *====================================================================================================================*/

const Weight & WeightTable::at(RowId id) const
{
    auto it = entries.find(id);
    if (it == entries.end())
        throw Error(errc::MissingRowId, "weight table for '" + relation + "' has no row " + std::to_string(id),
                    {{"relation", relation}, {"row_id", id}});
    return it->second;
}

json WeightTable::to_json() const
{
    json rows = json::array();
    for (const auto &[id, w] : entries) rows.push_back({{"row_id", id}, {"weight", w.to_double()}, {"exact", w.to_string()}});
    return {{"relation", relation}, {"join_key", join_key}, {"entries", rows}};
}

WeightTable unit_weights(const AnnotatedRelation &rel, const std::vector<std::string> &join_key)
{
    WeightTable wt{rel.name(), join_key, {}};
    for (const auto &row : rel.rows()) wt.entries.emplace(row.id, Weight::one());
    return wt;
}

WeightTable build_weight_table(const WeighingStrategy &strategy, const AnnotatedRelation &rel,
                               const std::vector<std::string> &join_key)
{
    WeightTable wt{rel.name(), join_key, {}};
    const auto groups = rel.group_rows(join_key);
    const auto &rows = rel.rows();

    std::visit(overloaded{
        [&](const EqualWeighing &) {
            for (const auto &[key, members] : groups)
                for (auto i : members) wt.entries.emplace(rows[i].id, Weight(1, static_cast<long>(members.size())));
        },
        [&](const OrderBased &o) {
            auto attr = strategy_attr(rel, o.attr, "order-based");
            for (const auto &[key, members] : groups) {
                auto ordered = ordered_group(rel, members, attr, "order-based");
                auto chosen = o.pick == Pick::First ? ordered.front() : ordered.back();
                for (auto i : ordered) wt.entries.emplace(rows[i].id, Weight(i == chosen ? 1 : 0));
            }
        },
        [&](const PositionBased &p) {
            check_position(p);
            auto attr = strategy_attr(rel, p.attr, "position-based");
            const Rational middle = 1 - p.first_w.value() - p.last_w.value();
            for (const auto &[key, members] : groups) {
                auto ordered = ordered_group(rel, members, attr, "position-based");
                const auto n = ordered.size();
                if (n == 1) {
                    wt.entries.emplace(rows[ordered[0]].id, Weight::one());
                } else if (n == 2) {
                    // the middle share is split between the two endpoints
                    wt.entries.emplace(rows[ordered[0]].id, Weight(p.first_w.value() + middle / 2));
                    wt.entries.emplace(rows[ordered[1]].id, Weight(p.last_w.value() + middle / 2));
                } else {
                    Weight inner(middle / static_cast<long>(n - 2));
                    for (std::size_t k = 0; k != n; ++k)
                        wt.entries.emplace(rows[ordered[k]].id, k == 0 ? p.first_w : k + 1 == n ? p.last_w : inner);
                }
            }
        },
        [&](const Proportional &p) {
            auto attr = strategy_attr(rel, p.attr, "proportional");
            if (not is_numeric(rel.schema()[attr].type))
                throw Error(errc::InvalidStrategy, "proportional weighing needs a numeric attribute, '" + p.attr + "' is " +
                                                       std::string(to_string(rel.schema()[attr].type)),
                            {{"relation", rel.name()}, {"attribute", p.attr}});
            for (const auto &[key, members] : groups) {
                Rational total = 0;
                std::vector<Rational> values;
                for (auto i : members) {
                    auto v = exact_numeric_value(rows[i].values[attr]);
                    if (not v or *v <= 0)
                        throw Error(errc::NonPositiveProportionalValue,
                                    "proportional weighing: row " + std::to_string(rows[i].id) + " of '" + rel.name() +
                                        "' has " + p.attr + " = " + format_value(rows[i].values[attr]),
                                    {{"relation", rel.name()}, {"row_id", rows[i].id}, {"attribute", p.attr},
                                     {"value", format_value(rows[i].values[attr])}});
                    total += *v;
                    values.push_back(*v);
                }
                for (std::size_t k = 0; k != members.size(); ++k)
                    wt.entries.emplace(rows[members[k]].id, Weight(values[k] / total));
            }
        },
        [&](const Custom &c) {
            std::vector<RowId> missing, unknown;
            for (const auto &row : rows)
                if (not c.entries.count(row.id)) missing.push_back(row.id);
            for (const auto &[id, _] : c.entries)
                if (std::none_of(rows.begin(), rows.end(), [&](const Row &r) { return r.id == id; })) unknown.push_back(id);
            if (not missing.empty() or not unknown.empty())
                throw Error(errc::MissingRowId,
                            "custom weight table does not match the rows of '" + rel.name() + "' (" +
                                std::to_string(missing.size()) + " missing, " + std::to_string(unknown.size()) + " unknown)",
                            {{"relation", rel.name()}, {"missing", missing}, {"unknown", unknown}});
            wt.entries = c.entries;
        },
    }, strategy);
    return wt;
}

/*======================================================================================================================
 * Validation
 *====================================================================================================================*/

json WeightValidation::to_json() const
{
    json v = json::array();
    for (const auto &g : violations) {
        v.push_back({{"key", tuple_to_json(g.key)}, {"sum", to_double(g.sum)}, {"exact", rational_to_string(g.sum)}});
    }
    return {{"ok", ok}, {"violations", v}, {"missing_rows", missing_rows}, {"unknown_rows", unknown_rows},
            {"null_key_rows", null_key_rows}, {"above_one_rows", above_one_rows}};
}

std::string WeightValidation::summary() const
{
    std::ostringstream os;
    if (ok) os << "weights valid";
    else os << "weights invalid";
    for (const auto &g : violations) {
        os << "; group (";
        for (std::size_t i = 0; i != g.key.size(); ++i) os << (i ? ", " : "") << format_value(g.key[i]);
        os << ") sums to " << to_double(g.sum);
    }
    if (not missing_rows.empty()) os << "; " << missing_rows.size() << " rows without weight";
    if (not unknown_rows.empty()) os << "; " << unknown_rows.size() << " unknown row ids";
    if (not null_key_rows.empty()) os << "; note: " << null_key_rows.size() << " rows with NULL join key never join";
    if (not above_one_rows.empty()) os << "; note: " << above_one_rows.size() << " weights exceed 1";
    return os.str();
}

WeightValidation validate(const WeightTable &wt, const AnnotatedRelation &rel, double tolerance)
{
    WeightValidation report;
    const auto &rows = rel.rows();
    std::map<RowId, bool> known;
    for (const auto &r : rows) known[r.id] = true;
    for (const auto &[id, w] : wt.entries) {
        if (not known.count(id)) report.unknown_rows.push_back(id);
        if (w.value() > 1) report.above_one_rows.push_back(id);
    }

    for (const auto &[key, members] : rel.group_rows(wt.join_key)) {
        Rational sum = 0;
        for (auto i : members) {
            auto it = wt.entries.find(rows[i].id);
            if (it == wt.entries.end()) report.missing_rows.push_back(rows[i].id);
            else sum += it->second.value();
        }
        if (join_key_has_null(key)) {
            for (auto i : members) report.null_key_rows.push_back(rows[i].id);
            continue;
        }
        if (std::abs(to_double(sum - 1)) > tolerance) report.violations.push_back({key, sum});
    }
    report.ok = report.violations.empty() and report.missing_rows.empty() and report.unknown_rows.empty();
    return report;
}

AnnotatedRelation apply_weights(const WeightTable &wt, const AnnotatedRelation &rel)
{
    auto kind = rel.require_annotated();
    if (not is_scalable(kind))
        throw Error(errc::UnsupportedScale, "cannot weigh '" + rel.name() + "': " + std::string(to_string(kind)) +
                                                " annotations are not scalable",
                    {{"relation", rel.name()}, {"kind", std::string(to_string(kind))}});
    return rel.reannotated(kind, [&](const Row &row) { return sr_scale(row.ann, wt.at(row.id)); });
}

}
