#include <fanout/join_graph.hpp>

#include <fanout/error.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <unordered_set>

namespace fanout {

using nlohmann::json;

std::string_view to_string(Cardinality c)
{
    switch (c) {
        case Cardinality::OneToOne: return "one_to_one";
        case Cardinality::OneToMany: return "one_to_many";
        case Cardinality::ManyToOne: return "many_to_one";
        case Cardinality::ManyToMany: return "many_to_many";
    }
    return "?";
}

Cardinality cardinality_from_string(std::string_view s)
{
    std::string norm;
    for (char c : s)
        if (c != '_' and c != '-' and c != ' ') norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (norm == "onetoone" or norm == "1:1") return Cardinality::OneToOne;
    if (norm == "onetomany" or norm == "1:n") return Cardinality::OneToMany;
    if (norm == "manytoone" or norm == "n:1") return Cardinality::ManyToOne;
    if (norm == "manytomany" or norm == "n:m") return Cardinality::ManyToMany;
    throw Error(errc::ParseError, "unknown cardinality '" + std::string(s) + "'");
}

bool left_is_many(Cardinality c) { return c == Cardinality::ManyToOne or c == Cardinality::ManyToMany; }
bool right_is_many(Cardinality c) { return c == Cardinality::OneToMany or c == Cardinality::ManyToMany; }

std::vector<std::string> JoinEdge::attrs_of(std::string_view rel) const
{
    std::vector<std::string> out;
    for (const auto &[l, r] : on) out.push_back(rel == left ? l : r);
    return out;
}

bool JoinEdge::is_many_side(std::string_view rel) const
{
    // an unresolved edge is treated as many on both sides
    if (not cardinality) return true;
    return rel == left ? left_is_many(*cardinality) : right_is_many(*cardinality);
}

/*======================================================================================================================
 * JSON
 *====================================================================================================================*/

JoinGraph JoinGraph::from_json(const json &doc)
{
    JoinGraph g;
    try {
        for (const auto &r : doc.at("relations")) g.nodes.insert(r.is_string() ? r.get<std::string>() : r.at("name").get<std::string>());
        for (const auto &e : doc.value("edges", json::array())) {
            JoinEdge edge;
            edge.left = e.at("left").get<std::string>();
            edge.right = e.at("right").get<std::string>();
            for (const auto &pair : e.at("on")) {
                if (pair.is_string()) {
                    auto attr = pair.get<std::string>();
                    edge.on.emplace_back(attr, attr);
                } else {
                    edge.on.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
                }
            }
            if (e.contains("cardinality") and not e["cardinality"].is_null())
                edge.cardinality = cardinality_from_string(e["cardinality"].get<std::string>());
            g.edges.push_back(std::move(edge));
        }
        for (const auto &f : doc.value("fact_tables", json::array())) g.fact_tables.push_back(f.get<std::string>());
    } catch (const json::exception &e) {
        throw Error(errc::ParseError, std::string("malformed join graph: ") + e.what());
    }
    return g;
}

json JoinGraph::to_json() const
{
    json edges_json = json::array();
    for (const auto &e : edges) {
        json on = json::array();
        for (const auto &[l, r] : e.on) on.push_back({l, r});
        json je = {{"left", e.left}, {"right", e.right}, {"on", on}};
        je["cardinality"] = e.cardinality ? json(std::string(to_string(*e.cardinality))) : json(nullptr);
        edges_json.push_back(std::move(je));
    }
    return {{"relations", nodes}, {"edges", edges_json}, {"fact_tables", fact_tables}};
}

std::vector<std::size_t> JoinGraph::incident_edges(std::string_view rel) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i != edges.size(); ++i)
        if (edges[i].touches(rel)) out.push_back(i);
    return out;
}

/*======================================================================================================================
 * Validation
 *====================================================================================================================*/

namespace {

struct DisjointSets
{
    std::map<std::string, std::string> parent;

    std::string find(const std::string &x) {
        auto &p = parent[x];
        if (p.empty() or p == x) return p = x;
        return p = find(p);
    }
    bool unite(const std::string &a, const std::string &b) {
        auto ra = find(a), rb = find(b);
        if (ra == rb) return false;
        parent[ra] = rb;
        return true;
    }
};

/// Path between two nodes over the given (acyclic) edges, both endpoints included.
std::vector<std::string> forest_path(const std::vector<const JoinEdge *> &edges, const std::string &from,
                                     const std::string &to)
{
    std::map<std::string, std::string> came_from{{from, from}};
    std::vector<std::string> frontier{from};
    while (not frontier.empty()) {
        std::vector<std::string> next;
        for (const auto &n : frontier)
            for (const auto *e : edges)
                if (e->touches(n) and not came_from.count(e->other(n))) {
                    came_from[e->other(n)] = n;
                    next.push_back(e->other(n));
                }
        frontier = std::move(next);
    }
    std::vector<std::string> path;
    if (not came_from.count(to)) return path;
    for (std::string n = to; ; n = came_from[n]) {
        path.push_back(n);
        if (n == from) break;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

bool side_is_unique(const AnnotatedRelation &rel, const std::vector<std::string> &attrs)
{
    for (const auto &[key, rows] : rel.group_rows(attrs))
        if (not join_key_has_null(key) and rows.size() > 1) return false;
    return true;
}

}

Cardinality infer_cardinality(const JoinEdge &edge, const Database &db)
{
    const auto &l = db.at(edge.left);
    const auto &r = db.at(edge.right);
    bool left_one = side_is_unique(l, edge.attrs_of(edge.left));
    bool right_one = side_is_unique(r, edge.attrs_of(edge.right));
    Cardinality observed = left_one ? (right_one ? Cardinality::OneToOne : Cardinality::OneToMany)
                                    : (right_one ? Cardinality::ManyToOne : Cardinality::ManyToMany);
    if (edge.cardinality) {
        bool contradicts = (not left_is_many(*edge.cardinality) and not left_one) or
                           (not right_is_many(*edge.cardinality) and not right_one);
        if (contradicts)
            throw Error(errc::CardinalityMismatch,
                        "edge " + edge.left + "-" + edge.right + " declared " + std::string(to_string(*edge.cardinality)) +
                            " but data is " + std::string(to_string(observed)),
                        {{"left", edge.left},
                         {"right", edge.right},
                         {"declared", std::string(to_string(*edge.cardinality))},
                         {"observed", std::string(to_string(observed))}});
    }
    return observed;
}

JoinGraph validate(JoinGraph graph, const Database &db)
{
    for (const auto &n : graph.nodes) db.at(n);
    for (const auto &f : graph.fact_tables)
        if (not graph.nodes.count(f))
            throw Error(errc::UnknownRelation, "fact table '" + f + "' is not in the graph", {{"relation", f}});

    for (const auto &e : graph.edges) {
        for (const auto *side : {&e.left, &e.right})
            if (not graph.nodes.count(*side))
                throw Error(errc::UnknownRelation, "edge references unknown relation '" + *side + "'",
                            {{"relation", *side}});
        if (e.on.empty())
            throw Error(errc::BadJoinAttr, "edge " + e.left + "-" + e.right + " has no join attributes",
                        {{"left", e.left}, {"right", e.right}});
        const auto &ls = db.at(e.left).schema();
        const auto &rs = db.at(e.right).schema();
        for (const auto &[la, ra] : e.on) {
            auto li = ls.find(la), ri = rs.find(ra);
            if (not li or not ri)
                throw Error(errc::BadJoinAttr,
                            "edge " + e.left + "-" + e.right + ": cannot resolve " + e.left + "." + la + " = " +
                                e.right + "." + ra,
                            {{"left", e.left + "." + la}, {"right", e.right + "." + ra}});
            if (ls[*li].type != rs[*ri].type)
                throw Error(errc::BadJoinAttr,
                            "edge " + e.left + "-" + e.right + ": " + la + " is " + std::string(to_string(ls[*li].type)) +
                                " but " + ra + " is " + std::string(to_string(rs[*ri].type)),
                            {{"left", e.left + "." + la}, {"right", e.right + "." + ra}});
        }
    }

    DisjointSets sets;
    for (const auto &n : graph.nodes) sets.find(n);
    std::vector<const JoinEdge *> forest;
    for (const auto &e : graph.edges) {
        if (not sets.unite(e.left, e.right)) {
            auto cycle = forest_path(forest, e.left, e.right);
            if (cycle.empty()) cycle = {e.left};
            std::string text;
            for (const auto &c : cycle) text += (text.empty() ? "" : ", ") + c;
            throw Error(errc::CycleDetected, "join graph has a cycle through {" + text + "}", {{"cycle", cycle}});
        }
        forest.push_back(&e);
    }

    std::map<std::string, std::vector<std::string>> components;
    for (const auto &n : graph.nodes) components[sets.find(n)].push_back(n);
    if (components.size() > 1) {
        json comps = json::array();
        for (const auto &[_, members] : components) comps.push_back(members);
        throw Error(errc::Disconnected, "join graph has " + std::to_string(components.size()) + " components",
                    {{"components", comps}});
    }

    for (auto &e : graph.edges) {
        Cardinality observed = infer_cardinality(e, db);
        if (not e.cardinality) e.cardinality = observed;
    }
    return graph;
}

/*======================================================================================================================
 * Planning
 *====================================================================================================================*/

std::vector<std::string> TraversalStep::qualified_parent_attrs() const
{
    std::vector<std::string> out;
    for (const auto &a : parent_attrs) out.push_back(parent + "." + a);
    return out;
}

std::vector<std::string> TraversalStep::qualified_child_attrs() const
{
    std::vector<std::string> out;
    for (const auto &a : child_attrs) out.push_back(child + "." + a);
    return out;
}

Traversal steiner_subtree(const JoinGraph &graph, const std::set<std::string> &required,
                          const std::vector<std::string> &roots)
{
    std::set<std::string> wanted(required.begin(), required.end());
    wanted.insert(roots.begin(), roots.end());
    for (const auto &n : wanted)
        if (not graph.nodes.count(n))
            throw Error(errc::UnknownRelation, "unknown relation '" + n + "'", {{"relation", n}});
    if (wanted.empty()) return {};

    const std::string root = roots.empty() ? *wanted.begin() : roots.front();
    const std::set<std::string> root_set = roots.empty() ? std::set<std::string>{root}
                                                         : std::set<std::string>(roots.begin(), roots.end());

    // neighbors sorted by name: (neighbor, edge index)
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> adj;
    for (std::size_t i = 0; i != graph.edges.size(); ++i) {
        const auto &e = graph.edges[i];
        adj[e.left].emplace_back(e.right, i);
        adj[e.right].emplace_back(e.left, i);
    }
    for (auto &[_, ns] : adj) std::sort(ns.begin(), ns.end());

    // keep a node iff its subtree (rooted at `root`) contains a wanted node
    std::set<std::string> keep, seen;
    std::function<bool(const std::string &)> mark = [&](const std::string &n) -> bool {
        seen.insert(n);
        bool any = wanted.count(n) > 0;
        for (const auto &[nb, _] : adj[n])
            if (not seen.count(nb) and mark(nb)) any = true;
        if (any) keep.insert(n);
        return any;
    };
    mark(root);
    for (const auto &n : wanted)
        if (not keep.count(n))
            throw Error(errc::Disconnected, "relation '" + n + "' is not reachable from '" + root + "'",
                        {{"relation", n}, {"root", root}});

    Traversal order;
    std::set<std::string> visited{root};
    auto make_step = [&](const std::string &parent, const std::string &child, std::size_t ei) {
        const auto &e = graph.edges[ei];
        return TraversalStep{ei, parent, child, e.attrs_of(parent), e.attrs_of(child), e.is_many_side(child)};
    };

    std::vector<std::string> root_visit{root};
    std::function<void(const std::string &)> walk_roots = [&](const std::string &n) {
        for (const auto &[nb, ei] : adj[n]) {
            if (visited.count(nb) or not keep.count(nb) or not root_set.count(nb)) continue;
            visited.insert(nb);
            order.push_back(make_step(n, nb, ei));
            root_visit.push_back(nb);
            walk_roots(nb);
        }
    };
    walk_roots(root);

    std::function<void(const std::string &)> walk = [&](const std::string &n) {
        for (const auto &[nb, ei] : adj[n]) {
            if (visited.count(nb) or not keep.count(nb)) continue;
            visited.insert(nb);
            order.push_back(make_step(n, nb, ei));
            walk(nb);
        }
    };
    for (const auto &r : root_visit) walk(r);
    return order;
}

std::vector<WeighingTarget> weighing_targets(const JoinGraph &, const std::set<std::string> &base,
                                             const Traversal &subtree)
{
    std::vector<WeighingTarget> out;
    for (const auto &step : subtree) {
        if (base.count(step.child) or not step.child_is_many) continue;
        out.push_back(WeighingTarget{step.child, step.child_attrs, step.parent, step.parent_attrs});
    }
    return out;
}

}
