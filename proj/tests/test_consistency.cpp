#include <doctest.h>

#include "fixtures.hpp"

#include <fanout/consistency.hpp>

using namespace fanout;
using fanout::testing::query;

namespace {

Value T(const char *s) { return Value(std::string(s)); }

WeightMap strategy_on(const QueryPlan &plan, const Database &db, const WeighingStrategy &s)
{
    WeightMap w;
    for (const auto &t : plan.targets) w.emplace(t.relation, build_weight_table(s, db.at(t.relation), t.join_key));
    return w;
}

}

TEST_CASE("Q3 checks")
{
    auto ws = fanout::testing::retail();
    auto plan = resolve(query(ws, "total_revenue", {"A.source"}), ws.graph, ws.db);

    SUBCASE("equal weights are consistent")
    {
        auto r = check(plan, ws.db, strategy_on(plan, ws.db, EqualWeighing{}));
        CHECK(r.verdict == Verdict::Consistent);
        CHECK(r.base_total == Annotation::sum(70));
        CHECK(r.query_total == Annotation::sum(70));
        CHECK(r.query_result.value({T("Google")}) == doctest::Approx(60));
        CHECK(r.per_relation_fanout.empty());
        CHECK_FALSE(r.not_selected_total);
    }
    SUBCASE("unweighed V is inconsistent and cites uid 1")
    {
        auto r = check(plan, ws.db, {});
        CHECK(r.verdict == Verdict::Inconsistent);
        CHECK(r.base_total == Annotation::sum(70));
        CHECK(r.query_total == Annotation::sum(90));
        REQUIRE(r.per_relation_fanout.size() == 1);
        const auto &f = r.per_relation_fanout[0];
        CHECK(f.relation == "V");
        CHECK(f.join_key == std::vector<std::string>{"uid"});
        CHECK(f.violating_groups == 1);
        REQUIRE(f.sample.size() == 1);
        CHECK(f.sample[0].key == Tuple{Value(std::int64_t{1})});
        CHECK(f.sample[0].partial == Rational(2));

        auto json = r.to_json();
        CHECK(json["verdict"] == "Inconsistent");
        CHECK(json["base_total"] == 70.0);
        CHECK(json["query_total"] == 90.0);
        CHECK(json["per_relation_fanout"][0]["relation"] == "V");
        auto text = r.render_text();
        CHECK(text.find("Inconsistent") != std::string::npos);
        CHECK(text.find("90") != std::string::npos);
    }
    SUBCASE("order-based weights")
    {
        auto w = strategy_on(plan, ws.db, OrderBased{"aid", Pick::Last});
        CHECK(diagnose(plan, ws.db, w).empty());
        CHECK(check(plan, ws.db, w).verdict == Verdict::Consistent);
    }
    SUBCASE("invalid custom weights are caught by the total")
    {
        WeightMap w{{"V", build_weight_table(Custom{{{0, Weight::parse("0.7")}, {1, Weight::parse("0.7")}, {2, Weight(1)}}},
                                             ws.db.at("V"), {"uid"})}};
        auto r = check(plan, ws.db, w);
        CHECK(r.verdict == Verdict::Inconsistent);
        CHECK(r.query_total == Annotation::sum(78));
        REQUIRE(r.per_relation_fanout.size() == 1);
        CHECK(r.per_relation_fanout[0].sample[0].partial == Rational(7, 5));
    }
    SUBCASE("tolerance")
    {
        WeightMap w{{"V", build_weight_table(Custom{{{0, Weight(Rational(1, 2) + Rational(1, 10000000))},
                                                     {1, Weight(1, 2)}, {2, Weight(1)}}},
                                             ws.db.at("V"), {"uid"})}};
        CHECK(check(plan, ws.db, w).verdict == Verdict::Inconsistent);
        CHECK(check(plan, ws.db, w, 1e-6).verdict == Verdict::Consistent);
    }
}

TEST_CASE("Q1 denormalized ad cost")
{
    auto ws = fanout::testing::retail();
    auto plan = resolve(query(ws, "total_ad_cost", {}, {"V", "U"}), ws.graph, ws.db);
    auto r = check(plan, ws.db, {});
    CHECK(r.base_total == Annotation::sum(1100));
    CHECK(r.query_total == Annotation::sum(1600));
    CHECK(r.verdict == Verdict::Inconsistent);
    REQUIRE(r.per_relation_fanout.size() == 1);
    CHECK(r.per_relation_fanout[0].relation == "V");
    CHECK(r.per_relation_fanout[0].join_key == std::vector<std::string>{"aid"});
    CHECK(r.per_relation_fanout[0].sample[0].partial == Rational(2));

    auto fixed = check(plan, ws.db, strategy_on(plan, ws.db, EqualWeighing{}));
    CHECK(fixed.verdict == Verdict::Consistent);
    CHECK(fixed.query_total == Annotation::sum(1100));
}

TEST_CASE("Q2 selection")
{
    auto ws = fanout::testing::retail();
    auto q = query(ws, "total_revenue");
    q.selection = Predicate{{parse_atom("I.price > 25")}};
    auto r = check(resolve(q, ws.graph, ws.db), ws.db, {});
    CHECK(r.verdict == Verdict::Consistent);
    CHECK(r.query_total == Annotation::sum(30));
    REQUIRE(r.not_selected_total);
    CHECK(*r.not_selected_total == Annotation::sum(40));
    CHECK(r.combined_total() == Annotation::sum(70));
    CHECK(r.to_json()["not_selected_total"] == 40.0);
}

TEST_CASE("Count is exact and Avg compares the pair")
{
    auto ws = fanout::testing::retail();
    auto count_plan = resolve(query(ws, "purchase_count", {"A.source"}), ws.graph, ws.db);
    auto equal = strategy_on(count_plan, ws.db, EqualWeighing{});
    auto c = check(count_plan, ws.db, equal);
    CHECK(c.verdict == Verdict::Consistent);
    CHECK(c.query_total == Annotation::count(4));
    CHECK(c.query_result.at({T("Google")}) == Annotation::count(Rational(7, 2)));

    WeightMap off{{"V", build_weight_table(Custom{{{0, Weight(Rational(1, 2) + Rational(1, 1000000000000LL))},
                                                   {1, Weight(1, 2)}, {2, Weight(1)}}},
                                           ws.db.at("V"), {"uid"})}};
    CHECK(check(count_plan, ws.db, off).verdict == Verdict::Inconsistent);

    // Unweighed AVG: both count and sum are inflated, so the ratio alone could not detect it.
    auto avg_plan = resolve(query(ws, "avg_price", {"A.source"}), ws.graph, ws.db);
    auto a = check(avg_plan, ws.db, {});
    CHECK(a.verdict == Verdict::Inconsistent);
    CHECK(a.base_total == Annotation::avg(3, 70));
    CHECK(a.query_total == Annotation::avg(4, 90));
    auto json = a.to_json();
    CHECK(json.contains("base_pair"));
    CHECK(check(avg_plan, ws.db, strategy_on(avg_plan, ws.db, EqualWeighing{})).verdict == Verdict::Consistent);

    // Tropical metrics are idempotent under fanout.
    auto max_plan = resolve(query(ws, "max_price", {"A.source"}), ws.graph, ws.db);
    CHECK(check(max_plan, ws.db, {}).verdict == Verdict::Consistent);
}

TEST_CASE("Null payloads are counted in the report")
{
    auto ws = fanout::testing::retail();
    auto r = check(resolve(query(ws, "total_size"), ws.graph, ws.db), ws.db, {});
    CHECK(r.null_payload_count == 1);
    CHECK(r.base_total == Annotation::sum(2));
}

TEST_CASE("Table 5 gender bias")
{
    auto ws = fanout::testing::bias();
    auto plan = resolve(query(ws, "user_count", {"U.gender"}, {"V", "H"}), ws.graph, ws.db);
    auto raw = check(plan, ws.db, {});
    CHECK(raw.query_result.at({T("female")}) == Annotation::count(6));
    CHECK(raw.query_result.at({T("male")}) == Annotation::count(1));
    CHECK(raw.verdict == Verdict::Inconsistent);
    CHECK(raw.base_total == Annotation::count(2));

    std::set<std::string> cited;
    for (const auto &f : raw.per_relation_fanout) cited.insert(f.relation);
    CHECK(cited == std::set<std::string>{"V", "H"});

    auto fixed = check(plan, ws.db, strategy_on(plan, ws.db, EqualWeighing{}));
    CHECK(fixed.verdict == Verdict::Consistent);
    CHECK(fixed.query_result.at({T("female")}) == Annotation::count(1));
    CHECK(fixed.query_result.at({T("male")}) == Annotation::count(1));
}

TEST_CASE("diagnose keeps the worst groups")
{
    // 15 groups with fanouts 2..16; the sample keeps the 10 largest.
    AnnotatedRelation base(Schema("B", {{"k", ValueType::Int}}));
    AnnotatedRelation fan(Schema("F", {{"k", ValueType::Int}}));
    RowId id = 0;
    for (int k = 0; k < 15; ++k) {
        base.add_row(k, {Value(std::int64_t{k})});
        for (int j = 0; j < k + 2; ++j) fan.add_row(id++, {Value(std::int64_t{k})});
    }
    Database db;
    db.add(base);
    db.add(fan);
    JoinGraph g;
    g.nodes = {"B", "F"};
    g.edges.push_back(JoinEdge{"B", "F", {{"k", "k"}}, std::nullopt});
    g = validate(g, db);
    ExploratoryQuery q;
    q.base = BaseQuery{Metric{"n", Aggregate::Count, "*"}, {"B"}};
    q.joins = {"F"};
    auto plan = resolve(q, g, db);
    auto d = diagnose(plan, db, {});
    REQUIRE(d.size() == 1);
    CHECK(d[0].violating_groups == 15);
    REQUIRE(d[0].sample.size() == fanout_top_k);
    CHECK(d[0].sample[0].partial == Rational(16));
    CHECK(d[0].sample[9].partial == Rational(7));
}
