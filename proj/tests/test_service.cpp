#include <doctest.h>

#include "fixtures.hpp"

#include <fanout/service.hpp>

#include <httplib.h>

#include <filesystem>
#include <thread>

using namespace fanout;
using fanout::testing::error_code;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

const json equal = {{"type", "equal"}};
const json last_by_aid = {{"type", "order"}, {"params", {{"attr", "aid"}, {"pick", "last"}}}};
const json bad_custom = {{"type", "custom"}, {"params", {{"weights", {{"0", 0.7}, {"1", 0.7}, {"2", 1}}}}}};

json q3(const std::string &graph_id)
{
    return {{"graph_id", graph_id}, {"query", {{"metric", "total_revenue"}, {"group_by", {"A.source"}}}}};
}

/// value of the group keyed by `label` in a serialized GroupedResult
json group_value(const json &result, const std::string &label)
{
    for (const auto &row : result["rows"])
        if (row["key"] == json::array({label})) return row["value"];
    return nullptr;
}

fs::path scratch(const std::string &name)
{
    auto dir = fs::temp_directory_path() / ("fanout_service_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}

TEST_CASE("session workflow")
{
    Service svc;
    auto gid = svc.add_graph(fanout::testing::retail(), "retail");
    CHECK(gid == "retail");

    auto created = svc.create_session(q3(gid));
    auto sid = created["id"].get<std::string>();
    CHECK(created["base_total"] == 70.0);
    REQUIRE(created["targets"].size() == 1);
    CHECK(created["targets"][0]["relation"] == "V");
    CHECK(created["targets"][0]["join_key"] == json{"uid"});
    CHECK(created["cursor"] == 0);
    CHECK(created["frontier"] == "V");
    CHECK(created["complete"] == false);
    CHECK(created["final_report"].is_null());
    bool frontier_marked = false;
    for (const auto &n : created["join_graph"]["nodes"])
        if (n["id"] == "V") frontier_marked = n["role"] == "frontier";
    CHECK(frontier_marked);

    SUBCASE("previews do not mutate")
    {
        auto before = svc.state_hash(sid);
        auto p = svc.preview(sid, {{"target", "V"}, {"strategy", equal}});
        CHECK(group_value(p["q_result"], "Google") == 60.0);
        CHECK(group_value(p["q_result"], "Facebook") == 10.0);
        CHECK(p["consistency"]["verdict"] == "Consistent");
        CHECK(p["flagged"] == false);
        CHECK(p["partial_view"]["groups"].size() == 2);
        CHECK(p["q_base_result"]["rows"][0]["value"] == 70.0);

        auto o = svc.preview(sid, {{"target", "V"}, {"strategy", last_by_aid}});
        CHECK(group_value(o["q_result"], "Google") == 50.0);
        CHECK(group_value(o["q_result"], "Facebook") == 20.0);
        CHECK(o["consistency"]["verdict"] == "Consistent");

        auto bad = svc.preview(sid, {{"target", "V"}, {"strategy", bad_custom}});
        CHECK(bad["flagged"] == true);
        CHECK(bad["validation"]["ok"] == false);
        CHECK(bad["consistency"]["verdict"] == "Inconsistent");
        CHECK_FALSE(bad["q_result"]["rows"].empty());

        auto sampled = svc.preview(sid, {{"target", "V"}, {"strategy", equal}, {"sample_n", 1}});
        CHECK(sampled["partial_view"]["groups"].size() == 1);
        CHECK(sampled["partial_view"]["total_groups"] == 2);

        CHECK(svc.state_hash(sid) == before);
        CHECK(svc.get_session(sid)["cursor"] == 0);
    }
    SUBCASE("commit completes the session")
    {
        CHECK(error_code([&] { svc.commit(sid, {{"target", "V"}, {"strategy", bad_custom}}); }) == "ValidationFailed");
        CHECK(svc.get_session(sid)["complete"] == false);

        auto done = svc.commit(sid, {{"target", "V"}, {"strategy", equal}});
        CHECK(done["complete"] == true);
        CHECK(done["cursor"] == 1);
        CHECK(done["frontier"].is_null());
        CHECK(done["targets"][0]["decided"] == true);
        CHECK(done["final_report"]["verdict"] == "Consistent");
        CHECK(done["final_report"]["base_total"] == 70.0);
        CHECK(done["final_report"]["query_total"] == 70.0);

        // The final report equals an independent check on the decided weights.
        auto ws = fanout::testing::retail();
        auto plan = resolve(fanout::testing::query(ws, "total_revenue", {"A.source"}), ws.graph, ws.db);
        WeightMap w{{"V", build_weight_table(EqualWeighing{}, ws.db.at("V"), {"uid"})}};
        CHECK(done["final_report"] == check(plan, ws.db, w).to_json());

        auto overridden = svc.commit(sid, {{"target", "V"}, {"strategy", bad_custom}, {"override", true}});
        CHECK(overridden["targets"][0]["overridden"] == true);
        CHECK(overridden["final_report"]["verdict"] == "Inconsistent");
    }
    SUBCASE("request tokens make commits idempotent")
    {
        auto first = svc.commit(sid, {{"target", "V"}, {"strategy", equal}, {"request_token", "t1"}});
        auto hash = svc.state_hash(sid);
        auto again = svc.commit(sid, {{"target", "V"}, {"strategy", last_by_aid}, {"request_token", "t1"}});
        CHECK(again == first);
        CHECK(svc.state_hash(sid) == hash);
        CHECK(svc.get_session(sid)["targets"][0]["strategy"]["type"] == "equal");
    }
    SUBCASE("views page through groups")
    {
        auto page = svc.view(sid, "V", 0, 1);
        REQUIRE(page["groups"].size() == 1);
        CHECK(page["groups"][0]["key"] == json{1});
        CHECK(page["end_of_data"] == false);
        auto rest = svc.view(sid, "V", 1, 10);
        REQUIRE(rest["groups"].size() == 1);
        CHECK(rest["groups"][0]["key"] == json{2});
        CHECK(rest["end_of_data"] == true);
        auto past = svc.view(sid, "V", 100, 10);
        CHECK(past["groups"].empty());
        CHECK(past["end_of_data"] == true);
        CHECK(error_code([&] { svc.view(sid, "V", 0, 0); }) == "RangeError");
    }
    SUBCASE("errors")
    {
        CHECK(error_code([&] { svc.preview(sid, {{"target", "U"}, {"strategy", equal}}); }) == "NotAWeighingTarget");
        CHECK(error_code([&] { svc.preview(sid, {{"strategy", equal}}); }) == "BadRequest");
        CHECK(error_code([&] { svc.preview(sid, {{"target", "V"}, {"strategy", {{"type", "dice"}}}}); }) ==
              "InvalidStrategy");
        CHECK(error_code([&] { svc.preview("nope", {{"target", "V"}, {"strategy", equal}}); }) == "NotFound");
        CHECK(error_code([&] { svc.create_session({{"graph_id", gid}, {"query", {{"metric", "nope"}}}}); }) ==
              "UnknownMetric");
        CHECK(error_code([&] { svc.create_session({{"graph_id", "nope"}, {"query", {{"metric", "total_revenue"}}}}); }) ==
              "NotFound");
        CHECK(error_code([&] { svc.get_graph("nope"); }) == "NotFound");
        CHECK(error_code([&] { svc.snapshot(sid); }) == "BadRequest");
    }
}

TEST_CASE("base-only sessions start complete")
{
    Service svc;
    auto gid = svc.add_graph(fanout::testing::retail());
    auto s = svc.create_session({{"graph_id", gid}, {"query", {{"metric", "total_revenue"}}}});
    CHECK(s["targets"].empty());
    CHECK(s["complete"] == true);
    CHECK(s["final_report"]["verdict"] == "Consistent");
}

TEST_CASE("out-of-order commits recompute the cursor")
{
    Service svc;
    auto gid = svc.add_graph(fanout::testing::bias());
    auto s = svc.create_session({{"graph_id", gid}, {"query", {{"metric", "user_count"}, {"group_by", {"U.gender"}}, {"joins", {"V", "H"}}}}});
    REQUIRE(s["targets"].size() == 2);
    auto sid = s["id"].get<std::string>();
    auto second = s["targets"][1]["relation"].get<std::string>();
    auto first = s["targets"][0]["relation"].get<std::string>();

    auto after = svc.commit(sid, {{"target", second}, {"strategy", equal}});
    CHECK(after["cursor"] == 0);
    CHECK(after["frontier"] == first);
    auto done = svc.commit(sid, {{"target", first}, {"strategy", equal}});
    CHECK(done["cursor"] == 2);
    CHECK(done["complete"] == true);
    CHECK(group_value(done["final_report"]["query_result"], "female") == 1.0);
    CHECK(group_value(done["final_report"]["query_result"], "male") == 1.0);
}

TEST_CASE("snapshots persist sessions")
{
    auto dir = scratch("snapshots");
    std::string sid;
    json committed;
    {
        Service svc(dir);
        auto gid = svc.add_graph(fanout::testing::retail(), "retail");
        sid = svc.create_session(q3(gid))["id"].get<std::string>();
        committed = svc.commit(sid, {{"target", "V"}, {"strategy", last_by_aid}, {"request_token", "tok"}});
        auto saved = svc.snapshot(sid);
        CHECK(fs::exists(saved["path"].get<std::string>()));
    }
    Service fresh(dir);
    auto restored = fresh.get_session(sid);
    CHECK(restored == committed);
    CHECK(group_value(restored["final_report"]["query_result"], "Google") == 50.0);
    CHECK(fresh.commit(sid, {{"target", "V"}, {"strategy", equal}, {"request_token", "tok"}}) == committed);

    Service other;
    auto id = other.restore(fresh.export_session(sid));
    CHECK(other.get_session(id) == committed);
    CHECK(error_code([&] { other.restore({{"id", "x"}}); }) == "ParseError");
    CHECK(error_code([&] { fresh.get_session("../etc"); }) == "NotFound");
}

TEST_CASE("concurrent previews and commits")
{
    Service svc;
    auto gid = svc.add_graph(fanout::testing::retail());
    auto sid = svc.create_session(q3(gid))["id"].get<std::string>();
    std::atomic<int> consistent{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < 20; ++i) {
                if (t % 2) {
                    svc.commit(sid, {{"target", "V"}, {"strategy", i % 2 ? equal : last_by_aid}});
                } else {
                    auto p = svc.preview(sid, {{"target", "V"}, {"strategy", equal}});
                    consistent += p["consistency"]["verdict"] == "Consistent";
                }
            }
        });
    for (auto &t : threads) t.join();
    CHECK(consistent == 80);
    CHECK(svc.get_session(sid)["complete"] == true);
}

TEST_CASE("http routes")
{
    Service svc(scratch("http"));
    httplib::Server server;
    svc.mount(server);
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto post = [&](const std::string &path, const json &body) { return client.Post(path, body.dump(), "application/json"); };

    auto up = post("/graphs", [] {
        auto b = workspace_to_bundle(fanout::testing::retail());
        b["id"] = "shop";
        return b;
    }());
    REQUIRE(up);
    CHECK(up->status == 201);
    CHECK(json::parse(up->body)["graph_id"] == "shop");

    auto g = client.Get("/graphs/shop");
    REQUIRE(g);
    CHECK(g->status == 200);
    CHECK(json::parse(g->body)["relations"].size() == 6);
    CHECK(client.Get("/graphs/none")->status == 404);

    auto metrics = json::parse(client.Get("/metrics?graph_id=shop")->body);
    CHECK(metrics["metrics"].size() == 7);

    auto created = post("/sessions", q3("shop"));
    REQUIRE(created);
    CHECK(created->status == 201);
    auto sid = json::parse(created->body)["id"].get<std::string>();

    auto preview = post("/sessions/" + sid + "/preview", {{"target", "V"}, {"strategy", equal}});
    CHECK(preview->status == 200);
    CHECK(group_value(json::parse(preview->body)["q_result"], "Google") == 60.0);

    auto invalid = post("/sessions/" + sid + "/commit", {{"target", "V"}, {"strategy", bad_custom}});
    CHECK(invalid->status == 422);
    auto err = json::parse(invalid->body);
    CHECK(err["code"] == "ValidationFailed");
    CHECK(err["details"]["violations"].size() == 1);
    CHECK(err.contains("message"));

    auto commit = post("/sessions/" + sid + "/commit", {{"target", "V"}, {"strategy", equal}});
    CHECK(commit->status == 200);
    CHECK(json::parse(commit->body)["final_report"]["verdict"] == "Consistent");

    auto page = client.Get("/sessions/" + sid + "/view?target=V&offset=0&limit=1");
    CHECK(page->status == 200);
    CHECK(json::parse(page->body)["groups"].size() == 1);
    CHECK(client.Get("/sessions/" + sid + "/view?target=V&limit=0")->status == 400);
    CHECK(client.Get("/sessions/" + sid + "/view?target=V&limit=-3")->status == 400);
    CHECK(client.Get("/sessions/" + sid + "/view")->status == 400);

    CHECK(client.Get("/sessions/" + sid)->status == 200);
    CHECK(client.Get("/sessions/missing")->status == 404);
    CHECK(client.Post("/sessions", "{not json", "application/json")->status == 400);

    auto snap = client.Post("/sessions/" + sid + "/snapshot");
    CHECK(snap->status == 200);
    CHECK(fs::exists(json::parse(snap->body)["path"].get<std::string>()));

    server.stop();
    worker.join();
}

TEST_CASE("graph ids")
{
    Service svc;
    CHECK(svc.add_graph(fanout::testing::retail()) == "g1");
    CHECK(svc.add_graph(fanout::testing::retail(), "g2") == "g2");
    CHECK(svc.add_graph(fanout::testing::retail()) == "g3");
    auto sid = svc.create_session(q3("g2"))["id"].get<std::string>();
    CHECK(svc.add_graph(fanout::testing::bias(), "g2") == "g2");
    CHECK(svc.get_graph("g2")["relations"].size() == 3);
    CHECK(svc.get_session(sid)["base_total"] == 70.0);
    CHECK(error_code([&] { svc.add_graph(fanout::testing::bias(), "../x"); }) == "BadRequest");
    CHECK(svc.list_metrics()["metrics"].size() == 7 + 7 + 1);
}
