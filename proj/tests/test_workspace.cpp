#include <doctest.h>

#include "fixtures.hpp"

#include <fanout/workspace.hpp>

#include <filesystem>
#include <fstream>

using namespace fanout;
using fanout::testing::data_dir;
using fanout::testing::error_code;

namespace fs = std::filesystem;

namespace {

nlohmann::json node(const nlohmann::json &render, const std::string &id)
{
    for (const auto &n : render["nodes"])
        if (n["id"] == id) return n;
    return nullptr;
}

}

TEST_CASE("load_workspace")
{
    auto ws = fanout::testing::retail();
    CHECK(ws.null_token == "N");
    CHECK(ws.db.names() == std::vector<std::string>{"A", "H", "I", "P", "U", "V"});
    CHECK(ws.db.at("H").size() == 4);
    CHECK(is_null(ws.db.at("H").rows()[2].values[2]));
    CHECK(ws.semantic.metrics.size() == 7);
    CHECK(ws.graph.fact_tables == std::vector<std::string>{"V", "H"});

    // Overriding the null token turns "N" into an unparsable Int.
    CHECK(error_code([] {
              load_workspace(data_dir("retail") + "/graph.json", data_dir("retail") + "/semantic.json", "NULL");
          }) == "TypeError");
    CHECK(error_code([] { load_workspace("/nonexistent/graph.json", data_dir("retail") + "/semantic.json"); }) ==
          "IoError");

    auto dir = fs::temp_directory_path() / "fanout_workspace_test";
    fs::create_directories(dir);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(error_code([&] { load_workspace(dir / "broken.json", data_dir("retail") + "/semantic.json"); }) ==
          "ParseError");
}

TEST_CASE("schema json")
{
    Schema s("T", {{"a", ValueType::Int}, {"b", ValueType::Text}, {"c", ValueType::Real}});
    CHECK(schema_from_json("T", schema_to_json(s)) == s);
    CHECK(error_code([] { schema_from_json("T", {{{"name", "a"}, {"type", "Blob"}}}); }) == "ParseError");
}

TEST_CASE("bundles round trip")
{
    auto ws = fanout::testing::retail();
    auto bundle = workspace_to_bundle(ws);
    CHECK(bundle["tables"].contains("V"));
    auto back = workspace_from_bundle(bundle);
    CHECK(back.null_token == ws.null_token);
    CHECK(back.semantic.metrics == ws.semantic.metrics);
    for (const auto &[name, rel] : ws.db.relations()) {
        const auto &other = back.db.at(name);
        CHECK(other.schema() == rel.schema());
        REQUIRE(other.size() == rel.size());
        for (std::size_t i = 0; i < rel.size(); ++i) CHECK(other.rows()[i].values == rel.rows()[i].values);
    }
    REQUIRE(back.graph.edges.size() == ws.graph.edges.size());
    for (std::size_t i = 0; i < ws.graph.edges.size(); ++i)
        CHECK(back.graph.edges[i].cardinality == ws.graph.edges[i].cardinality);

    auto missing = bundle;
    missing["tables"].erase("V");
    CHECK(error_code([&] { workspace_from_bundle(missing); }) == "BadRequest");
    CHECK(error_code([] { workspace_from_bundle({{"graph", nlohmann::json::object()}}); }) == "BadRequest");

    auto cyclic = bundle;
    cyclic["graph"]["edges"].push_back({{"left", "U"}, {"right", "A"}, {"on", nlohmann::json::array({nlohmann::json::array({"uid", "aid"})})}});
    CHECK(error_code([&] { workspace_from_bundle(cyclic); }) == "CycleDetected");
}

TEST_CASE("render_data")
{
    auto ws = fanout::testing::retail();
    auto plain = render_data(ws);
    CHECK(plain["nodes"].size() == 6);
    CHECK(plain["edges"].size() == 5);
    for (const auto &n : plain["nodes"]) CHECK(n["role"] == "neutral");
    CHECK(node(plain, "H")["fact"] == true);

    auto plan = resolve(fanout::testing::query(ws, "total_revenue", {"A.source"}), ws.graph, ws.db);
    std::string frontier = "V";
    auto drawn = render_data(ws, &plan, &frontier);
    CHECK(node(drawn, "H")["role"] == "base");
    CHECK(node(drawn, "I")["role"] == "base");
    CHECK(node(drawn, "V")["role"] == "frontier");
    CHECK(node(drawn, "U")["role"] == "joined");
    CHECK(node(drawn, "A")["role"] == "joined");
    CHECK(node(drawn, "P")["role"] == "neutral");
    CHECK(node(render_data(ws, &plan), "V")["role"] == "target");

    int in_plan = 0;
    for (const auto &e : drawn["edges"]) {
        in_plan += e["in_plan"].get<bool>();
        if (e["left"] == "H" and e["right"] == "I") {
            CHECK(e["cardinality"] == "many_to_one");
            CHECK(e["left_many"] == true);
            CHECK(e["right_many"] == false);
        }
    }
    CHECK(in_plan == 4);
}
