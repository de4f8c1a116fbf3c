#include <doctest.h>

#include "fixtures.hpp"
#include "process.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using nlohmann::json;
using fanout::testing::data_dir;
using fanout::testing::run_command;

namespace fs = std::filesystem;

namespace {

fanout::testing::Completed guard(const std::string &args, const std::string &data = "retail")
{
    return run_command(std::string(FANOUT_GUARD_BIN) + " --data-dir " + data_dir(data) + " " + args);
}

/// Rows of the text result table: "label | value".
std::map<std::string, double> text_rows(const std::string &out)
{
    std::map<std::string, double> rows;
    std::regex row(R"(^(\S[^|]*?)\s*\|\s*(-?[0-9.e+-]+)\s*$)");
    std::istringstream in(out);
    for (std::string line; std::getline(in, line);) {
        std::smatch m;
        if (std::regex_match(line, m, row)) rows[m[1]] = std::stod(m[2]);
    }
    return rows;
}

double text_field(const std::string &out, const std::string &label)
{
    std::regex field("(^|\\n)" + label + ":\\s*(-?[0-9.e+-]+)");
    std::smatch m;
    REQUIRE(std::regex_search(out, m, field));
    return std::stod(m[2]);
}

std::map<std::string, double> json_rows(const json &result)
{
    std::map<std::string, double> rows;
    for (const auto &r : result["rows"]) rows[r["key"][0].get<std::string>()] = r["value"].get<double>();
    return rows;
}

}

TEST_CASE("Q3 exit codes")
{
    auto equal = guard("run --metric total_revenue --group-by A.source --weigh V=equal");
    CHECK(equal.exit_code == 0);
    CHECK(text_rows(equal.out) == std::map<std::string, double>{{"Facebook", 10}, {"Google", 60}});
    CHECK(equal.out.find("Consistent") != std::string::npos);

    auto last = guard("run --metric total_revenue --group-by A.source --weigh V=order:aid:last");
    CHECK(last.exit_code == 0);
    CHECK(text_rows(last.out) == std::map<std::string, double>{{"Facebook", 20}, {"Google", 50}});

    auto raw = guard("run --metric total_revenue --group-by A.source");
    CHECK(raw.exit_code == 2);
    CHECK(text_field(raw.out, "query total") == 90);
    CHECK(raw.out.find("fanout in V") != std::string::npos);

    auto pushed = guard("run --metric total_revenue --group-by A.source --weigh V=equal --pushdown");
    CHECK(pushed.exit_code == 0);
    CHECK(text_rows(pushed.out) == text_rows(equal.out));
}

TEST_CASE("base-only and selections")
{
    auto ads = guard("run --metric total_ad_cost");
    CHECK(ads.exit_code == 0);
    CHECK(text_field(ads.out, "base total") == 1100);
    CHECK(text_field(ads.out, "query total") == 1100);

    auto q1 = guard("run --metric total_ad_cost --join V --join U");
    CHECK(q1.exit_code == 2);
    CHECK(text_field(q1.out, "query total") == 1600);

    auto sel = guard("run --metric total_revenue --where 'I.price > 25'");
    CHECK(sel.exit_code == 0);
    CHECK(text_field(sel.out, "query total") == 30);
    CHECK(text_field(sel.out, "not selected") == 40);
}

TEST_CASE("bad input exits 1")
{
    CHECK(guard("run --metric nope").exit_code == 1);
    CHECK(guard("run --metric total_revenue --group-by A.colour").exit_code == 1);
    CHECK(guard("run --metric total_revenue --group-by A.source --weigh V=dice").exit_code == 1);
    CHECK(guard("run --metric total_revenue --group-by A.source --weigh U=equal").exit_code == 1);
    CHECK(guard("run --metric total_revenue --group-by A.source --weigh V").exit_code == 1);
    CHECK(guard("run --metric total_revenue --where 'I.price >'").exit_code == 1);
    CHECK(guard("run").exit_code == 1);
    CHECK(run_command(std::string(FANOUT_GUARD_BIN) + " --data-dir /nonexistent run --metric total_revenue").exit_code == 1);

    auto err = guard("--output json run --metric nope");
    CHECK(err.exit_code == 1);
    CHECK(json::parse(err.out)["error"]["code"] == "UnknownMetric");
}

TEST_CASE("custom weights")
{
    auto dir = fs::temp_directory_path() / "fanout_cli_test";
    fs::create_directories(dir);
    std::ofstream(dir / "bad.csv") << "row_id,weight\n0,0.7\n1,0.7\n2,1\n";
    std::ofstream(dir / "good.csv") << "row_id,weight\n0,0.25\n1,0.75\n2,1\n";
    auto spec = "run --metric total_revenue --group-by A.source --weigh V=custom:";

    auto bad = guard(spec + (dir / "bad.csv").string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.all().find("ValidationFailed") != std::string::npos);
    auto forced = guard(spec + (dir / "bad.csv").string() + " --allow-invalid-weights");
    CHECK(forced.exit_code == 2);
    auto good = guard(spec + (dir / "good.csv").string());
    CHECK(good.exit_code == 0);
    CHECK(text_rows(good.out) == std::map<std::string, double>{{"Facebook", 15}, {"Google", 55}});
}

TEST_CASE("text and json agree")
{
    for (std::string args : {"run --metric total_revenue --group-by A.source --weigh V=equal",
                             "run --metric total_revenue --group-by A.source",
                             "run --metric avg_price --group-by A.source --weigh V=position:aid:0.3:0.3",
                             "run --metric purchase_count --group-by A.source --weigh V=prop:aid",
                             "run --metric total_revenue --group-by U.name --where 'I.price > 25'"}) {
        CAPTURE(args);
        auto text = guard(args);
        auto js = guard("--output json " + args);
        CHECK(text.exit_code == js.exit_code);
        auto doc = json::parse(js.out);
        CHECK(doc["exit_code"] == js.exit_code);
        CHECK(text_rows(text.out) == json_rows(doc["result"]));
        CHECK(text_field(text.out, "base total") == doc["report"]["base_total"].get<double>());
        CHECK(text_field(text.out, "query total") == doc["report"]["query_total"].get<double>());
        CHECK((doc["report"]["verdict"] == "Consistent") == (js.exit_code == 0));
        if (not doc["report"]["not_selected_total"].is_null())
            CHECK(text_field(text.out, "not selected") == doc["report"]["not_selected_total"].get<double>());
    }
}

TEST_CASE("Table 5 through the CLI")
{
    auto raw = guard("run --metric user_count --group-by U.gender --join V --join H", "bias");
    CHECK(raw.exit_code == 2);
    CHECK(text_rows(raw.out) == std::map<std::string, double>{{"female", 6}, {"male", 1}});
    auto fixed = guard("run --metric user_count --group-by U.gender --join V --join H --weigh V=equal --weigh H=equal", "bias");
    CHECK(fixed.exit_code == 0);
    CHECK(text_rows(fixed.out) == std::map<std::string, double>{{"female", 1}, {"male", 1}});
}

TEST_CASE("graph commands and views")
{
    auto v = guard("validate-graph");
    CHECK(v.exit_code == 0);
    CHECK(v.out.find("join graph ok") != std::string::npos);
    auto c = guard("infer-cardinality");
    CHECK(c.exit_code == 0);
    CHECK(c.out.find("H - I on H.iid=I.iid: many_to_one") != std::string::npos);

    auto view = guard("--output json run --metric total_revenue --group-by A.source --weigh V=equal --view V --sample-n 1");
    auto doc = json::parse(view.out);
    REQUIRE(doc["views"].size() == 1);
    CHECK(doc["views"][0]["groups"].size() == 1);
    CHECK(doc["views"][0]["total_groups"] == 2);
}

TEST_CASE("snapshots")
{
    auto path = fs::temp_directory_path() / "fanout_cli_test" / "session.json";
    fs::remove(path);
    auto save = guard("snapshot save --metric total_revenue --group-by A.source --weigh V=order:aid:last --out " + path.string());
    CHECK(save.exit_code == 0);
    REQUIRE(fs::exists(path));
    auto show = guard("snapshot show " + path.string());
    CHECK(show.exit_code == 0);
    CHECK(text_rows(show.out) == std::map<std::string, double>{{"Facebook", 20}, {"Google", 50}});
    CHECK(guard("snapshot show /nonexistent/s.json").exit_code == 1);
}
