#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "spotv2/calendar.hpp"
#include "spotv2/cli.hpp"
#include "spotv2/io.hpp"

using namespace spotv2;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

json error_of(const Outcome& o) { return json::parse(o.err).at("error"); }

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("missing input directory exits 2 and names the path") {
    auto o = call({"ingest", "--in", "/nonexistent/ticks_dir", "--out", "/tmp/spotv2_unused"});
    CHECK(o.code == 2);
    auto e = error_of(o);
    CHECK(e["stage"] == "ingest");
    CHECK(e["message"].get<std::string>().find("/nonexistent/ticks_dir") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(call({"frobnicate"}).code == 2);
    CHECK(call({"train", "--data", "x"}).code == 2);
    CHECK(error_of(call({"train", "--data", "x"}))["kind"] == "usage");
}

TEST_CASE("help documents the CSV formats") {
    auto o = call({"--help"});
    CHECK(o.code == 0);
    for (const char* cols : {"timestamp,price,venue", "date,tau_index,kind,asset_i,asset_j,value", "b,asset,h,pred"})
        CHECK(o.out.find(cols) != std::string::npos);
}

TEST_CASE("seed override from the environment") {
    unsetenv("SPOTV2_SEED");
    CHECK(cli::resolve_seed(5) == 5);
    setenv("SPOTV2_SEED", "77", 1);
    CHECK(cli::resolve_seed(5) == 77);
    unsetenv("SPOTV2_SEED");
}

TEST_CASE("stage chain with lineage checks") {
    auto d = fresh_dir("spotv2_cli_test");
    const auto p = [&](const char* name) { return (d / name).string(); };
    REQUIRE(call({"simulate", "--planted", "--assets", "3", "--days", "30", "--seed", "2", "--out", p("panel.csv")}).code == 0);
    REQUIRE(call({"simulate", "--planted", "--assets", "3", "--days", "30", "--seed", "3", "--out", p("other.csv")}).code == 0);
    CHECK(io::read_lineage(io::read_file(d / "panel.csv")).stage == "simulate");

    const auto days = next_sessions(parse_date("2022-01-03"), 30);
    io::write_file_atomic(d / "splits.json", json{{"train_end", format_date(days[19])},
                                                   {"val_end", format_date(days[24])},
                                                   {"test_end", format_date(days[29])}}
                                                 .dump());
    io::write_file_atomic(d / "gat.json", json{{"hidden", {4}}, {"heads", 1}, {"epochs", 2}, {"lags", 2}}.dump());
    io::write_file_atomic(d / "eval.json", json{{"bootstrap", 200}}.dump());

    auto bg = call({"build-graphs", "--panel", p("panel.csv"), "--lags", "2", "--splits", p("splits.json"), "--out", p("ds")});
    REQUIRE_MESSAGE(bg.code == 0, bg.err);
    auto tr = call({"train", "--config", p("gat.json"), "--data", p("ds"), "--out", p("m.json"), "--history", p("h.csv")});
    REQUIRE_MESSAGE(tr.code == 0, tr.err);
    auto fc = call({"forecast", "--model", p("m.json"), "--data", p("ds"), "--out", p("gat.csv")});
    REQUIRE_MESSAGE(fc.code == 0, fc.err);
    auto har = call({"baseline", "--model", "har", "--data", p("ds"), "--panel", p("panel.csv"), "--out", p("har.csv")});
    REQUIRE_MESSAGE(har.code == 0, har.err);

    auto ev = call({"evaluate", "--preds", p("gat.csv") + "," + p("har.csv"), "--actuals", p("panel.csv"), "--out",
                    p("report.json"), "--config", p("eval.json")});
    REQUIRE_MESSAGE(ev.code == 0, ev.err);
    auto report = json::parse(io::read_file(d / "report.json"));
    CHECK(report["mse"]["models"] == json{"spotv2net", "har"});

    // Predictions built from one panel cannot be scored against another.
    auto bad = call({"evaluate", "--preds", p("gat.csv"), "--actuals", p("other.csv"), "--out", p("bad.json")});
    CHECK(bad.code == 1);
    CHECK(error_of(bad)["kind"] == "lineage");
    CHECK_FALSE(fs::exists(d / "bad.json"));

    // HAR refuses a panel other than the one the dataset came from.
    auto wrong = call({"baseline", "--model", "har", "--data", p("ds"), "--panel", p("other.csv"), "--out", p("x.csv")});
    CHECK(wrong.code == 1);
    CHECK(error_of(wrong)["kind"] == "lineage");
    fs::remove_all(d);
}
