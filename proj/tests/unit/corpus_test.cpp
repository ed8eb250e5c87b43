#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hitl/corpus.hpp"
#include "unit/test_util.hpp"

using namespace hitl;

namespace {

const char* kThreePanes =
    R"({"query_id":"q1","query":"jaguar","panes":[)"
    R"({"pane_id":"p1","question":"Which jaguar?","options":["car","cat"],"gold":{"quality":4,"preference":5}},)"
    R"({"pane_id":"p2","question":"Looking for?","options":["price","speed","habitat"],"gold":{"quality":3}},)"
    R"({"pane_id":"p3","question":"Topic?","options":["a","b"],"gold":{}}]})"
    "\n";

Corpus parse(const std::string& text, LoadOptions opts = {}) {
    std::istringstream in(text);
    return parse_corpus(in, opts);
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("minimal valid input") {
    auto c = parse(kThreePanes);
    CHECK(c.size() == 3);
    REQUIRE(c.queries().size() == 1);
    CHECK(c.queries()[0].unit_ids == std::vector<UnitId>{"p1", "p2", "p3"});
    CHECK(c.unit("p1").gold_for(TaskKind::Quality) == Label(4));
    CHECK_FALSE(c.unit("p3").gold_for(TaskKind::Quality));
    CHECK(c.unit("p2").pane.options.size() == 3);
    CHECK(c.group_of("p2").query == "jaguar");
    CHECK(c.warnings().empty());
    CHECK_THROWS_AS(c.unit("nope"), NotFoundError);
}

TEST_CASE("six options are rejected with the pane id") {
    const std::string text =
        R"({"query_id":"q1","query":"x","panes":[{"pane_id":"wide","question":"?","options":["1","2","3","4","5","6"]}]})"
        "\n";
    try {
        parse(text);
        FAIL("expected an error");
    } catch (const InvariantError& e) {
        const std::string what = e.what();
        CHECK(what.find("wide") != std::string::npos);
        CHECK(what.find("options length 6 > 5") != std::string::npos);
    }
}

TEST_CASE("structural errors") {
    CHECK_THROWS_AS(parse("{not json}\n"), ParseError);
    CHECK_THROWS_AS(parse(R"({"query_id":"q","query":"x"})" "\n"), ParseError);
    // Single option.
    CHECK_THROWS_AS(parse(R"({"query_id":"q","query":"x","panes":[{"pane_id":"p","question":"?","options":["a"]}]})" "\n"),
                    InvariantError);
    // Gold out of range.
    CHECK_THROWS_AS(parse(R"({"query_id":"q","query":"x","panes":[{"pane_id":"p","question":"?","options":["a","b"],"gold":{"quality":9}}]})" "\n"),
                    InvariantError);
    // Duplicate pane across groups.
    const std::string dup =
        R"({"query_id":"q1","query":"x","panes":[{"pane_id":"p","question":"?","options":["a","b"]}]})" "\n"
        R"({"query_id":"q2","query":"y","panes":[{"pane_id":"p","question":"?","options":["a","b"]}]})" "\n";
    CHECK_THROWS_AS(parse(dup), InvariantError);
}

TEST_CASE("small groups warn, or fail when strict") {
    const std::string two =
        R"({"query_id":"q","query":"x","panes":[{"pane_id":"a","question":"?","options":["1","2"]},{"pane_id":"b","question":"?","options":["1","2"]}]})"
        "\n";
    auto c = parse(two);
    CHECK(c.warnings().size() == 1);
    CHECK_THROWS_AS(parse(two, {true}), InvariantError);
}

TEST_CASE("canonical form round trips") {
    auto c = parse(kThreePanes);
    std::istringstream again(serialize_corpus(c));
    auto d = parse_corpus(again);
    CHECK(c == d);
    CHECK(serialize_corpus(d) == serialize_corpus(c));
}

TEST_CASE("desk fixture matches its independently computed manifest") {
    std::ifstream tsv(std::string(HITL_FIXTURE_DIR) + "/desk.tsv");
    REQUIRE(tsv);
    auto c = convert_tsv(tsv);
    std::ifstream mf(std::string(HITL_FIXTURE_DIR) + "/desk_manifest.json");
    const auto m = nlohmann::json::parse(mf);
    const auto s = c.summary();
    CHECK(s.queries == m["queries"].get<std::size_t>());
    CHECK(s.pairs == m["pairs"].get<std::size_t>());
    CHECK(s.panes_per_query_mean == doctest::Approx(m["panes_per_query_mean"].get<double>()));
    CHECK(s.panes_per_query_sd == doctest::Approx(m["panes_per_query_sd"].get<double>()));
    CHECK(s.panes_per_query_min == m["panes_per_query_min"].get<std::size_t>());
    CHECK(s.panes_per_query_max == m["panes_per_query_max"].get<std::size_t>());
    CHECK(s.options_mean == doctest::Approx(m["options_mean"].get<double>()));
    CHECK(s.options_sd == doctest::Approx(m["options_sd"].get<double>()));
    CHECK(s.options_min == m["options_min"].get<std::size_t>());
    CHECK(s.options_max == m["options_max"].get<std::size_t>());
    for (const auto& u : c.units()) CHECK(u.gold.size() == kAllTasks.size());
}

TEST_CASE("tsv conversion errors") {
    std::istringstream no_header("");
    CHECK_THROWS_AS(convert_tsv(no_header), ParseError);
    std::istringstream missing("query_id\tquery\tpane_id\n");
    CHECK_THROWS_AS(convert_tsv(missing), ParseError);
    std::istringstream bad_label(
        "query_id\tquery\tpane_id\tquestion\toption_1\toption_2\tquality\n"
        "q\tx\tp\t?\ta\tb\tgood\n");
    CHECK_THROWS_AS(convert_tsv(bad_label), ParseError);
}

TEST_CASE("subset sampling") {
    auto c = testutil::make_corpus(25, 4);  // 100 units
    auto a = sample_subset(c, 0.10, 17);
    auto b = sample_subset(c, 0.10, 17);
    CHECK(a.subset.size() == 10);
    CHECK(a.remainder.size() == 90);
    CHECK(a.subset == b.subset);

    auto other = sample_subset(c, 0.10, 18);
    CHECK(other.subset.size() == 10);
    CHECK_FALSE(other.subset == a.subset);

    std::set<UnitId> seen;
    for (const auto& u : a.subset.units()) seen.insert(u.unit_id);
    for (const auto& u : a.remainder.units()) CHECK(seen.insert(u.unit_id).second);
    CHECK(seen.size() == 100);

    auto all = sample_subset(c, 1.0, 3);
    CHECK(all.subset.size() == 100);
    CHECK(all.remainder.empty());

    CHECK(sample_subset(c, 0.001, 3).subset.size() == 1);
    CHECK(sample_subset(c, 0.105, 3).subset.size() == 11);  // 10.5 rounds up
    CHECK_THROWS_AS(sample_subset(c, 0.0, 3), RangeError);
    CHECK_THROWS_AS(sample_subset(c, 1.5, 3), RangeError);
}

TEST_CASE("subset keeps original unit order") {
    auto c = testutil::make_corpus(10, 3);
    auto s = sample_subset(c, 0.5, 4);
    std::vector<std::size_t> pos;
    for (const auto& u : s.subset.units())
        for (std::size_t i = 0; i < c.size(); ++i)
            if (c.units()[i].unit_id == u.unit_id) pos.push_back(i);
    CHECK(std::is_sorted(pos.begin(), pos.end()));
}

TEST_CASE("synthetic corpus honours its bounds and seed") {
    SynthSpec spec;
    spec.units = 400;
    spec.seed = 9;
    auto c = synthesize_corpus(spec);
    CHECK(c.size() == 400);
    for (const auto& q : c.queries()) CHECK(q.unit_ids.size() <= 8);
    for (const auto& u : c.units()) {
        CHECK(u.pane.options.size() >= 2);
        CHECK(u.pane.options.size() <= 5);
        CHECK(u.gold.size() == kAllTasks.size());
    }
    CHECK(synthesize_corpus(spec) == c);
    spec.seed = 10;
    CHECK_FALSE(synthesize_corpus(spec) == c);
}

TEST_CASE("synthetic prior skews the gold distribution") {
    SynthSpec spec;
    spec.units = 5000;
    spec.label_prior = {0.024, 0.087, 0.2963, 0.2963, 0.2964};
    auto c = synthesize_corpus(spec);
    std::array<int, 5> counts{};
    for (const auto& u : c.units()) ++counts[u.gold.at(TaskKind::Quality).index()];
    CHECK(counts[0] / 5000.0 == doctest::Approx(0.024).epsilon(0.4));
    CHECK(counts[1] / 5000.0 == doctest::Approx(0.087).epsilon(0.2));
}

}
