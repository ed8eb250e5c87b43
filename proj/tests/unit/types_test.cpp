#include <doctest.h>

#include "hitl/types.hpp"

using namespace hitl;

TEST_SUITE("types") {

TEST_CASE("label accepts exactly 1..5") {
    for (int v = 1; v <= 5; ++v) CHECK(Label(v).value() == v);
    CHECK_THROWS_AS(Label(0), RangeError);
    CHECK_THROWS_AS(Label(6), RangeError);
    CHECK(Label(3).index() == 2);
    CHECK(Label(2) < Label(4));
}

TEST_CASE("task names round trip") {
    for (auto t : kAllTasks) CHECK(parse_task(to_string(t)) == t);
    CHECK(to_string(TaskKind::OptionOrder) == "option_order");
    CHECK_FALSE(try_parse_task("relevance"));
    CHECK_THROWS(parse_task("relevance"));
}

TEST_CASE("only preference is list-wise") {
    CHECK(is_listwise(TaskKind::Preference));
    CHECK_FALSE(is_listwise(TaskKind::Quality));
    CHECK_FALSE(is_listwise(TaskKind::OptionOrder));
}

TEST_CASE("parse errors carry the line") {
    ParseError e(7, "bad json");
    CHECK(e.line() == 7);
    CHECK(std::string(e.what()) == "line 7: bad json");
}

}
