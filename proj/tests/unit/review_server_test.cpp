#include <doctest.h>

#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hitl/review_server.hpp"
#include "unit/test_util.hpp"

using namespace hitl;
using json = nlohmann::json;

namespace {

ReviewItem item(const std::string& unit, TaskKind task = TaskKind::Quality) {
    ReviewItem it;
    it.unit_id = unit;
    it.task = task;
    it.item_id = ReviewItem::make_id(task, unit);
    it.question = "q";
    it.options = {"a", "b", "c"};
    it.aggregated_label = Label(2);
    it.mean_confidence = 55;
    it.predictions = {{"Annotator A", Label(2), 55}};
    return it;
}

struct Fixture {
    ReviewStore store;
    ReviewServer server;
    httplib::Client client;

    explicit Fixture(ReviewServerOptions opts = {})
        : store({}, [] { return std::string("T"); }),
          server(store, (opts.port = 0, opts)),
          client("127.0.0.1", server.start()) {
        store.enqueue({item("a"), item("b", TaskKind::Preference), item("c")});
    }
};

}  // namespace

TEST_SUITE("review_server") {

TEST_CASE("queue and item lookup") {
    Fixture f;
    auto r = f.client.Get("/api/queue?limit=2");
    REQUIRE(r);
    CHECK(r->status == 200);
    auto body = json::parse(r->body);
    REQUIRE(body["items"].size() == 2);
    CHECK(body["items"][0]["item_id"] == "quality:a");
    CHECK(body["progress"]["pending"] == 3);

    r = f.client.Get("/api/queue?task=preference");
    CHECK(json::parse(r->body)["items"].size() == 1);
    CHECK(f.client.Get("/api/queue?task=nope")->status == 422);
    CHECK(f.client.Get("/api/queue?limit=-1")->status == 422);

    r = f.client.Get("/api/items/quality:c");
    CHECK(r->status == 200);
    CHECK(json::parse(r->body)["status"] == "pending");
    r = f.client.Get("/api/items/quality:zz");
    CHECK(r->status == 404);
    CHECK(json::parse(r->body).contains("error"));
}

TEST_CASE("review submission") {
    Fixture f;
    auto r = f.client.Post("/api/items/quality:a/review", R"({"label":4,"reviewer_id":"alice"})",
                           "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    auto body = json::parse(r->body);
    CHECK(body["human_label"] == 4);
    CHECK(body["status"] == "reviewed");

    CHECK(f.client.Post("/api/items/quality:a/review", R"({"label":3})", "application/json")->status == 409);
    CHECK(f.client.Post("/api/items/quality:x/review", R"({"label":3})", "application/json")->status == 404);
    CHECK(f.client.Post("/api/items/quality:c/review", R"({"label":9})", "application/json")->status == 422);
    CHECK(f.client.Post("/api/items/quality:c/review", R"({"label":"3"})", "application/json")->status == 422);
    CHECK(f.client.Post("/api/items/quality:c/review", "{not json", "application/json")->status == 400);

    auto p = json::parse(f.client.Get("/api/progress")->body);
    CHECK(p["reviewed"] == 1);
    CHECK(p["pending"] == 2);
}

TEST_CASE("lease endpoint") {
    Fixture f;
    auto r = f.client.Post("/api/items/quality:c/lease", R"({"reviewer_id":"bob","until":"soon"})",
                           "application/json");
    CHECK(r->status == 200);
    CHECK(json::parse(r->body)["lease_holder"] == "bob");
}

TEST_CASE("pipeline enqueue endpoint") {
    Fixture f;
    json body{{"batch", "quality"}, {"accepted", 7}, {"items", json::array()}};
    body["items"].push_back(json(to_json(item("d"))));
    body["items"].push_back(json(to_json(item("a"))));
    auto r = f.client.Post("/api/items", body.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    auto res = json::parse(r->body);
    CHECK(res["accepted"] == 1);
    CHECK(res["progress"]["accepted"] == 7);

    auto changed = item("a");
    changed.mean_confidence = 1;
    json bad{{"items", json::array({json(to_json(changed))})}};
    CHECK(f.client.Post("/api/items", bad.dump(), "application/json")->status == 409);
}

TEST_CASE("bearer token") {
    ReviewServerOptions opts;
    opts.bearer_token = "s3cret";
    Fixture f(opts);
    CHECK(f.client.Get("/api/progress")->status == 401);
    httplib::Headers h{{"Authorization", "Bearer s3cret"}};
    CHECK(f.client.Get("/api/progress", h)->status == 200);
    httplib::Headers wrong{{"Authorization", "Bearer nope"}};
    CHECK(f.client.Get("/api/progress", wrong)->status == 401);
}

TEST_CASE("static bundle") {
    testutil::TempDir dir;
    {
        std::ofstream out(dir / "index.html");
        out << "<html>review</html>";
    }
    ReviewServerOptions opts;
    opts.static_dir = dir.path();
    opts.bearer_token = "t";
    Fixture f(opts);
    auto r = f.client.Get("/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>review</html>");

    ReviewStore s;
    ReviewServerOptions missing;
    missing.static_dir = dir / "nope";
    CHECK_THROWS_AS(ReviewServer(s, missing), ConfigError);
}

}
