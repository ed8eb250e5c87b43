#include <doctest.h>

#include <fstream>

#include "hitl/config.hpp"
#include "unit/test_util.hpp"

using namespace hitl;
using json = nlohmann::json;

namespace {

json minimal() {
    return json::parse(R"({
        "synthetic": {"units": 50, "seed": 3},
        "annotators": [{"id": "m1", "hit_rate": 0.6, "seed": 1}]
    })");
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
    auto c = parse_config(minimal());
    CHECK(c.tasks.size() == 5);
    CHECK(c.subset_fraction == 0.10);
    CHECK(c.kw_min == doctest::Approx(0.7));
    CHECK(c.simulate_review);
    CHECK(c.use_cache);
    CHECK(c.prompt_mode == PromptMode::ZSS);
    CHECK(c.synthetic->units == 50);
    CHECK(c.annotators.size() == 1);
    CHECK(c.annotators[0].sim.hit_rate == 0.6);
    CHECK(c.effective_cache_dir() == std::filesystem::path("hitl-out") / "cache");
    CHECK(c.effective_review_log() == std::filesystem::path("hitl-out") / "review" / "queue.log");
    CHECK(c.sensitivity.temperatures == std::vector<double>{0, 0.5, 1});
}

TEST_CASE("full document") {
    auto doc = minimal();
    doc["tasks"] = {"quality", "preference"};
    doc["annotators"].push_back(json::parse(R"({"id":"m2","error_spread":{"+1":1,"-2":3},"setting_sensitive":true})"));
    doc["prompt"] = {{"mode", "fss"}, {"variant", "shuffled"}, {"shuffle_seed", 9}};
    doc["generation"] = {{"temperature", 0.5}, {"max_tokens", 250}};
    doc["subset"] = {{"fraction", 0.2}, {"seed", 11}};
    doc["kw_min"] = {{"default", 0.6}, {"quality", 0.8}};
    doc["output_dir"] = "out";
    doc["review"] = {{"url", "http://localhost:1"}, {"token", "t"}};
    doc["sensitivity"] = {{"mode", "prompt"}, {"all_token_limits", true}};
    auto c = parse_config(doc, "/base");
    CHECK(c.tasks == std::vector<TaskKind>{TaskKind::Quality, TaskKind::Preference});
    CHECK(c.annotators[1].sim.error_spread == std::array<double, 4>{1, 0, 0, 3});
    CHECK(c.annotators[1].sim.setting_sensitive);
    CHECK(c.prompt_mode == PromptMode::FSS);
    CHECK(c.shuffle_seed == 9);
    CHECK(c.params.max_tokens == 250);
    CHECK(c.subset_seed == 11);
    CHECK(c.kw_min_for(TaskKind::Quality) == doctest::Approx(0.8));
    CHECK(c.kw_min_for(TaskKind::Preference) == doctest::Approx(0.6));
    CHECK(c.output_dir == std::filesystem::path("/base/out"));
    CHECK(c.review_url == "http://localhost:1");
    CHECK(c.sensitivity.mode == SensitivityConfig::Mode::Prompt);
    CHECK(c.sensitivity.all_token_limits);
}

TEST_CASE("rejections") {
    auto bad = [](auto mutate) {
        auto doc = minimal();
        mutate(doc);
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    };
    bad([](json& d) { d["typo"] = 1; });
    bad([](json& d) { d.erase("synthetic"); });
    bad([](json& d) { d["annotators"] = json::array(); });
    bad([](json& d) { d["annotators"].push_back(d["annotators"][0]); });
    bad([](json& d) { d["annotators"][0]["type"] = "oracle"; });
    bad([](json& d) { d["annotators"][0]["error_spread"] = {1, 2}; });
    bad([](json& d) { d["subset"]["fraction"] = 0; });
    bad([](json& d) { d["subset"]["fraction"] = 1.5; });
    bad([](json& d) { d["generation"]["temperature"] = -1; });
    bad([](json& d) { d["generation"]["max_tokens"] = 0; });
    bad([](json& d) { d["sensitivity"]["mode"] = "both"; });
    bad([](json& d) { d["synthetic"]["label_prior"] = {1, 2}; });
    bad([](json& d) { d["tasks"] = json::array(); });
    bad([](json& d) { d["subset"]["seed"] = "x"; });
    CHECK_THROWS(parse_config(json::array()));
}

TEST_CASE("hash follows the document") {
    auto a = parse_config(minimal());
    auto b = parse_config(minimal());
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    auto doc = minimal();
    doc["subset"]["seed"] = 5;
    CHECK(parse_config(doc).hash() != a.hash());
}

TEST_CASE("load from file resolves relative paths") {
    testutil::TempDir dir;
    {
        std::ofstream out(dir / "run.json");
        out << R"({"corpus": "data/c.jsonl", "annotators": [{"id": "a"}], "output_dir": "o"})";
    }
    auto c = load_config(dir / "run.json");
    CHECK(c.corpus == dir / "data/c.jsonl");
    CHECK(c.output_dir == dir / "o");
    {
        std::ofstream out(dir / "bad.json");
        out << "{";
    }
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

}
