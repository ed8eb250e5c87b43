#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "unit/test_util.hpp"

using json = nlohmann::json;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(HITL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const testutil::TempDir& dir, json extra = json::object()) {
    json doc = json::parse(R"({
        "synthetic": {"units": 80, "seed": 2},
        "tasks": ["quality"],
        "annotators": [
            {"id": "m1", "hit_rate": 0.6, "seed": 1},
            {"id": "m2", "hit_rate": 0.5, "seed": 2}
        ],
        "subset": {"fraction": 0.25, "seed": 1},
        "output_dir": "out"
    })");
    doc.update(extra);
    const auto path = dir / "run.json";
    std::ofstream(path) << doc.dump(2);
    return path.string();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("stage commands") {
    testutil::TempDir dir;
    const auto cfg = write_config(dir);
    CHECK(run("calibrate -c " + cfg) == 0);
    CHECK(std::filesystem::exists(dir / "out/calibration/quality.report"));
    CHECK(run("apply -c " + cfg) == 0);
    CHECK(std::filesystem::exists(dir / "out/final/quality.labels"));
    CHECK(run("apply -c " + cfg + " --confidence 80 --sd 5") == 0);
    CHECK(run("apply -c " + cfg + " --confidence 80") == 2);
    CHECK(run("sensitivity -c " + cfg + " --mode temperature") == 0);
    CHECK(std::filesystem::exists(dir / "out/sensitivity/temperature.report"));
    CHECK(run("report -c " + cfg) == 0);
}

TEST_CASE("pending reviews exit with 3") {
    testutil::TempDir dir;
    const auto cfg = write_config(dir, {{"simulate_review", false}});
    CHECK(run("apply -c " + cfg + " --confidence 100 --sd 0") == 3);
    CHECK(run("report -c " + cfg) == 3);
}

TEST_CASE("configuration errors exit with 2") {
    testutil::TempDir dir;
    CHECK(run("") == 2);
    CHECK(run("calibrate") == 2);
    CHECK(run("calibrate -c " + (dir / "missing.json").string()) == 2);
    const auto cfg = write_config(dir, {{"bogus", 1}});
    CHECK(run("calibrate -c " + cfg) == 2);
    const auto ok = write_config(dir);
    CHECK(run("apply -c " + ok) == 2);
}

TEST_CASE("convert and synth") {
    testutil::TempDir dir;
    const auto synth = (dir / "s.jsonl").string();
    CHECK(run("synth " + synth + " --units 40 --seed 3") == 0);
    CHECK(run("convert " + synth + " " + (dir / "c.jsonl").string()) == 0);
    CHECK(run("convert " + std::string(HITL_FIXTURE_DIR) + "/desk.tsv " + (dir / "d.jsonl").string()) == 0);
    CHECK(std::filesystem::file_size(dir / "d.jsonl") > 0);
}

}
