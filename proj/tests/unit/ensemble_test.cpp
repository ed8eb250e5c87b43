#include <doctest.h>

#include <random>
#include <sstream>

#include "hitl/ensemble.hpp"

using namespace hitl;

namespace {

std::vector<AnnotatorPrediction> preds(std::initializer_list<std::pair<int, double>> xs,
                                       const UnitId& unit = "u") {
    std::vector<AnnotatorPrediction> out;
    int i = 0;
    for (auto [l, c] : xs)
        out.push_back({"m" + std::to_string(i++), unit, TaskKind::Quality, Label(l), c, "", {}});
    return out;
}

EnsembleRecord record(double mean, double sd, std::size_t n = 4) {
    EnsembleRecord r;
    r.unit_id = "u";
    r.aggregated_label = Label(3);
    r.mean_confidence = mean;
    r.confidence_sd = sd;
    r.contributing = preds({{3, mean}});
    r.contributing.resize(n, r.contributing.front());
    r.ensemble_size = n;
    return r;
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("majority vote with mean and population sd") {
    auto r = aggregate(preds({{5, 90}, {5, 80}, {4, 95}, {3, 70}}));
    CHECK(r.aggregated_label == Label(5));
    CHECK(r.mean_confidence == doctest::Approx(83.75));
    CHECK(r.confidence_sd == doctest::Approx(std::sqrt(368.75 / 4)));
    CHECK(r.confidence_sd == doctest::Approx(9.601).epsilon(1e-3));
    CHECK(r.ensemble_size == 4);
    CHECK(r.contributing.size() == 4);
}

TEST_CASE("singleton") {
    auto r = aggregate(preds({{4, 88}}));
    CHECK(r.aggregated_label == Label(4));
    CHECK(r.mean_confidence == 88.0);
    CHECK(r.confidence_sd == 0.0);
}

TEST_CASE("ties break on summed confidence, then the lower label") {
    CHECK(aggregate(preds({{4, 90}, {5, 95}, {4, 80}, {5, 70}})).aggregated_label == Label(4));
    CHECK(aggregate(preds({{4, 80}, {5, 95}, {4, 80}, {5, 70}})).aggregated_label == Label(5));
    CHECK(aggregate(preds({{2, 50}, {4, 50}})).aggregated_label == Label(2));
    CHECK(aggregate(preds({{4, 50}, {2, 50}})).aggregated_label == Label(2));
}

TEST_CASE("aggregate rejects empty or mixed input") {
    CHECK_THROWS_AS(aggregate({}), InvariantError);
    auto mixed = preds({{4, 90}});
    auto other = preds({{3, 80}}, "v");
    mixed.push_back(other[0]);
    CHECK_THROWS_AS(aggregate(mixed), InvariantError);
}

TEST_CASE("decision rules") {
    const ThresholdPair t(90, 14);
    CHECK(decide(record(92, 10), t) == HitlDecision::AutoAccept);
    CHECK(decide(record(92, 20), t) == HitlDecision::FlagHighVariance);
    CHECK(decide(record(85, 3), t) == HitlDecision::FlagLowConfidence);
    // Low confidence wins over high variance.
    CHECK(decide(record(85, 30), t) == HitlDecision::FlagLowConfidence);
    // Boundary values are accepted.
    CHECK(decide(record(90, 14), t) == HitlDecision::AutoAccept);

    auto lonely = record(99, 0, 1);
    lonely.ensemble_size = 4;
    CHECK(decide(lonely, t) == HitlDecision::FlagInsufficientPredictions);
    auto solo = record(99, 0, 1);  // one-annotator ensemble
    CHECK(decide(solo, t) == HitlDecision::AutoAccept);
    CHECK(decide(unannotated_record("u", TaskKind::Quality, 4), t) ==
          HitlDecision::FlagInsufficientPredictions);
}

TEST_CASE("threshold validation") {
    CHECK_THROWS_AS(ThresholdPair(101, 1), RangeError);
    CHECK_THROWS_AS(ThresholdPair(-1, 1), RangeError);
    CHECK_THROWS_AS(ThresholdPair(50, -0.5), RangeError);
}

TEST_CASE("decision totality and monotonicity") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> conf(0, 100), sd(0, 40);
    for (int i = 0; i < 10000; ++i) {
        auto r = record(conf(gen), sd(gen));
        const ThresholdPair t(conf(gen), sd(gen));
        const auto d = decide(r, t);
        const int fired = (d == HitlDecision::AutoAccept) + (d == HitlDecision::FlagHighVariance) +
                          (d == HitlDecision::FlagLowConfidence) +
                          (d == HitlDecision::FlagInsufficientPredictions);
        CHECK(fired == 1);
        if (is_flagged(d)) {
            const ThresholdPair stricter_conf(std::min(100.0, t.confidence_threshold + conf(gen) / 4),
                                              t.sd_threshold);
            const ThresholdPair stricter_sd(t.confidence_threshold, t.sd_threshold * 0.5);
            CHECK(is_flagged(decide(r, stricter_conf)));
            CHECK(is_flagged(decide(r, stricter_sd)));
        }
    }
}

TEST_CASE("apply_hitl substitutes gold for flagged units") {
    std::vector<EnsembleRecord> rs;
    for (int i = 0; i < 100; ++i) {
        auto r = record(i < 26 ? 50.0 : 95.0, 1.0);
        r.unit_id = "u" + std::to_string(i);
        rs.push_back(r);
    }
    GoldProvider gold = [](const UnitId&, TaskKind) -> std::optional<Label> { return Label(5); };
    auto set = apply_hitl(rs, ThresholdPair(90, 14), gold);
    CHECK(set.flagged() == 26);
    CHECK(*set.her() == doctest::Approx(74.0));
    CHECK(set.pending() == 0);
    CHECK(set.entries[0].final_label == Label(5));
    CHECK(set.entries[0].source == LabelSource::Human);
    CHECK(set.entries[99].final_label == Label(3));
    CHECK(set.entries[99].source == LabelSource::Model);

    auto lax = apply_hitl(rs, ThresholdPair(0, 100), gold);
    CHECK(*lax.her() == 100.0);
    for (const auto& e : lax.entries) CHECK(e.final_label == e.aggregated_label);

    auto no_gold = apply_hitl(rs, ThresholdPair(90, 14), {});
    CHECK(no_gold.pending() == 26);
    CHECK_FALSE(no_gold.entries[0].final_label);
    CHECK_FALSE(FinalLabelSet{}.her());
}

TEST_CASE("label files round trip") {
    std::vector<EnsembleRecord> rs{record(95, 1), record(50, 1),
                                   unannotated_record("x", TaskKind::Quality, 4)};
    rs[1].unit_id = "v";
    auto set = apply_hitl(rs, ThresholdPair(90, 14), {});
    const auto text = serialize_labels(set);
    std::istringstream in(text);
    auto back = parse_labels(in);
    CHECK(back.entries == set.entries);
    CHECK(serialize_labels(back) == text);

    std::istringstream bad("{\"unit_id\":\"u\"}\n");
    CHECK_THROWS_AS(parse_labels(bad), ParseError);
}

}
