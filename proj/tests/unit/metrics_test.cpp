#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hitl/metrics.hpp"
#include "oracles/naive.hpp"

using namespace hitl;
using namespace hitl::metrics;

namespace {

std::vector<Label> labels(std::initializer_list<int> xs) {
    std::vector<Label> out;
    for (int x : xs) out.emplace_back(x);
    return out;
}

std::vector<int> ints(const std::vector<Label>& ls) {
    std::vector<int> out;
    for (auto l : ls) out.push_back(l.value());
    return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion matrix: rows are gold, columns predicted") {
    auto cm = confusion_matrix(labels({1, 2, 3, 4, 5}), labels({1, 2, 3, 4, 5}));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(cm.cell(i, j) == (i == j ? 1 : 0));

    auto one = confusion_matrix(labels({2}), labels({1}));
    CHECK(one.at(Label(1), Label(2)) == 1);
    CHECK(one.total() == 1);
    CHECK(one.row_sum(0) == 1);
    CHECK(one.col_sum(1) == 1);
}

TEST_CASE("confusion matrix matches a brute-force tally") {
    std::mt19937 gen(50);
    std::uniform_int_distribution<int> d(1, 5);
    std::vector<Label> p, g;
    for (int i = 0; i < 50; ++i) {
        p.emplace_back(d(gen));
        g.emplace_back(d(gen));
    }
    auto cm = confusion_matrix(p, g);
    for (int t = 1; t <= 5; ++t)
        for (int q = 1; q <= 5; ++q) {
            int n = 0;
            for (std::size_t i = 0; i < p.size(); ++i) n += g[i].value() == t && p[i].value() == q;
            CHECK(cm.at(Label(t), Label(q)) == n);
        }
}

TEST_CASE("confusion matrix rejects misaligned input") {
    CHECK_THROWS_AS(confusion_matrix(labels({1, 2}), labels({1})), InvariantError);
    CHECK_THROWS_AS(confusion_matrix({}, {}), InvariantError);
}

TEST_CASE("kappa anchors") {
    CHECK(quadratic_weighted_kappa(confusion_matrix(labels({1, 2, 3, 4, 5, 2}),
                                                    labels({1, 2, 3, 4, 5, 2}))) == 1.0);
    CHECK(quadratic_weighted_kappa(confusion_matrix(labels({2, 1}), labels({1, 2}))) == -1.0);
    // Every unit gold=pred=3: expected disagreement is zero.
    CHECK(quadratic_weighted_kappa(confusion_matrix(labels({3, 3, 3}), labels({3, 3, 3}))) == 1.0);
    // Both raters constant but different: observed disagreement without expected mass.
    CHECK(quadratic_weighted_kappa(confusion_matrix(labels({4, 4}), labels({3, 3}))) == 0.0);
    CHECK_THROWS_AS(quadratic_weighted_kappa(ConfusionMatrix{}), InvariantError);
}

TEST_CASE("kappa is symmetric in the two raters") {
    auto p = labels({1, 2, 2, 3, 5, 4, 4});
    auto g = labels({2, 2, 3, 3, 4, 4, 5});
    CHECK(quadratic_weighted_kappa(confusion_matrix(p, g)) ==
          doctest::Approx(quadratic_weighted_kappa(confusion_matrix(g, p))).epsilon(1e-12));
}

TEST_CASE("macro precision and F1 run over all five classes") {
    auto perfect = confusion_matrix(labels({1, 2, 3, 4, 5}), labels({1, 2, 3, 4, 5}));
    CHECK(macro_precision(perfect) == 1.0);
    CHECK(macro_f1(perfect) == 1.0);

    // Class 1 is never predicted: its precision counts as 0.
    auto cm = confusion_matrix(labels({2, 2, 3, 4, 5}), labels({1, 2, 3, 4, 5}));
    const auto s = class_scores(cm);
    CHECK(s.precision[0] == 0.0);
    CHECK(s.precision[1] == 0.5);
    CHECK(macro_precision(cm) == doctest::Approx((0 + 0.5 + 1 + 1 + 1) / 5.0));

    // Only two classes present; the other three contribute zeros.
    auto sparse = confusion_matrix(labels({1, 2}), labels({1, 2}));
    CHECK(macro_f1(sparse) == doctest::Approx(0.4));
}

TEST_CASE("per-class scores match a hand tally on a 30-unit fixture") {
    std::mt19937 gen(30);
    std::uniform_int_distribution<int> d(1, 5);
    std::vector<Label> p, g;
    for (int i = 0; i < 30; ++i) {
        g.emplace_back(d(gen));
        p.emplace_back(d(gen) <= 2 ? g.back().value() : d(gen));
    }
    const auto s = class_scores(confusion_matrix(p, g));
    const auto o = oracle::per_class(ints(p), ints(g));
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK(s.precision[c] == doctest::Approx(o.precision[c]).epsilon(1e-12));
        CHECK(s.recall[c] == doctest::Approx(o.recall[c]).epsilon(1e-12));
        CHECK(s.f1[c] == doctest::Approx(o.f1[c]).epsilon(1e-12));
    }
}

TEST_CASE("mae and pearson") {
    CHECK(mae(labels({1, 3}), labels({2, 5})) == 1.5);
    CHECK(mae(labels({4, 4}), labels({4, 4})) == 0.0);
    CHECK(*pearson(labels({1, 2, 5}), labels({1, 2, 5})) == doctest::Approx(1.0));
    CHECK_FALSE(pearson(labels({3, 3, 3}), labels({1, 2, 3})));
    CHECK_FALSE(pearson(labels({1, 2, 3}), labels({4, 4, 4})));
    CHECK(*pearson(labels({1, 2, 3}), labels({3, 2, 1})) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(pearson(labels({1}), labels({2})), InvariantError);
}

TEST_CASE("cwa") {
    std::vector<Outcome> mixed{{true, 90}, {true, 70}, {false, 80}};
    CHECK(*cwa(mixed) == doctest::Approx(160.0 / 240.0));
    std::vector<Outcome> right{{true, 10}, {true, 99}};
    CHECK(*cwa(right) == 1.0);
    std::vector<Outcome> wrong{{false, 10}, {false, 99}};
    CHECK(*cwa(wrong) == 0.0);
    std::vector<Outcome> zero{{true, 0}, {false, 0}};
    CHECK_FALSE(cwa(zero));
    std::vector<Outcome> negative{{true, -1}};
    CHECK_THROWS_AS(cwa(negative), RangeError);
}

TEST_CASE("her") {
    CHECK(her(0, 10) == 100.0);
    CHECK(her(10, 10) == 0.0);
    CHECK(her(55, 100) == doctest::Approx(45.0));
    CHECK(her(26, 100) == doctest::Approx(74.0));
    CHECK_THROWS_AS(her(0, 0), InvariantError);
    CHECK_THROWS_AS(her(11, 10), RangeError);
}

TEST_CASE("entropy and label sd") {
    CHECK(entropy(labels({5, 5, 5})) == 0.0);
    CHECK(label_sd(labels({5, 5, 5})) == 0.0);
    CHECK(entropy(labels({3, 4, 5})) == doctest::Approx(std::log(3.0)));
    CHECK(entropy(labels({4, 4, 5})) == doctest::Approx(0.6365141682948128));
    CHECK(label_sd(labels({4, 4, 5})) == doctest::Approx(0.4714045207910317));
}

TEST_CASE("evaluate bundles every metric") {
    auto p = labels({1, 2, 3, 4, 4});
    auto g = labels({1, 2, 3, 5, 4});
    std::vector<double> c{90, 80, 70, 60, 50};
    auto r = evaluate(p, g, c);
    CHECK(r.count == 5);
    CHECK(r.mae == doctest::Approx(0.2));
    CHECK(r.kw == doctest::Approx(oracle::kappa_quadratic(ints(p), ints(g))));
    CHECK(*r.cwa == doctest::Approx(290.0 / 350.0));
    CHECK_FALSE(r.her);
    CHECK(r.confusion.total() == 5);
    CHECK_FALSE(evaluate(p, g).cwa);
}

TEST_CASE("random vectors agree with the naive oracle") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = std::uniform_int_distribution<int>(2, 50)(gen);
        std::vector<Label> p, g;
        std::vector<double> c;
        for (int i = 0; i < n; ++i) {
            p.emplace_back(std::uniform_int_distribution<int>(1, 5)(gen));
            g.emplace_back(std::uniform_int_distribution<int>(1, 5)(gen));
            c.push_back(std::uniform_real_distribution<double>(0, 100)(gen));
        }
        auto r = evaluate(p, g, c);
        CHECK(std::abs(r.kw - oracle::kappa_quadratic(ints(p), ints(g))) <= 1e-9);
        CHECK(std::abs(r.macro_precision - oracle::macro_precision(ints(p), ints(g))) <= 1e-9);
        CHECK(std::abs(r.macro_f1 - oracle::macro_f1(ints(p), ints(g))) <= 1e-9);
        CHECK(std::abs(r.mae - oracle::mae(ints(p), ints(g))) <= 1e-9);
        const auto op = oracle::pearson(ints(p), ints(g));
        REQUIRE(r.pearson.has_value() == op.has_value());
        if (op) CHECK(std::abs(*r.pearson - *op) <= 1e-9);
        CHECK(std::abs(*r.cwa - *oracle::cwa(ints(p), ints(g), c)) <= 1e-9);
    }
}

TEST_CASE("sensitivity report") {
    std::vector<RepeatedLabels> cells{
        {"m", TaskKind::Quality, "u1", labels({3, 4, 5})},
        {"m", TaskKind::Quality, "u2", labels({4, 4, 4})},
        {"a", TaskKind::Coverage, "u1", labels({2, 2, 1})},
    };
    auto s = sensitivity_report(cells);
    REQUIRE(s.rows.size() == 2);
    CHECK(s.rows[0].annotator_id == "a");
    CHECK(s.rows[1].annotator_id == "m");
    CHECK(s.rows[1].units == 2);
    CHECK(s.rows[1].runs == 3);
    CHECK(s.rows[1].mean_entropy == doctest::Approx(std::log(3.0) / 2));
    CHECK(s.rows[1].max_entropy == doctest::Approx(std::log(3.0)));
    CHECK(s.rows[1].mean_sd == doctest::Approx(std::sqrt(2.0 / 3.0) / 2));

    std::vector<RepeatedLabels> ragged{{"m", TaskKind::Quality, "u1", labels({3, 4})},
                                       {"m", TaskKind::Quality, "u2", labels({3, 4, 5})}};
    CHECK_THROWS_AS(sensitivity_report(ragged), InvariantError);
    std::vector<RepeatedLabels> single{{"m", TaskKind::Quality, "u1", labels({3})}};
    CHECK_THROWS_AS(sensitivity_report(single), InvariantError);
}

TEST_CASE("deterministic runs give an all-zero report") {
    std::vector<RepeatedLabels> cells;
    for (int u = 0; u < 20; ++u)
        cells.push_back({"det", TaskKind::Quality, "u" + std::to_string(u),
                         labels({u % 5 + 1, u % 5 + 1, u % 5 + 1})});
    auto s = sensitivity_report(cells);
    REQUIRE(s.rows.size() == 1);
    CHECK(s.rows[0].mean_entropy == 0.0);
    CHECK(s.rows[0].mean_sd == 0.0);
    CHECK(s.rows[0].max_entropy == 0.0);
}

}
