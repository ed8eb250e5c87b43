#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hitl/types.hpp"

namespace hitl::metrics {

// 5x5 counts, rows = gold (T1..T5), columns = predicted (P1..P5). Absent classes
// stay as zero rows/columns so macro averages always run over all five.
class ConfusionMatrix {
public:
    using Grid = std::array<std::array<std::int64_t, kNumLabels>, kNumLabels>;

    void add(Label gold, Label predicted) { ++counts_[gold.index()][predicted.index()]; }

    std::int64_t at(Label gold, Label predicted) const {
        return counts_[gold.index()][predicted.index()];
    }
    std::int64_t cell(std::size_t row, std::size_t col) const { return counts_[row][col]; }
    std::int64_t row_sum(std::size_t row) const;
    std::int64_t col_sum(std::size_t col) const;
    std::int64_t total() const;

    const Grid& grid() const { return counts_; }
    ConfusionMatrix transposed() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    Grid counts_{};
};

struct ClassScores {
    std::array<double, kNumLabels> precision{};
    std::array<double, kNumLabels> recall{};
    std::array<double, kNumLabels> f1{};
};

ConfusionMatrix confusion_matrix(std::span<const Label> predicted, std::span<const Label> gold);

// Cohen's weighted kappa with w_ij = (i-j)^2 / (k-1)^2. When the expected
// disagreement is zero the result is 1.0 if observed disagreement is also zero,
// else 0.0.
double quadratic_weighted_kappa(const ConfusionMatrix& cm);

ClassScores class_scores(const ConfusionMatrix& cm);
double macro_precision(const ConfusionMatrix& cm);
double macro_f1(const ConfusionMatrix& cm);

double mae(std::span<const Label> predicted, std::span<const Label> gold);
// nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const Label> predicted, std::span<const Label> gold);

struct Outcome {
    bool correct = false;
    double confidence = 0.0;
};

// Confidence-weighted accuracy: confidence mass on correct predictions over all
// confidence mass. nullopt when the total mass is zero.
std::optional<double> cwa(std::span<const Outcome> outcomes);

// Human effort reduction, in percent.
double her(std::int64_t flagged, std::int64_t total);

// Shannon entropy (natural log) of the empirical label distribution.
double entropy(std::span<const Label> labels);
// Population standard deviation of the label values.
double label_sd(std::span<const Label> labels);

struct MetricsReport {
    std::size_t count = 0;
    double macro_precision = 0.0;
    double macro_f1 = 0.0;
    double mae = 0.0;
    double kw = 0.0;
    std::optional<double> pearson;
    std::optional<double> cwa;
    std::optional<double> her;
    ConfusionMatrix confusion;
    ClassScores per_class;
};

// Full report over aligned vectors. `confidences` may be empty, in which case
// CWA is left undefined.
MetricsReport evaluate(std::span<const Label> predicted, std::span<const Label> gold,
                       std::span<const double> confidences = {});

// One (annotator, task, unit) cell of a repeated-run sweep.
struct RepeatedLabels {
    std::string annotator_id;
    TaskKind task = TaskKind::Quality;
    UnitId unit_id;
    std::vector<Label> labels;
};

struct SensitivityRow {
    std::string annotator_id;
    TaskKind task = TaskKind::Quality;
    std::size_t units = 0;
    std::size_t runs = 0;
    double mean_entropy = 0.0;
    double mean_sd = 0.0;
    double max_entropy = 0.0;
};

struct SensitivityStats {
    std::vector<SensitivityRow> rows;  // sorted by (annotator_id, task)
};

// Requires every cell to carry the same number of runs r >= 2.
SensitivityStats sensitivity_report(std::span<const RepeatedLabels> cells);

}  // namespace hitl::metrics
