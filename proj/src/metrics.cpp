#include "hitl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace hitl::metrics {

namespace {

void require_aligned(std::span<const Label> predicted, std::span<const Label> gold,
                     std::size_t min_len) {
    if (predicted.size() != gold.size())
        throw InvariantError("length mismatch: " + std::to_string(predicted.size()) +
                             " predictions vs " + std::to_string(gold.size()) + " gold labels");
    if (predicted.size() < min_len)
        throw InvariantError("need at least " + std::to_string(min_len) + " labels");
}

void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw InvariantError("empty confusion matrix");
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

std::int64_t ConfusionMatrix::row_sum(std::size_t row) const {
    std::int64_t s = 0;
    for (auto v : counts_[row]) s += v;
    return s;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t col) const {
    std::int64_t s = 0;
    for (const auto& row : counts_) s += row[col];
    return s;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (std::size_t r = 0; r < kNumLabels; ++r) s += row_sum(r);
    return s;
}

ConfusionMatrix ConfusionMatrix::transposed() const {
    ConfusionMatrix t;
    for (std::size_t r = 0; r < kNumLabels; ++r)
        for (std::size_t c = 0; c < kNumLabels; ++c) t.counts_[c][r] = counts_[r][c];
    return t;
}

ConfusionMatrix confusion_matrix(std::span<const Label> predicted, std::span<const Label> gold) {
    require_aligned(predicted, gold, 1);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
    return cm;
}

double quadratic_weighted_kappa(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    const double n = static_cast<double>(cm.total());
    constexpr double denom = static_cast<double>((kNumLabels - 1) * (kNumLabels - 1));

    std::array<double, kNumLabels> row_marg{}, col_marg{};
    for (std::size_t i = 0; i < kNumLabels; ++i) {
        row_marg[i] = static_cast<double>(cm.row_sum(i)) / n;
        col_marg[i] = static_cast<double>(cm.col_sum(i)) / n;
    }

    double observed = 0.0, expected = 0.0;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
        for (std::size_t j = 0; j < kNumLabels; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = d * d / denom;
            observed += w * static_cast<double>(cm.cell(i, j)) / n;
            expected += w * row_marg[i] * col_marg[j];
        }
    }
    if (expected == 0.0) return observed == 0.0 ? 1.0 : 0.0;
    return 1.0 - observed / expected;
}

ClassScores class_scores(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    ClassScores s;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
        const double tp = static_cast<double>(cm.cell(k, k));
        s.precision[k] = safe_ratio(tp, static_cast<double>(cm.col_sum(k)));
        s.recall[k] = safe_ratio(tp, static_cast<double>(cm.row_sum(k)));
        const double pr = s.precision[k] + s.recall[k];
        s.f1[k] = pr > 0.0 ? 2.0 * s.precision[k] * s.recall[k] / pr : 0.0;
    }
    return s;
}

namespace {
double mean_of(const std::array<double, kNumLabels>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / kNumLabels;
}
}  // namespace

double macro_precision(const ConfusionMatrix& cm) { return mean_of(class_scores(cm).precision); }

double macro_f1(const ConfusionMatrix& cm) { return mean_of(class_scores(cm).f1); }

double mae(std::span<const Label> predicted, std::span<const Label> gold) {
    require_aligned(predicted, gold, 1);
    double s = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i)
        s += std::abs(predicted[i].value() - gold[i].value());
    return s / static_cast<double>(gold.size());
}

std::optional<double> pearson(std::span<const Label> predicted, std::span<const Label> gold) {
    require_aligned(predicted, gold, 2);
    const double n = static_cast<double>(gold.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        mx += predicted[i].value();
        my += gold[i].value();
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const double dx = predicted[i].value() - mx;
        const double dy = gold[i].value() - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> cwa(std::span<const Outcome> outcomes) {
    if (outcomes.empty()) throw InvariantError("cwa needs at least one outcome");
    double correct = 0.0, all = 0.0;
    for (const auto& o : outcomes) {
        if (o.confidence < 0.0) throw RangeError("negative confidence in cwa");
        all += o.confidence;
        if (o.correct) correct += o.confidence;
    }
    if (all == 0.0) return std::nullopt;
    return correct / all;
}

double her(std::int64_t flagged, std::int64_t total) {
    if (total <= 0) throw InvariantError("her needs a positive total");
    if (flagged < 0 || flagged > total)
        throw RangeError("flagged count " + std::to_string(flagged) + " outside [0, " +
                         std::to_string(total) + "]");
    return (1.0 - static_cast<double>(flagged) / static_cast<double>(total)) * 100.0;
}

double entropy(std::span<const Label> labels) {
    if (labels.empty()) throw InvariantError("entropy of an empty label set");
    std::array<std::size_t, kNumLabels> counts{};
    for (auto l : labels) ++counts[l.index()];
    const double n = static_cast<double>(labels.size());
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    // -sum p ln p is exactly zero for a single class but can round to -0.0.
    return h <= 0.0 ? 0.0 : h;
}

double label_sd(std::span<const Label> labels) {
    if (labels.empty()) throw InvariantError("sd of an empty label set");
    const double n = static_cast<double>(labels.size());
    double mean = 0.0;
    for (auto l : labels) mean += l.value();
    mean /= n;
    double ss = 0.0;
    for (auto l : labels) ss += (l.value() - mean) * (l.value() - mean);
    return std::sqrt(ss / n);
}

MetricsReport evaluate(std::span<const Label> predicted, std::span<const Label> gold,
                       std::span<const double> confidences) {
    MetricsReport r;
    r.confusion = confusion_matrix(predicted, gold);
    r.count = gold.size();
    r.per_class = class_scores(r.confusion);
    r.macro_precision = macro_precision(r.confusion);
    r.macro_f1 = macro_f1(r.confusion);
    r.mae = mae(predicted, gold);
    r.kw = quadratic_weighted_kappa(r.confusion);
    if (gold.size() >= 2) r.pearson = pearson(predicted, gold);
    if (!confidences.empty()) {
        if (confidences.size() != gold.size())
            throw InvariantError("confidence vector length mismatch");
        std::vector<Outcome> outcomes(gold.size());
        for (std::size_t i = 0; i < gold.size(); ++i)
            outcomes[i] = {predicted[i] == gold[i], confidences[i]};
        r.cwa = cwa(outcomes);
    }
    return r;
}

SensitivityStats sensitivity_report(std::span<const RepeatedLabels> cells) {
    SensitivityStats stats;
    if (cells.empty()) return stats;
    const std::size_t runs = cells.front().labels.size();
    if (runs < 2) throw InvariantError("sensitivity needs at least 2 runs per unit");

    struct Acc {
        std::size_t units = 0;
        double entropy = 0.0;
        double sd = 0.0;
        double max_entropy = 0.0;
    };
    std::map<std::pair<std::string, TaskKind>, Acc> groups;
    for (const auto& cell : cells) {
        if (cell.labels.size() != runs)
            throw InvariantError("ragged runs: unit " + cell.unit_id + " (" + cell.annotator_id +
                                 ", " + std::string(to_string(cell.task)) + ") has " +
                                 std::to_string(cell.labels.size()) + " runs, expected " +
                                 std::to_string(runs));
        auto& acc = groups[{cell.annotator_id, cell.task}];
        const double h = entropy(cell.labels);
        ++acc.units;
        acc.entropy += h;
        acc.sd += label_sd(cell.labels);
        acc.max_entropy = std::max(acc.max_entropy, h);
    }
    for (const auto& [key, acc] : groups) {
        SensitivityRow row;
        row.annotator_id = key.first;
        row.task = key.second;
        row.units = acc.units;
        row.runs = runs;
        row.mean_entropy = acc.entropy / static_cast<double>(acc.units);
        row.mean_sd = acc.sd / static_cast<double>(acc.units);
        row.max_entropy = acc.max_entropy;
        stats.rows.push_back(std::move(row));
    }
    return stats;
}

}  // namespace hitl::metrics
