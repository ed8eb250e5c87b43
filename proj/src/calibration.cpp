#include "hitl/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace hitl {

namespace {

constexpr double kGridEps = 1e-9;

std::vector<double> axis(double lo, double hi, double step) {
    std::vector<double> out;
    for (double k = lo / step; k * step <= hi + kGridEps; k += 1.0) out.push_back(k * step);
    if (out.empty() || std::abs(out.back() - hi) > kGridEps) out.push_back(hi);
    return out;
}

void check_range(ObservedRange r, const char* what) {
    if (!(r.min <= r.max))
        throw RangeError(std::string("inverted ") + what + " range [" + std::to_string(r.min) +
                         ", " + std::to_string(r.max) + "]");
}

}  // namespace

std::vector<double> confidence_axis(ObservedRange conf) {
    check_range(conf, "confidence");
    return axis(std::ceil(conf.min / kConfidenceStep - kGridEps) * kConfidenceStep, conf.max,
                kConfidenceStep);
}

std::vector<double> sd_axis(ObservedRange sd) {
    check_range(sd, "sd");
    return axis(std::floor(sd.min / kSdStep + kGridEps) * kSdStep, sd.max, kSdStep);
}

std::vector<ThresholdPair> enumerate_grid(ObservedRange conf, ObservedRange sd) {
    const auto cs = confidence_axis(conf);
    const auto ss = sd_axis(sd);
    std::vector<ThresholdPair> out;
    out.reserve(cs.size() * ss.size());
    for (double c : cs)
        for (double s : ss) out.emplace_back(std::clamp(c, 0.0, 100.0), std::max(0.0, s));
    return out;
}

CalibrationPoint evaluate_pair(const ThresholdPair& pair, std::span<const EnsembleRecord> records,
                               const GoldProvider& gold) {
    if (records.empty()) throw InvariantError("calibration needs at least one record");
    const auto final = apply_hitl(records, pair, gold);

    std::vector<Label> predicted, truth;
    std::vector<double> confidences;
    predicted.reserve(records.size());
    truth.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto g = gold(records[i].unit_id, records[i].task);
        if (!g) throw InvariantError("no gold label for calibration unit " + records[i].unit_id);
        const auto& e = final.entries[i];
        predicted.push_back(*e.final_label);  // gold exists, so nothing is pending
        truth.push_back(*g);
        confidences.push_back(e.mean_confidence);
    }

    CalibrationPoint p;
    p.thresholds = pair;
    p.metrics = metrics::evaluate(predicted, truth, confidences);
    p.flagged = final.flagged();
    p.total = records.size();
    p.metrics.her = metrics::her(static_cast<std::int64_t>(p.flagged),
                                 static_cast<std::int64_t>(p.total));
    p.kw = p.metrics.kw;
    p.human_effort = static_cast<double>(p.flagged) / static_cast<double>(p.total);
    return p;
}

bool dominates(const CalibrationPoint& p, const CalibrationPoint& q) {
    return p.kw >= q.kw && p.human_effort <= q.human_effort &&
           (p.kw > q.kw || p.human_effort < q.human_effort);
}

std::vector<std::size_t> pareto_front(std::span<const CalibrationPoint> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& p = points[a];
        const auto& q = points[b];
        if (p.human_effort != q.human_effort) return p.human_effort < q.human_effort;
        if (p.kw != q.kw) return p.kw > q.kw;
        if (p.thresholds.confidence_threshold != q.thresholds.confidence_threshold)
            return p.thresholds.confidence_threshold < q.thresholds.confidence_threshold;
        if (p.thresholds.sd_threshold != q.thresholds.sd_threshold)
            return p.thresholds.sd_threshold < q.thresholds.sd_threshold;
        return a < b;
    });

    // Sweep by increasing effort. The head of each effort block has the block's
    // best kw; it survives iff it beats every point of strictly lower effort.
    std::vector<std::size_t> front;
    double best_kw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < order.size();) {
        const auto& head = points[order[i]];
        if (head.kw > best_kw) front.push_back(order[i]);
        best_kw = std::max(best_kw, head.kw);
        std::size_t j = i;
        while (j < order.size() && points[order[j]].human_effort == head.human_effort) ++j;
        i = j;
    }
    std::sort(front.begin(), front.end());
    return front;
}

Selection select_best(std::span<const CalibrationPoint> front, double kw_min) {
    if (front.empty()) throw InvariantError("select_best needs a non-empty front");
    auto tie_break = [&](std::size_t a, std::size_t b) {
        const auto& p = front[a].thresholds;
        const auto& q = front[b].thresholds;
        if (p.confidence_threshold != q.confidence_threshold)
            return p.confidence_threshold < q.confidence_threshold;
        return p.sd_threshold < q.sd_threshold;
    };

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < front.size(); ++i) {
        if (front[i].kw < kw_min) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& p = front[i];
        const auto& b = front[*best];
        if (p.human_effort != b.human_effort) {
            if (p.human_effort < b.human_effort) best = i;
        } else if (p.kw != b.kw) {
            if (p.kw > b.kw) best = i;
        } else if (tie_break(i, *best)) {
            best = i;
        }
    }
    if (best) return {*best, front[*best].thresholds, true, {}};

    std::size_t top = 0;
    for (std::size_t i = 1; i < front.size(); ++i) {
        const auto& p = front[i];
        const auto& b = front[top];
        if (p.kw != b.kw) {
            if (p.kw > b.kw) top = i;
        } else if (p.human_effort != b.human_effort) {
            if (p.human_effort < b.human_effort) top = i;
        } else if (tie_break(i, top)) {
            top = i;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "no front point reaches kw >= %.3f; selected the maximum-kw point (kw %.4f)",
                  kw_min, front[top].kw);
    return {top, front[top].thresholds, false, buf};
}

ObservedRange observed_confidence(std::span<const EnsembleRecord> records) {
    ObservedRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& rec : records) {
        if (!rec.aggregated_label) continue;
        r.min = std::min(r.min, rec.mean_confidence);
        r.max = std::max(r.max, rec.mean_confidence);
    }
    if (r.min > r.max) throw InvariantError("no annotated records to observe confidence from");
    return r;
}

ObservedRange observed_sd(std::span<const EnsembleRecord> records) {
    ObservedRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& rec : records) {
        if (!rec.aggregated_label) continue;
        r.min = std::min(r.min, rec.confidence_sd);
        r.max = std::max(r.max, rec.confidence_sd);
    }
    if (r.min > r.max) throw InvariantError("no annotated records to observe sd from");
    return r;
}

CalibrationOutcome calibrate(TaskKind task, std::span<const EnsembleRecord> records,
                             const GoldProvider& gold, double kw_min) {
    CalibrationOutcome out;
    out.task = task;
    out.kw_min = kw_min;
    out.observed_confidence = observed_confidence(records);
    out.observed_sd = observed_sd(records);
    const auto grid = enumerate_grid(out.observed_confidence, out.observed_sd);

    out.points.resize(grid.size());
    const std::size_t workers =
        std::min<std::size_t>(grid.size(), std::max(1u, std::thread::hardware_concurrency()));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i; (i = next.fetch_add(1)) < grid.size();)
                        out.points[i] = evaluate_pair(grid[i], records, gold);
                } catch (...) {
                    errors[w] = std::current_exception();
                    next.store(grid.size());
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    out.front = pareto_front(out.points);
    for (auto i : out.front) out.points[i].on_front = true;

    std::vector<CalibrationPoint> front_points;
    for (auto i : out.front) front_points.push_back(out.points[i]);
    const auto sel = select_best(front_points, kw_min);
    out.selected_index = out.front[sel.index];
    out.selected = sel.thresholds;
    out.meets_constraint = sel.meets_constraint;
    out.warning = sel.warning;
    out.subset_units = records.size();
    return out;
}

}  // namespace hitl
