#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hitl/ensemble.hpp"
#include "hitl/metrics.hpp"

namespace hitl {

inline constexpr double kDefaultKwMin = 0.7;
inline constexpr double kConfidenceStep = 5.0;
inline constexpr double kSdStep = 2.0;

struct ObservedRange {
    double min = 0.0;
    double max = 0.0;
};

// Multiples of `step` in [ceil_step(min), max], plus max itself when it is not
// already on the grid.
std::vector<double> confidence_axis(ObservedRange conf);
// Multiples of `step` in [floor_step(min), max], plus max itself.
std::vector<double> sd_axis(ObservedRange sd);

// Cartesian product of the two axes, confidence-major.
std::vector<ThresholdPair> enumerate_grid(ObservedRange conf, ObservedRange sd);

struct CalibrationPoint {
    ThresholdPair thresholds;
    double kw = 0.0;
    double human_effort = 0.0;  // flagged / total
    std::size_t flagged = 0;
    std::size_t total = 0;
    metrics::MetricsReport metrics;
    bool on_front = false;
};

// Runs the HITL rules with gold substitution and scores the final labels
// against gold. Every record needs a gold label.
CalibrationPoint evaluate_pair(const ThresholdPair& pair, std::span<const EnsembleRecord> records,
                               const GoldProvider& gold);

// p dominates q iff p.kw >= q.kw and p.effort <= q.effort with one strict.
bool dominates(const CalibrationPoint& p, const CalibrationPoint& q);

// Indices of the non-dominated points, in input order. Points sharing both
// coordinates collapse to the one with the lowest confidence threshold, then
// the lowest sd threshold.
std::vector<std::size_t> pareto_front(std::span<const CalibrationPoint> points);

struct Selection {
    std::size_t index = 0;  // into the span passed to select_best
    ThresholdPair thresholds;
    bool meets_constraint = false;
    std::string warning;
};

// Minimum-effort front point with kw >= kw_min (ties: higher kw, lower
// confidence threshold, lower sd threshold). Falls back to the maximum-kw
// point with a warning when none qualifies.
Selection select_best(std::span<const CalibrationPoint> front, double kw_min);

struct CalibrationOutcome {
    TaskKind task = TaskKind::Quality;
    ObservedRange observed_confidence;
    ObservedRange observed_sd;
    std::vector<CalibrationPoint> points;
    std::vector<std::size_t> front;  // indices into points
    std::size_t selected_index = 0;
    ThresholdPair selected;
    double kw_min = kDefaultKwMin;
    bool meets_constraint = false;
    std::string warning;
    std::size_t subset_units = 0;
    double subset_fraction = 0.0;
    std::uint64_t subset_seed = 0;
};

ObservedRange observed_confidence(std::span<const EnsembleRecord> records);
ObservedRange observed_sd(std::span<const EnsembleRecord> records);

// Grid enumeration, evaluation of every pair (in parallel, reduced in grid
// order), Pareto front and selection.
CalibrationOutcome calibrate(TaskKind task, std::span<const EnsembleRecord> records,
                             const GoldProvider& gold, double kw_min = kDefaultKwMin);

}  // namespace hitl
