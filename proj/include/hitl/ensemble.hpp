#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hitl/annotators.hpp"
#include "hitl/types.hpp"

namespace hitl {

struct EnsembleRecord {
    UnitId unit_id;
    TaskKind task = TaskKind::Quality;
    // Empty only when no annotator produced a valid prediction.
    std::optional<Label> aggregated_label;
    double mean_confidence = 0.0;
    double confidence_sd = 0.0;  // population SD
    std::vector<AnnotatorPrediction> contributing;
    // Number of annotators queried; may exceed contributing.size() when some failed.
    std::size_t ensemble_size = 0;
};

// Majority vote; ties go to the label whose voters have the higher summed
// confidence, then to the lower label. `ensemble_size` defaults to the number
// of predictions.
EnsembleRecord aggregate(std::span<const AnnotatorPrediction> predictions,
                         std::size_t ensemble_size = 0);

// Placeholder for a unit where every annotator failed.
EnsembleRecord unannotated_record(UnitId unit_id, TaskKind task, std::size_t ensemble_size);

struct ThresholdPair {
    double confidence_threshold = 0.0;
    double sd_threshold = 0.0;

    ThresholdPair() = default;
    ThresholdPair(double confidence, double sd);

    friend bool operator==(const ThresholdPair&, const ThresholdPair&) = default;
};

enum class HitlDecision { AutoAccept, FlagHighVariance, FlagLowConfidence, FlagInsufficientPredictions };

std::string_view to_string(HitlDecision d);
HitlDecision parse_decision(std::string_view name);
constexpr bool is_flagged(HitlDecision d) { return d != HitlDecision::AutoAccept; }

HitlDecision decide(const EnsembleRecord& record, const ThresholdPair& thresholds);

enum class LabelSource { Model, Human, Pending };

std::string_view to_string(LabelSource s);
LabelSource parse_source(std::string_view name);

struct FinalLabel {
    UnitId unit_id;
    TaskKind task = TaskKind::Quality;
    std::optional<Label> aggregated_label;
    double mean_confidence = 0.0;
    double confidence_sd = 0.0;
    HitlDecision decision = HitlDecision::AutoAccept;
    std::optional<Label> final_label;  // empty while pending
    LabelSource source = LabelSource::Model;

    friend bool operator==(const FinalLabel&, const FinalLabel&) = default;
};

struct FinalLabelSet {
    std::vector<FinalLabel> entries;

    std::size_t flagged() const;
    std::size_t pending() const;
    // nullopt for an empty set.
    std::optional<double> her() const;
};

using GoldProvider = std::function<std::optional<Label>(const UnitId&, TaskKind)>;

// Accepted units keep the aggregated label; flagged units take the label from
// `gold`, or stay Pending when it has none.
FinalLabelSet apply_hitl(std::span<const EnsembleRecord> records, const ThresholdPair& thresholds,
                         const GoldProvider& gold);

// Line-delimited records {unit_id, task, aggregated_label, mean_confidence,
// confidence_sd, decision, final_label, source}.
std::string serialize_labels(const FinalLabelSet& labels);
FinalLabelSet parse_labels(std::istream& in);

}  // namespace hitl
