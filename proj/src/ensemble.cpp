#include "hitl/ensemble.hpp"

#include <array>
#include <cmath>
#include <istream>

#include <nlohmann/json.hpp>

namespace hitl {

using ojson = nlohmann::ordered_json;

EnsembleRecord aggregate(std::span<const AnnotatorPrediction> predictions,
                         std::size_t ensemble_size) {
    if (predictions.empty()) throw InvariantError("aggregate needs at least one prediction");
    const auto& first = predictions.front();
    std::array<int, kNumLabels> votes{};
    std::array<double, kNumLabels> conf_sum{};
    double total = 0.0;
    for (const auto& p : predictions) {
        if (p.unit_id != first.unit_id || p.task != first.task)
            throw InvariantError("aggregate mixes (" + first.unit_id + ", " +
                                 std::string(to_string(first.task)) + ") with (" + p.unit_id +
                                 ", " + std::string(to_string(p.task)) + ")");
        ++votes[p.label.index()];
        conf_sum[p.label.index()] += p.confidence;
        total += p.confidence;
    }

    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumLabels; ++k) {
        // Strict comparisons keep the lower label on a full tie.
        if (votes[k] > votes[best] || (votes[k] == votes[best] && conf_sum[k] > conf_sum[best]))
            best = k;
    }

    const double n = static_cast<double>(predictions.size());
    const double mean = total / n;
    double ss = 0.0;
    for (const auto& p : predictions) ss += (p.confidence - mean) * (p.confidence - mean);

    EnsembleRecord r;
    r.unit_id = first.unit_id;
    r.task = first.task;
    r.aggregated_label = Label(static_cast<int>(best) + kMinLabel);
    r.mean_confidence = mean;
    r.confidence_sd = std::sqrt(ss / n);
    r.contributing.assign(predictions.begin(), predictions.end());
    r.ensemble_size = ensemble_size == 0 ? predictions.size() : ensemble_size;
    return r;
}

EnsembleRecord unannotated_record(UnitId unit_id, TaskKind task, std::size_t ensemble_size) {
    EnsembleRecord r;
    r.unit_id = std::move(unit_id);
    r.task = task;
    r.ensemble_size = ensemble_size;
    return r;
}

ThresholdPair::ThresholdPair(double confidence, double sd)
    : confidence_threshold(confidence), sd_threshold(sd) {
    if (!(confidence >= 0.0 && confidence <= 100.0))
        throw RangeError("confidence threshold " + std::to_string(confidence) +
                         " outside [0,100]");
    if (!(sd >= 0.0)) throw RangeError("sd threshold must be >= 0");
}

std::string_view to_string(HitlDecision d) {
    switch (d) {
        case HitlDecision::AutoAccept: return "auto_accept";
        case HitlDecision::FlagHighVariance: return "flag_high_variance";
        case HitlDecision::FlagLowConfidence: return "flag_low_confidence";
        case HitlDecision::FlagInsufficientPredictions: return "flag_insufficient_predictions";
    }
    return "unknown";
}

HitlDecision parse_decision(std::string_view name) {
    for (auto d : {HitlDecision::AutoAccept, HitlDecision::FlagHighVariance,
                   HitlDecision::FlagLowConfidence, HitlDecision::FlagInsufficientPredictions})
        if (to_string(d) == name) return d;
    throw ParseError("unknown decision '" + std::string(name) + "'");
}

HitlDecision decide(const EnsembleRecord& record, const ThresholdPair& thresholds) {
    const auto n = record.contributing.size();
    if (!record.aggregated_label || n == 0 || (record.ensemble_size >= 2 && n < 2))
        return HitlDecision::FlagInsufficientPredictions;
    if (record.mean_confidence < thresholds.confidence_threshold)
        return HitlDecision::FlagLowConfidence;
    if (record.confidence_sd > thresholds.sd_threshold) return HitlDecision::FlagHighVariance;
    return HitlDecision::AutoAccept;
}

std::string_view to_string(LabelSource s) {
    switch (s) {
        case LabelSource::Model: return "model";
        case LabelSource::Human: return "human";
        case LabelSource::Pending: return "pending";
    }
    return "unknown";
}

LabelSource parse_source(std::string_view name) {
    for (auto s : {LabelSource::Model, LabelSource::Human, LabelSource::Pending})
        if (to_string(s) == name) return s;
    throw ParseError("unknown label source '" + std::string(name) + "'");
}

std::size_t FinalLabelSet::flagged() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += is_flagged(e.decision);
    return n;
}

std::size_t FinalLabelSet::pending() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.source == LabelSource::Pending;
    return n;
}

std::optional<double> FinalLabelSet::her() const {
    if (entries.empty()) return std::nullopt;
    return (1.0 - static_cast<double>(flagged()) / static_cast<double>(entries.size())) * 100.0;
}

FinalLabelSet apply_hitl(std::span<const EnsembleRecord> records, const ThresholdPair& thresholds,
                         const GoldProvider& gold) {
    FinalLabelSet out;
    out.entries.reserve(records.size());
    for (const auto& r : records) {
        FinalLabel e;
        e.unit_id = r.unit_id;
        e.task = r.task;
        e.aggregated_label = r.aggregated_label;
        e.mean_confidence = r.mean_confidence;
        e.confidence_sd = r.confidence_sd;
        e.decision = decide(r, thresholds);
        if (!is_flagged(e.decision)) {
            e.final_label = r.aggregated_label;
            e.source = LabelSource::Model;
        } else if (auto human = gold ? gold(r.unit_id, r.task) : std::nullopt) {
            e.final_label = human;
            e.source = LabelSource::Human;
        } else {
            e.source = LabelSource::Pending;
        }
        out.entries.push_back(std::move(e));
    }
    return out;
}

std::string serialize_labels(const FinalLabelSet& labels) {
    std::string out;
    for (const auto& e : labels.entries) {
        ojson j;
        j["unit_id"] = e.unit_id;
        j["task"] = to_string(e.task);
        j["aggregated_label"] = e.aggregated_label ? ojson(e.aggregated_label->value()) : ojson();
        j["mean_confidence"] = e.mean_confidence;
        j["confidence_sd"] = e.confidence_sd;
        j["decision"] = to_string(e.decision);
        j["final_label"] = e.final_label ? ojson(e.final_label->value()) : ojson();
        j["source"] = to_string(e.source);
        out += j.dump();
        out += '\n';
    }
    return out;
}

FinalLabelSet parse_labels(std::istream& in) {
    FinalLabelSet out;
    std::string text;
    std::size_t line = 0;
    auto opt_label = [&](const ojson& v) -> std::optional<Label> {
        if (v.is_null()) return std::nullopt;
        return Label(v.get<int>());
    };
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        try {
            const auto j = ojson::parse(text);
            FinalLabel e;
            e.unit_id = j.at("unit_id").get<std::string>();
            e.task = parse_task(j.at("task").get<std::string>());
            e.aggregated_label = opt_label(j.at("aggregated_label"));
            e.mean_confidence = j.at("mean_confidence").get<double>();
            e.confidence_sd = j.at("confidence_sd").get<double>();
            e.decision = parse_decision(j.at("decision").get<std::string>());
            e.final_label = opt_label(j.at("final_label"));
            e.source = parse_source(j.at("source").get<std::string>());
            out.entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(line, ex.what());
        } catch (const Error& ex) {
            throw ParseError(line, ex.what());
        }
    }
    return out;
}

}  // namespace hitl
