#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hitl/tasking.hpp"
#include "hitl/types.hpp"

namespace hitl {

struct GenerationParams {
    double temperature = 0.0;
    int max_tokens = kDefaultMaxTokens;

    friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

inline constexpr std::array<double, 3> kDefaultTemperatures = {0.0, 0.5, 1.0};

struct AnnotatorPrediction {
    std::string annotator_id;
    UnitId unit_id;
    TaskKind task = TaskKind::Quality;
    Label label;
    double confidence = 0.0;  // verbalised, in [0,100], kept unrounded
    std::string raw_response;
    GenerationParams params;
};

// Result for one rated item. A missing prediction never carries a label.
struct ItemResult {
    UnitId unit_id;
    std::optional<AnnotatorPrediction> prediction;
    std::string failure;  // set when prediction is empty

    bool ok() const { return prediction.has_value(); }
};

struct ParsedItem {
    Label label;
    double confidence = 0.0;
};

struct ParseResult {
    std::vector<ParsedItem> items;
    std::string error;  // empty on success

    bool ok() const { return error.empty(); }
};

// Extracts exactly `expected_items` trailer lines of the form
// `LABEL=<int> CONFIDENCE=<num>`. Out-of-range values fail rather than clamp.
ParseResult parse_response(std::string_view raw, std::size_t expected_items);

// Renders the trailer line the parser accepts; confidence keeps full precision.
std::string format_trailer(Label label, double confidence);

class Annotator {
public:
    virtual ~Annotator() = default;

    virtual const std::string& id() const = 0;
    // One result per unit in prompt.unit_ids, in the same order.
    virtual std::vector<ItemResult> annotate(const PromptText& prompt,
                                             const GenerationParams& params) = 0;

    // Zero means unlimited.
    virtual int max_concurrency() const { return 1; }
    virtual double rate_per_minute() const { return 0.0; }
};

// ---------------------------------------------------------------------------
// Simulated annotator

struct SimProfile {
    double hit_rate = 0.5;
    // Weights for miss offsets +1, -1, +2, -2.
    std::array<double, 4> error_spread{0.25, 0.25, 0.25, 0.25};
    double conf_correct_mean = 90.0;
    double conf_wrong_mean = 75.0;
    double conf_sd = 5.0;
    std::uint64_t seed = 0;
    // When set, temperature and prompt variant feed the stream position, so
    // repeated runs under different settings disagree.
    bool setting_sensitive = false;
};

struct SimDraw {
    Label label;
    double confidence = 0.0;
};

inline constexpr std::array<int, 4> kSimOffsets = {+1, -1, +2, -2};

// Pure function of (profile, gold, position). Misses that would leave [1,5]
// are reflected to the opposite side of the gold label.
SimDraw sim_predict(const SimProfile& profile, Label gold, std::uint64_t position);

using GoldLookup = std::function<std::optional<Label>(const UnitId&, TaskKind)>;

class SimulatedAnnotator final : public Annotator {
public:
    SimulatedAnnotator(std::string id, SimProfile profile, GoldLookup gold);

    const std::string& id() const override { return id_; }
    std::vector<ItemResult> annotate(const PromptText& prompt,
                                     const GenerationParams& params) override;
    int max_concurrency() const override { return 0; }

    const SimProfile& profile() const { return profile_; }
    std::uint64_t stream_position(const UnitId& unit, TaskKind task, const PromptText& prompt,
                                  const GenerationParams& params) const;

private:
    std::string id_;
    SimProfile profile_;
    GoldLookup gold_;
};

// ---------------------------------------------------------------------------
// Response cache keyed by (annotator, prompt hash, params).

class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    static std::string key(const std::string& annotator_id, const std::string& prompt,
                           const GenerationParams& params);

    std::optional<std::string> get(const std::string& annotator_id, const std::string& key) const;
    void put(const std::string& annotator_id, const std::string& key,
             const std::string& response) const;

private:
    std::filesystem::path path_for(const std::string& annotator_id, const std::string& key) const;
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Concurrency

class TokenBucket {
public:
    using Clock = std::chrono::steady_clock;

    TokenBucket(double rate_per_minute, double burst);
    // Blocks until a token is available. No-op when the rate is zero.
    void acquire();
    // Seconds to wait before a token is available at `now`, consuming it if 0.
    double try_acquire(Clock::time_point now);

private:
    std::mutex mu_;
    double rate_per_sec_;
    double burst_;
    double tokens_;
    Clock::time_point last_;
};

struct AnnotationJob {
    const PromptText* prompt = nullptr;
    GenerationParams params;
};

// Runs every job through every annotator. Each annotator gets its own worker
// pool (bounded by max_concurrency) and rate limiter, so one slow provider
// does not hold back the others. Output is indexed [annotator][job] regardless
// of completion order.
std::vector<std::vector<std::vector<ItemResult>>> dispatch(
    std::span<const std::shared_ptr<Annotator>> annotators, std::span<const AnnotationJob> jobs);

}  // namespace hitl
