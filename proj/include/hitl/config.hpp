#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitl/annotators.hpp"
#include "hitl/calibration.hpp"
#include "hitl/corpus.hpp"
#include "hitl/remote_annotator.hpp"
#include "hitl/tasking.hpp"

namespace hitl {

struct AnnotatorSpec {
    enum class Kind { Simulated, Remote };
    Kind kind = Kind::Simulated;
    std::string id;
    SimProfile sim;
    ProviderConfig remote;
};

struct SensitivityConfig {
    enum class Mode { Temperature, Prompt };
    Mode mode = Mode::Temperature;
    std::vector<double> temperatures{kDefaultTemperatures.begin(), kDefaultTemperatures.end()};
    // Prompt mode: only variants at the configured max_tokens, unless set.
    bool all_token_limits = false;
    std::vector<int> token_limits{kDefaultTokenLimits.begin(), kDefaultTokenLimits.end()};
    bool subset_only = false;
};

struct RunConfig {
    std::filesystem::path corpus;
    std::optional<SynthSpec> synthetic;  // used when no corpus path is given
    std::vector<TaskKind> tasks;
    std::vector<AnnotatorSpec> annotators;

    PromptMode prompt_mode = PromptMode::ZSS;
    Transformation transformation = Transformation::Baseline;
    std::uint64_t shuffle_seed = 0;
    std::filesystem::path templates_dir;  // empty = built-in templates
    GenerationParams params;

    double subset_fraction = 0.10;
    std::uint64_t subset_seed = 0;
    double kw_min = kDefaultKwMin;
    std::map<TaskKind, double> kw_min_per_task;

    std::filesystem::path output_dir = "hitl-out";
    // Flagged units take the corpus gold label instead of waiting for review.
    bool simulate_review = true;
    bool use_cache = true;
    std::filesystem::path cache_dir;  // default <output_dir>/cache
    std::string review_url;           // push flagged items over HTTP when set
    std::string review_token;
    std::filesystem::path review_log;  // default <output_dir>/review/queue.log

    SensitivityConfig sensitivity;

    nlohmann::json source;  // the document this config was parsed from

    double kw_min_for(TaskKind task) const;
    std::filesystem::path effective_cache_dir() const;
    std::filesystem::path effective_review_log() const;
    // Stable hash of the source document.
    std::string hash() const;
};

// Relative paths are resolved against `base_dir`. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

SimProfile parse_sim_profile(const nlohmann::json& j);

}  // namespace hitl
