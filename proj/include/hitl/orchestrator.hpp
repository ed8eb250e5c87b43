#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitl/annotators.hpp"
#include "hitl/calibration.hpp"
#include "hitl/config.hpp"
#include "hitl/corpus.hpp"
#include "hitl/ensemble.hpp"
#include "hitl/metrics.hpp"
#include "hitl/review_store.hpp"

namespace hitl {

// Process exit codes used by the CLI.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitPending = 3,
    kExitUpstream = 4,
};

struct TaskReport {
    TaskKind task = TaskKind::Quality;
    ThresholdPair thresholds;
    FinalLabelSet labels;
    // Final labels against gold, over resolved units that have gold.
    std::optional<metrics::MetricsReport> metrics;
    // Aggregated labels against gold, before any substitution.
    std::optional<metrics::MetricsReport> ensemble_metrics;
    std::map<std::string, metrics::MetricsReport> annotator_metrics;
    std::size_t insufficient = 0;
    bool pending() const { return labels.pending() > 0; }
};

struct RunReport {
    std::vector<TaskReport> tasks;
    // Over every task's remainder; nullopt when nothing was labelled.
    std::optional<double> overall_her;
    nlohmann::ordered_json provenance;
    bool pending() const;
};

// Where flagged units go when review is not simulated.
class ReviewSink {
public:
    virtual ~ReviewSink() = default;
    virtual void push(TaskKind task, const std::vector<ReviewItem>& items,
                      std::size_t accepted) = 0;
    virtual std::optional<ReviewItem> fetch(const std::string& item_id) = 0;
};

std::unique_ptr<ReviewSink> make_local_sink(const std::filesystem::path& log);
std::unique_ptr<ReviewSink> make_http_sink(const std::string& base_url, const std::string& token);

struct AnnotationPass {
    std::vector<EnsembleRecord> records;  // one per unit, partition order
    std::map<std::string, std::size_t> missing;  // per annotator
    std::map<std::string, std::string> first_failure;
};

struct SensitivityRun {
    SensitivityConfig::Mode mode = SensitivityConfig::Mode::Temperature;
    std::vector<std::string> settings;  // one label per repeated run
    std::vector<metrics::RepeatedLabels> cells;
    std::size_t dropped = 0;  // cells lacking a valid label in some run
    metrics::SensitivityStats stats;
};

class Pipeline {
public:
    // Builds annotators from the config.
    explicit Pipeline(RunConfig config);
    // Uses the given annotators instead of the configured ones.
    Pipeline(RunConfig config, std::vector<std::shared_ptr<Annotator>> annotators);

    const RunConfig& config() const { return config_; }
    const Corpus& corpus() const { return *corpus_; }
    const CorpusSplit& split() const { return split_; }
    const std::vector<std::shared_ptr<Annotator>>& annotators() const { return annotators_; }

    void set_review_sink(std::unique_ptr<ReviewSink> sink) { sink_ = std::move(sink); }

    // Annotates the calibration subset and writes calibration/<task>.report.
    std::map<TaskKind, CalibrationOutcome> run_calibration();
    // Thresholds come from the calibration reports in the output directory.
    RunReport run_apply();
    RunReport run_apply(const std::map<TaskKind, ThresholdPair>& thresholds);
    SensitivityRun run_sensitivity();
    // Resolves pending labels from the review sink and rewrites the reports.
    RunReport report();

    AnnotationPass annotate(TaskKind task, const Corpus& partition, const PromptSetting& setting,
                            const PromptVariant& variant, const GenerationParams& params) const;

    PromptSetting prompt_setting(TaskKind task) const;
    PromptVariant prompt_variant(int max_tokens) const;
    // "Annotator A", "Annotator B", ... in configured order.
    std::map<std::string, std::string> anonymized_ids() const;

    std::map<TaskKind, ThresholdPair> load_thresholds() const;

private:
    std::optional<Label> gold(const UnitId& unit, TaskKind task) const;
    ReviewSink& sink();
    TaskReport finish_task(TaskKind task, FinalLabelSet labels, const ThresholdPair& thresholds,
                           std::span<const EnsembleRecord> records) const;
    void write_task(const TaskReport& report) const;
    void write_run(RunReport& run, const std::string& stage) const;
    nlohmann::ordered_json provenance(const std::string& stage) const;

    RunConfig config_;
    std::shared_ptr<const Corpus> corpus_;
    CorpusSplit split_;
    TemplateSet templates_;
    std::vector<std::shared_ptr<Annotator>> annotators_;
    std::unique_ptr<ReviewSink> sink_;
    std::string started_at_;
};

nlohmann::ordered_json metrics_json(const metrics::MetricsReport& m);
nlohmann::ordered_json calibration_json(const CalibrationOutcome& outcome);
std::string metrics_table(const TaskReport& report);

}  // namespace hitl
