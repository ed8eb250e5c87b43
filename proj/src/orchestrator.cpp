#include "hitl/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <httplib.h>

#include "hitl/remote_annotator.hpp"

namespace hitl {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string() + "; run the earlier stage first");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string task_file(TaskKind task, const char* ext) {
    return std::string(to_string(task)) + ext;
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(); }

ojson thresholds_json(const ThresholdPair& t) {
    return ojson{{"confidence_threshold", t.confidence_threshold},
                 {"sd_threshold", t.sd_threshold}};
}

ThresholdPair thresholds_from(const json& j) {
    return ThresholdPair(j.at("confidence_threshold").get<double>(),
                         j.at("sd_threshold").get<double>());
}

std::string letter_name(std::size_t i) {
    if (i < 26) return std::string("Annotator ") + static_cast<char>('A' + i);
    return "Annotator " + std::to_string(i + 1);
}

// ---------------------------------------------------------------------------

class LocalSink final : public ReviewSink {
public:
    explicit LocalSink(fs::path log) : log_(std::move(log)) {}

    void push(TaskKind task, const std::vector<ReviewItem>& items, std::size_t accepted) override {
        store().enqueue(items);
        store().register_accepted(std::string(to_string(task)), accepted);
    }

    std::optional<ReviewItem> fetch(const std::string& item_id) override {
        return store().get(item_id);
    }

private:
    ReviewStore& store() {
        if (!store_) {
            fs::create_directories(log_.parent_path());
            store_ = std::make_unique<ReviewStore>(log_);
        }
        return *store_;
    }

    fs::path log_;
    std::unique_ptr<ReviewStore> store_;
};

class HttpSink final : public ReviewSink {
public:
    HttpSink(const std::string& base_url, std::string token)
        : parts_(split_url(base_url)), token_(std::move(token)) {
        if (!parts_.path.empty() && parts_.path.back() == '/') parts_.path.pop_back();
    }

    void push(TaskKind task, const std::vector<ReviewItem>& items, std::size_t accepted) override {
        ojson body{{"batch", to_string(task)}, {"accepted", accepted}, {"items", ojson::array()}};
        for (const auto& item : items) body["items"].push_back(to_json(item));
        auto client = make_client();
        auto res = client.Post(parts_.path + "/api/items", headers(), body.dump(),
                               "application/json");
        if (!res) throw UpstreamError("review service unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw UpstreamError("review service rejected enqueue (" + std::to_string(res->status) +
                                "): " + res->body);
    }

    std::optional<ReviewItem> fetch(const std::string& item_id) override {
        auto client = make_client();
        auto res = client.Get(parts_.path + "/api/items/" + item_id, headers());
        if (!res) throw UpstreamError("review service unreachable: " + httplib::to_string(res.error()));
        if (res->status == 404) return std::nullopt;
        if (res->status != 200)
            throw UpstreamError("review service returned " + std::to_string(res->status) +
                                " for " + item_id);
        return review_item_from_json(json::parse(res->body));
    }

private:
    httplib::Client make_client() const {
        httplib::Client client(parts_.origin);
        client.set_connection_timeout(10);
        client.set_read_timeout(30);
        return client;
    }

    httplib::Headers headers() const {
        httplib::Headers h;
        if (!token_.empty()) h.emplace("Authorization", "Bearer " + token_);
        return h;
    }

    UrlParts parts_;
    std::string token_;
};

}  // namespace

std::unique_ptr<ReviewSink> make_local_sink(const fs::path& log) {
    return std::make_unique<LocalSink>(log);
}

std::unique_ptr<ReviewSink> make_http_sink(const std::string& base_url, const std::string& token) {
    return std::make_unique<HttpSink>(base_url, token);
}

bool RunReport::pending() const {
    return std::any_of(tasks.begin(), tasks.end(), [](const TaskReport& t) { return t.pending(); });
}

// ---------------------------------------------------------------------------
// JSON and text rendering

ojson metrics_json(const metrics::MetricsReport& m) {
    ojson per_class{{"precision", m.per_class.precision},
                    {"recall", m.per_class.recall},
                    {"f1", m.per_class.f1}};
    ojson confusion = ojson::array();
    for (const auto& row : m.confusion.grid()) confusion.push_back(row);
    return ojson{{"count", m.count},
                 {"kw", m.kw},
                 {"macro_precision", m.macro_precision},
                 {"macro_f1", m.macro_f1},
                 {"mae", m.mae},
                 {"pearson", opt_json(m.pearson)},
                 {"cwa", opt_json(m.cwa)},
                 {"her", opt_json(m.her)},
                 {"per_class", std::move(per_class)},
                 {"confusion", std::move(confusion)}};
}

ojson calibration_json(const CalibrationOutcome& o) {
    ojson points = ojson::array();
    for (const auto& p : o.points) {
        ojson j = thresholds_json(p.thresholds);
        j["kw"] = p.kw;
        j["human_effort"] = p.human_effort;
        j["flagged"] = p.flagged;
        j["total"] = p.total;
        j["on_front"] = p.on_front;
        j["metrics"] = metrics_json(p.metrics);
        points.push_back(std::move(j));
    }
    ojson selected = thresholds_json(o.selected);
    if (!o.points.empty()) {
        const auto& p = o.points[o.selected_index];
        selected["kw"] = p.kw;
        selected["human_effort"] = p.human_effort;
        selected["her"] = opt_json(p.metrics.her);
    }
    selected["meets_constraint"] = o.meets_constraint;
    selected["warning"] = o.warning;
    return ojson{
        {"task", to_string(o.task)},
        {"subset", {{"fraction", o.subset_fraction}, {"seed", o.subset_seed}, {"units", o.subset_units}}},
        {"observed",
         {{"confidence", {{"min", o.observed_confidence.min}, {"max", o.observed_confidence.max}}},
          {"sd", {{"min", o.observed_sd.min}, {"max", o.observed_sd.max}}}}},
        {"grid",
         {{"confidence", confidence_axis(o.observed_confidence)}, {"sd", sd_axis(o.observed_sd)}}},
        {"kw_min", o.kw_min},
        {"selected", std::move(selected)},
        {"front", o.front},
        {"points", std::move(points)}};
}

namespace {

void table_row(std::string& out, const std::string& name, const metrics::MetricsReport& m) {
    char buf[256];
    auto fmt_opt = [](const std::optional<double>& v) {
        char b[32];
        if (v) std::snprintf(b, sizeof b, "%8.4f", *v);
        else std::snprintf(b, sizeof b, "%8s", "n/a");
        return std::string(b);
    };
    std::snprintf(buf, sizeof buf, "%-16s %6zu %8.4f %8.4f %8.4f %8.4f %s %s\n", name.c_str(),
                  m.count, m.kw, m.macro_precision, m.macro_f1, m.mae,
                  fmt_opt(m.pearson).c_str(), fmt_opt(m.cwa).c_str());
    out += buf;
}

}  // namespace

std::string metrics_table(const TaskReport& r) {
    std::string out;
    char buf[256];
    const auto& l = r.labels;
    std::snprintf(buf, sizeof buf, "task %s (%s)\n", std::string(to_string(r.task)).c_str(),
                  r.pending() ? "PENDING REVIEWS, partial metrics" : "complete");
    out += buf;
    std::snprintf(buf, sizeof buf, "thresholds: confidence %g, sd %g\n",
                  r.thresholds.confidence_threshold, r.thresholds.sd_threshold);
    out += buf;
    const auto her = l.her();
    std::snprintf(buf, sizeof buf,
                  "units %zu, flagged %zu, pending %zu, insufficient %zu, HER %s\n",
                  l.entries.size(), l.flagged(), l.pending(), r.insufficient,
                  her ? (std::to_string(*her).substr(0, 6) + "%").c_str() : "n/a");
    out += buf;
    out += "macro averages run over all 5 classes\n\n";
    std::snprintf(buf, sizeof buf, "%-16s %6s %8s %8s %8s %8s %8s %8s\n", "source", "n", "Kw",
                  "P", "F1", "MAE", "Pearson", "CWA");
    out += buf;
    if (r.metrics) table_row(out, "hitl", *r.metrics);
    if (r.ensemble_metrics) table_row(out, "ensemble", *r.ensemble_metrics);
    for (const auto& [id, m] : r.annotator_metrics) table_row(out, id, m);
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(RunConfig config) : Pipeline(std::move(config), {}) {}

Pipeline::Pipeline(RunConfig config, std::vector<std::shared_ptr<Annotator>> annotators)
    : config_(std::move(config)), started_at_(ReviewStore::utc_now()) {
    if (!config_.corpus.empty())
        corpus_ = std::make_shared<const Corpus>(load_corpus(config_.corpus));
    else if (config_.synthetic)
        corpus_ = std::make_shared<const Corpus>(synthesize_corpus(*config_.synthetic));
    else
        throw ConfigError("config needs either 'corpus' or 'synthetic'");
    if (corpus_->empty()) throw ConfigError("corpus is empty");

    split_ = sample_subset(*corpus_, config_.subset_fraction, config_.subset_seed);
    templates_ = config_.templates_dir.empty() ? TemplateSet::builtin()
                                               : TemplateSet::with_overrides(config_.templates_dir);

    if (!annotators.empty()) {
        annotators_ = std::move(annotators);
    } else {
        std::shared_ptr<const ResponseCache> cache;
        if (config_.use_cache)
            cache = std::make_shared<const ResponseCache>(config_.effective_cache_dir());
        auto transport = std::make_shared<HttpTransport>();
        std::shared_ptr<const Corpus> corpus = corpus_;
        GoldLookup lookup = [corpus](const UnitId& unit, TaskKind task) -> std::optional<Label> {
            const auto* u = corpus->find(unit);
            return u ? u->gold_for(task) : std::nullopt;
        };
        for (const auto& spec : config_.annotators) {
            if (spec.kind == AnnotatorSpec::Kind::Simulated)
                annotators_.push_back(std::make_shared<SimulatedAnnotator>(spec.id, spec.sim, lookup));
            else
                annotators_.push_back(std::make_shared<RemoteAnnotator>(spec.remote, transport, cache));
        }
    }
    if (annotators_.empty()) throw ConfigError("at least one annotator is required");
}

std::optional<Label> Pipeline::gold(const UnitId& unit, TaskKind task) const {
    const auto* u = corpus_->find(unit);
    return u ? u->gold_for(task) : std::nullopt;
}

ReviewSink& Pipeline::sink() {
    if (!sink_) {
        sink_ = config_.review_url.empty()
                    ? make_local_sink(config_.effective_review_log())
                    : make_http_sink(config_.review_url, config_.review_token);
    }
    return *sink_;
}

PromptSetting Pipeline::prompt_setting(TaskKind task) const {
    PromptSetting s;
    s.mode = config_.prompt_mode;
    if (s.mode == PromptMode::FSS) {
        s.few_shot_examples = select_few_shot(task, split_.subset.units());
        if (s.few_shot_examples.empty())
            throw ConfigError("few-shot prompting needs gold-labelled units in the calibration subset");
    }
    return s;
}

PromptVariant Pipeline::prompt_variant(int max_tokens) const {
    return {std::string(to_string(config_.transformation)) + "@" + std::to_string(max_tokens),
            config_.transformation, max_tokens, config_.shuffle_seed};
}

std::map<std::string, std::string> Pipeline::anonymized_ids() const {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < annotators_.size(); ++i) out[annotators_[i]->id()] = letter_name(i);
    return out;
}

AnnotationPass Pipeline::annotate(TaskKind task, const Corpus& partition,
                                  const PromptSetting& setting, const PromptVariant& variant,
                                  const GenerationParams& params) const {
    std::vector<PromptText> prompts;
    if (is_listwise(task)) {
        for (const auto& group : partition.queries()) {
            if (group.unit_ids.empty()) continue;
            const auto& full = corpus_->group_of(group.unit_ids.front());
            std::vector<AnnotationUnit> items;
            for (const auto& id : full.unit_ids) items.push_back(corpus_->unit(id));
            prompts.push_back(build_prompt(task, items, setting, variant, templates_));
        }
    } else {
        for (const auto& u : partition.units())
            prompts.push_back(build_prompt(task, std::span(&u, 1), setting, variant, templates_));
    }

    std::vector<AnnotationJob> jobs;
    jobs.reserve(prompts.size());
    for (const auto& p : prompts) jobs.push_back({&p, params});
    const auto results = dispatch(annotators_, jobs);

    AnnotationPass pass;
    std::unordered_map<UnitId, std::vector<AnnotatorPrediction>> by_unit;
    for (std::size_t a = 0; a < annotators_.size(); ++a) {
        const auto& id = annotators_[a]->id();
        std::size_t valid = 0, seen = 0;
        pass.missing[id] = 0;
        for (const auto& job : results[a])
            for (const auto& item : job) {
                if (!partition.contains(item.unit_id)) continue;
                ++seen;
                if (item.ok()) {
                    ++valid;
                    by_unit[item.unit_id].push_back(*item.prediction);
                } else {
                    ++pass.missing[id];
                    pass.first_failure.try_emplace(id, item.unit_id + ": " + item.failure);
                }
            }
        if (seen > 0 && valid == 0)
            throw UpstreamError("annotator " + id + " produced no valid predictions (" +
                                pass.first_failure[id] + ")");
    }

    pass.records.reserve(partition.size());
    for (const auto& u : partition.units()) {
        auto it = by_unit.find(u.unit_id);
        if (it == by_unit.end())
            pass.records.push_back(unannotated_record(u.unit_id, task, annotators_.size()));
        else
            pass.records.push_back(aggregate(it->second, annotators_.size()));
    }
    return pass;
}

std::map<TaskKind, CalibrationOutcome> Pipeline::run_calibration() {
    std::map<TaskKind, CalibrationOutcome> out;
    const auto& subset = split_.subset;
    for (auto task : config_.tasks) {
        for (const auto& u : subset.units())
            if (!u.gold_for(task))
                throw InvariantError("calibration unit " + u.unit_id + " has no gold label for " +
                                     std::string(to_string(task)));
        const auto pass = annotate(task, subset, prompt_setting(task),
                                   prompt_variant(config_.params.max_tokens), config_.params);
        auto outcome = calibrate(
            task, pass.records, [this](const UnitId& u, TaskKind t) { return gold(u, t); },
            config_.kw_min_for(task));
        outcome.subset_units = subset.size();
        outcome.subset_fraction = config_.subset_fraction;
        outcome.subset_seed = config_.subset_seed;
        write_file(config_.output_dir / "calibration" / task_file(task, ".report"),
                   calibration_json(outcome).dump(2) + "\n");
        out.emplace(task, std::move(outcome));
    }
    auto meta = provenance("calibrate");
    write_file(config_.output_dir / "provenance.meta", meta.dump(2) + "\n");
    return out;
}

std::map<TaskKind, ThresholdPair> Pipeline::load_thresholds() const {
    std::map<TaskKind, ThresholdPair> out;
    for (auto task : config_.tasks) {
        const auto path = config_.output_dir / "calibration" / task_file(task, ".report");
        const auto doc = json::parse(read_file(path));
        out[task] = thresholds_from(doc.at("selected"));
    }
    return out;
}

RunReport Pipeline::run_apply() { return run_apply(load_thresholds()); }

namespace {

void write_predictions(const fs::path& path, std::span<const EnsembleRecord> records) {
    std::string out;
    for (const auto& r : records) {
        ojson preds = ojson::array();
        for (const auto& p : r.contributing)
            preds.push_back(ojson{{"annotator_id", p.annotator_id},
                                  {"label", p.label.value()},
                                  {"confidence", p.confidence}});
        out += ojson{{"unit_id", r.unit_id}, {"task", to_string(r.task)},
                     {"ensemble_size", r.ensemble_size}, {"predictions", std::move(preds)}}
                   .dump();
        out += '\n';
    }
    write_file(path, out);
}

std::vector<EnsembleRecord> read_predictions(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<EnsembleRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        EnsembleRecord r;
        r.unit_id = j.at("unit_id").get<std::string>();
        r.task = parse_task(j.at("task").get<std::string>());
        r.ensemble_size = j.at("ensemble_size").get<std::size_t>();
        for (const auto& p : j.at("predictions")) {
            AnnotatorPrediction pred;
            pred.annotator_id = p.at("annotator_id").get<std::string>();
            pred.unit_id = r.unit_id;
            pred.task = r.task;
            pred.label = Label(p.at("label").get<int>());
            pred.confidence = p.at("confidence").get<double>();
            r.contributing.push_back(std::move(pred));
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

RunReport Pipeline::run_apply(const std::map<TaskKind, ThresholdPair>& thresholds) {
    RunReport run;
    const auto& remainder = split_.remainder;
    const auto letters = anonymized_ids();
    for (auto task : config_.tasks) {
        auto it = thresholds.find(task);
        if (it == thresholds.end())
            throw ConfigError("no thresholds for task " + std::string(to_string(task)));
        const auto& thr = it->second;

        std::vector<EnsembleRecord> records;
        if (!remainder.empty())
            records = annotate(task, remainder, prompt_setting(task),
                               prompt_variant(config_.params.max_tokens), config_.params)
                          .records;

        GoldProvider provider;
        if (config_.simulate_review)
            provider = [this](const UnitId& u, TaskKind t) { return gold(u, t); };
        else
            provider = [](const UnitId&, TaskKind) -> std::optional<Label> { return std::nullopt; };
        auto labels = apply_hitl(records, thr, provider);

        if (!config_.simulate_review && !records.empty()) {
            std::vector<ReviewItem> items;
            for (std::size_t i = 0; i < records.size(); ++i) {
                const auto& e = labels.entries[i];
                if (e.source != LabelSource::Pending) continue;
                const auto& r = records[i];
                const auto& unit = corpus_->unit(r.unit_id);
                ReviewItem item;
                item.item_id = ReviewItem::make_id(task, r.unit_id);
                item.unit_id = r.unit_id;
                item.task = task;
                item.query = unit.query;
                item.question = unit.pane.question;
                item.options = unit.pane.options;
                item.aggregated_label = r.aggregated_label;
                item.mean_confidence = r.mean_confidence;
                item.confidence_sd = r.confidence_sd;
                for (const auto& p : r.contributing)
                    item.predictions.push_back({letters.at(p.annotator_id), p.label, p.confidence});
                item.reason = e.decision;
                items.push_back(std::move(item));
            }
            sink().push(task, items, labels.entries.size() - labels.flagged());
            for (auto& e : labels.entries) {
                if (e.source != LabelSource::Pending) continue;
                auto item = sink().fetch(ReviewItem::make_id(task, e.unit_id));
                if (item && item->human_label) {
                    e.final_label = item->human_label;
                    e.source = LabelSource::Human;
                }
            }
        }

        write_predictions(config_.output_dir / "final" / task_file(task, ".predictions"), records);
        auto report = finish_task(task, std::move(labels), thr, records);
        write_task(report);
        run.tasks.push_back(std::move(report));
    }
    write_run(run, "apply");
    return run;
}

RunReport Pipeline::report() {
    RunReport run;
    for (auto task : config_.tasks) {
        const auto base = config_.output_dir;
        std::istringstream labels_in(read_file(base / "final" / task_file(task, ".labels")));
        auto labels = parse_labels(labels_in);
        const auto records = read_predictions(base / "final" / task_file(task, ".predictions"));

        std::istringstream metrics_in(read_file(base / "metrics" / task_file(task, ".report")));
        std::string first;
        std::getline(metrics_in, first);
        const auto thr = thresholds_from(json::parse(first).at("thresholds"));

        for (auto& e : labels.entries) {
            if (e.source != LabelSource::Pending) continue;
            auto item = sink().fetch(ReviewItem::make_id(task, e.unit_id));
            if (item && item->status == ReviewStatus::Reviewed && item->human_label) {
                e.final_label = item->human_label;
                e.source = LabelSource::Human;
            }
        }
        auto report = finish_task(task, std::move(labels), thr, records);
        write_task(report);
        run.tasks.push_back(std::move(report));
    }
    write_run(run, "report");
    return run;
}

TaskReport Pipeline::finish_task(TaskKind task, FinalLabelSet labels,
                                 const ThresholdPair& thresholds,
                                 std::span<const EnsembleRecord> records) const {
    TaskReport r;
    r.task = task;
    r.thresholds = thresholds;

    std::vector<Label> final_pred, final_gold, agg_pred, agg_gold;
    std::vector<double> final_conf, agg_conf;
    for (const auto& e : labels.entries) {
        if (e.decision == HitlDecision::FlagInsufficientPredictions) ++r.insufficient;
        const auto g = gold(e.unit_id, task);
        if (!g) continue;
        if (e.final_label) {
            final_pred.push_back(*e.final_label);
            final_gold.push_back(*g);
            final_conf.push_back(e.mean_confidence);
        }
        if (e.aggregated_label) {
            agg_pred.push_back(*e.aggregated_label);
            agg_gold.push_back(*g);
            agg_conf.push_back(e.mean_confidence);
        }
    }
    if (!final_pred.empty()) {
        r.metrics = metrics::evaluate(final_pred, final_gold, final_conf);
        r.metrics->her = labels.her();
    }
    if (!agg_pred.empty()) r.ensemble_metrics = metrics::evaluate(agg_pred, agg_gold, agg_conf);

    std::map<std::string, std::vector<Label>> a_pred, a_gold;
    std::map<std::string, std::vector<double>> a_conf;
    for (const auto& rec : records) {
        const auto g = gold(rec.unit_id, task);
        if (!g) continue;
        for (const auto& p : rec.contributing) {
            a_pred[p.annotator_id].push_back(p.label);
            a_gold[p.annotator_id].push_back(*g);
            a_conf[p.annotator_id].push_back(p.confidence);
        }
    }
    for (const auto& [id, pred] : a_pred)
        r.annotator_metrics.emplace(id, metrics::evaluate(pred, a_gold[id], a_conf[id]));

    r.labels = std::move(labels);
    return r;
}

void Pipeline::write_task(const TaskReport& r) const {
    const auto& base = config_.output_dir;
    write_file(base / "final" / task_file(r.task, ".labels"), serialize_labels(r.labels));

    const auto& l = r.labels;
    std::string out;
    ojson summary{{"kind", "summary"},
                  {"task", to_string(r.task)},
                  {"status", r.pending() ? "pending" : "complete"},
                  {"thresholds", thresholds_json(r.thresholds)},
                  {"units", l.entries.size()},
                  {"accepted", l.entries.size() - l.flagged()},
                  {"flagged", l.flagged()},
                  {"pending", l.pending()},
                  {"insufficient", r.insufficient},
                  {"her", opt_json(l.her())},
                  {"macro_average", "all 5 classes"}};
    out += summary.dump() + "\n";
    if (r.metrics) {
        ojson j{{"kind", "hitl"}, {"partial", r.pending()}};
        j.update(metrics_json(*r.metrics));
        out += j.dump() + "\n";
    }
    if (r.ensemble_metrics) {
        ojson j{{"kind", "ensemble"}};
        j.update(metrics_json(*r.ensemble_metrics));
        out += j.dump() + "\n";
    }
    for (const auto& [id, m] : r.annotator_metrics) {
        ojson j{{"kind", "annotator"}, {"annotator_id", id}};
        j.update(metrics_json(m));
        out += j.dump() + "\n";
    }
    write_file(base / "metrics" / task_file(r.task, ".report"), out);
    write_file(base / "metrics" / task_file(r.task, ".txt"), metrics_table(r));
}

void Pipeline::write_run(RunReport& run, const std::string& stage) const {
    std::size_t units = 0, flagged = 0;
    ojson tasks = ojson::array();
    for (const auto& t : run.tasks) {
        units += t.labels.entries.size();
        flagged += t.labels.flagged();
        tasks.push_back(ojson{{"task", to_string(t.task)},
                              {"status", t.pending() ? "pending" : "complete"},
                              {"thresholds", thresholds_json(t.thresholds)},
                              {"units", t.labels.entries.size()},
                              {"flagged", t.labels.flagged()},
                              {"pending", t.labels.pending()},
                              {"her", opt_json(t.labels.her())},
                              {"kw", t.metrics ? ojson(t.metrics->kw) : ojson()}});
    }
    if (units > 0)
        run.overall_her = metrics::her(static_cast<std::int64_t>(flagged),
                                       static_cast<std::int64_t>(units));
    ojson doc{{"status", run.pending() ? "pending" : "complete"},
              {"overall_her", opt_json(run.overall_her)},
              {"tasks", std::move(tasks)}};
    write_file(config_.output_dir / "run.report", doc.dump(2) + "\n");

    run.provenance = provenance(stage);
    write_file(config_.output_dir / "provenance.meta", run.provenance.dump(2) + "\n");
}

ojson Pipeline::provenance(const std::string& stage) const {
    ojson ids = ojson::array();
    for (const auto& a : annotators_) ids.push_back(a->id());
    ojson letters = ojson::object();
    for (const auto& [id, letter] : anonymized_ids()) letters[letter] = id;
    ojson few_shot = ojson::object();
    if (config_.prompt_mode == PromptMode::FSS)
        for (auto task : config_.tasks) {
            ojson list = ojson::array();
            for (const auto& ex : select_few_shot(task, split_.subset.units()))
                list.push_back(ex.unit.unit_id);
            few_shot[std::string(to_string(task))] = std::move(list);
        }
    return ojson{{"tool_version", kToolVersion},
                 {"stage", stage},
                 {"config_hash", config_.hash()},
                 {"subset_seed", config_.subset_seed},
                 {"shuffle_seed", config_.shuffle_seed},
                 {"synthetic_seed", config_.synthetic ? ojson(config_.synthetic->seed) : ojson()},
                 {"corpus_units", corpus_->size()},
                 {"subset_units", split_.subset.size()},
                 {"annotators", std::move(ids)},
                 {"anonymized", std::move(letters)},
                 {"few_shot_examples", std::move(few_shot)},
                 {"started_at", started_at_},
                 {"finished_at", ReviewStore::utc_now()}};
}

// ---------------------------------------------------------------------------
// Sensitivity

SensitivityRun Pipeline::run_sensitivity() {
    const auto& sc = config_.sensitivity;
    const Corpus& units = sc.subset_only ? split_.subset : *corpus_;

    struct Setting {
        std::string name;
        PromptVariant variant;
        GenerationParams params;
    };
    std::vector<Setting> settings;
    if (sc.mode == SensitivityConfig::Mode::Temperature) {
        for (double t : sc.temperatures) {
            char name[48];
            std::snprintf(name, sizeof name, "temperature=%g", t);
            settings.push_back({name, prompt_variant(config_.params.max_tokens),
                                {t, config_.params.max_tokens}});
        }
    } else {
        std::vector<int> limits =
            sc.all_token_limits ? sc.token_limits : std::vector<int>{config_.params.max_tokens};
        for (auto& v : enumerate_variants(PromptSetting{}, limits, config_.shuffle_seed))
            settings.push_back({v.variant_id, v, {0.0, v.max_tokens}});
    }
    if (settings.size() < 2)
        throw ConfigError("sensitivity needs at least two temperatures or prompt variants");

    SensitivityRun run;
    run.mode = sc.mode;
    for (const auto& s : settings) run.settings.push_back(s.name);

    for (auto task : config_.tasks) {
        const auto setting = prompt_setting(task);
        // [setting][unit] -> annotator -> label
        std::vector<std::vector<std::map<std::string, Label>>> labels;
        for (const auto& s : settings) {
            const auto pass = annotate(task, units, setting, s.variant, s.params);
            auto& per_unit = labels.emplace_back(units.size());
            for (std::size_t i = 0; i < pass.records.size(); ++i)
                for (const auto& p : pass.records[i].contributing)
                    per_unit[i].emplace(p.annotator_id, p.label);
        }
        for (const auto& a : annotators_) {
            for (std::size_t i = 0; i < units.size(); ++i) {
                metrics::RepeatedLabels cell{a->id(), task, units.units()[i].unit_id, {}};
                for (const auto& run_labels : labels) {
                    auto it = run_labels[i].find(a->id());
                    if (it == run_labels[i].end()) break;
                    cell.labels.push_back(it->second);
                }
                if (cell.labels.size() == settings.size())
                    run.cells.push_back(std::move(cell));
                else
                    ++run.dropped;
            }
        }
    }
    run.stats = metrics::sensitivity_report(run.cells);

    const std::string mode = sc.mode == SensitivityConfig::Mode::Temperature ? "temperature" : "prompt";
    ojson rows = ojson::array();
    std::string table;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %-14s %6s %5s %10s %10s %10s\n", "annotator", "task",
                  "units", "runs", "entropy", "sd", "max_ent");
    table += buf;
    for (const auto& row : run.stats.rows) {
        rows.push_back(ojson{{"annotator_id", row.annotator_id},
                             {"task", to_string(row.task)},
                             {"units", row.units},
                             {"runs", row.runs},
                             {"mean_entropy", row.mean_entropy},
                             {"mean_sd", row.mean_sd},
                             {"max_entropy", row.max_entropy}});
        std::snprintf(buf, sizeof buf, "%-16s %-14s %6zu %5zu %10.4f %10.4f %10.4f\n",
                      row.annotator_id.c_str(), std::string(to_string(row.task)).c_str(), row.units,
                      row.runs, row.mean_entropy, row.mean_sd, row.max_entropy);
        table += buf;
    }
    ojson doc{{"mode", mode},
              {"settings", run.settings},
              {"units", units.size()},
              {"dropped", run.dropped},
              {"rows", std::move(rows)}};
    write_file(config_.output_dir / "sensitivity" / (mode + ".report"), doc.dump(2) + "\n");
    write_file(config_.output_dir / "sensitivity" / (mode + ".txt"), table);
    return run;
}

}  // namespace hitl
