#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hitl/orchestrator.hpp"
#include "hitl/review_server.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct CommonFlags {
    std::string config;
    std::string output_dir;
    bool no_cache = false;
    std::optional<std::uint64_t> subset_seed;
    std::string review_url;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("-c,--config", f.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--output-dir", f.output_dir, "Override output_dir");
    cmd->add_flag("--no-cache", f.no_cache, "Bypass the response cache");
    cmd->add_option("--subset-seed", f.subset_seed, "Override subset.seed");
    cmd->add_option("--review-url", f.review_url, "Push flagged items to this review service");
}

hitl::RunConfig load(const CommonFlags& f) {
    std::ifstream in(f.config);
    if (!in) throw hitl::ConfigError("cannot open config " + f.config);
    json doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw hitl::ConfigError("config " + f.config + " is not valid JSON");
    if (!f.output_dir.empty()) doc["output_dir"] = fs::absolute(f.output_dir).string();
    if (f.no_cache) doc["cache"]["enabled"] = false;
    if (f.subset_seed) doc["subset"]["seed"] = *f.subset_seed;
    if (!f.review_url.empty()) {
        doc["review"]["url"] = f.review_url;
        doc["simulate_review"] = false;
    }
    return hitl::parse_config(doc, fs::path(f.config).parent_path());
}

int finish(const hitl::RunReport& run) {
    for (const auto& t : run.tasks) std::cout << hitl::metrics_table(t) << "\n";
    if (run.overall_her) std::cout << "overall HER " << *run.overall_her << "%\n";
    if (run.pending()) {
        std::size_t pending = 0;
        for (const auto& t : run.tasks) pending += t.labels.pending();
        std::cerr << pending << " label(s) awaiting human review\n";
        return hitl::kExitPending;
    }
    return hitl::kExitOk;
}

int cmd_convert(const std::string& input, const std::string& output, bool strict) {
    hitl::LoadOptions opts{strict};
    hitl::Corpus corpus;
    const auto ext = fs::path(input).extension();
    if (ext == ".tsv" || ext == ".txt") {
        std::ifstream in(input);
        if (!in) throw hitl::ConfigError("cannot open " + input);
        corpus = hitl::convert_tsv(in, opts);
    } else {
        corpus = hitl::load_corpus(input, opts);
    }
    for (const auto& w : corpus.warnings()) std::cerr << "warning: " << w << "\n";
    hitl::save_corpus(corpus, output);
    const auto s = corpus.summary();
    std::cout << s.queries << " queries, " << s.pairs << " pairs, panes/query " << s.panes_per_query_mean
              << " (sd " << s.panes_per_query_sd << "), options/pane " << s.options_mean << " (sd "
              << s.options_sd << ")\n";
    return hitl::kExitOk;
}

int cmd_review_serve(hitl::ReviewServerOptions opts, const std::string& log) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    fs::create_directories(fs::absolute(log).parent_path());
    hitl::ReviewStore store(log);
    hitl::ReviewServer server(store, opts);
    const int port = server.start();
    std::cout << "review service on http://" << opts.host << ":" << port << " (log " << log << ")"
              << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return hitl::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Human-in-the-loop annotation pipeline"};
    app.require_subcommand(1);

    std::string convert_in, convert_out;
    bool convert_strict = false;
    auto* convert = app.add_subcommand("convert", "Validate a corpus dump and write canonical JSONL");
    convert->add_option("input", convert_in, "TSV dump or JSONL corpus")->required()->check(CLI::ExistingFile);
    convert->add_option("output", convert_out, "Canonical corpus path")->required();
    convert->add_flag("--strict", convert_strict, "Reject queries with fewer than three panes");

    hitl::SynthSpec synth_spec;
    std::string synth_out;
    std::vector<double> synth_prior;
    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
    synth->add_option("output", synth_out, "Corpus path")->required();
    synth->add_option("--units", synth_spec.units, "Number of panes");
    synth->add_option("--seed", synth_spec.seed, "Generator seed");
    synth->add_option("--prior", synth_prior, "Gold prior over labels 1..5")->expected(5);

    CommonFlags cal_flags, apply_flags, sens_flags, report_flags;
    auto* calibrate = app.add_subcommand("calibrate", "Tune thresholds on the calibration subset");
    add_common(calibrate, cal_flags);

    auto* apply = app.add_subcommand("apply", "Label the remainder with the calibrated thresholds");
    add_common(apply, apply_flags);
    std::optional<double> apply_conf, apply_sd;
    apply->add_option("--confidence", apply_conf, "Confidence threshold for every task");
    apply->add_option("--sd", apply_sd, "SD threshold for every task");

    auto* sensitivity = app.add_subcommand("sensitivity", "Repeat annotation across settings");
    add_common(sensitivity, sens_flags);
    std::string sens_mode;
    sensitivity->add_option("--mode", sens_mode, "temperature or prompt")
        ->check(CLI::IsMember({"temperature", "prompt"}));

    auto* report = app.add_subcommand("report", "Fold in human reviews and rewrite reports");
    add_common(report, report_flags);

    hitl::ReviewServerOptions serve_opts;
    std::string serve_log = "review/queue.log";
    auto* serve = app.add_subcommand("review-serve", "Serve the human review queue over HTTP");
    serve->add_option("--log", serve_log, "Review log path");
    serve->add_option("--host", serve_opts.host, "Bind address");
    serve->add_option("--port", serve_opts.port, "Port (0 picks a free one)");
    serve->add_option("--token", serve_opts.bearer_token, "Require this bearer token on /api");
    serve->add_option("--static-dir", serve_opts.static_dir, "Review UI bundle to serve at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : hitl::kExitConfig;
    }

    try {
        if (*convert) return cmd_convert(convert_in, convert_out, convert_strict);
        if (*synth) {
            if (!synth_prior.empty())
                std::copy(synth_prior.begin(), synth_prior.end(), synth_spec.label_prior.begin());
            hitl::save_corpus(hitl::synthesize_corpus(synth_spec), synth_out);
            return hitl::kExitOk;
        }
        if (*calibrate) {
            hitl::Pipeline pipeline(load(cal_flags));
            for (const auto& [task, o] : pipeline.run_calibration()) {
                std::cout << hitl::to_string(task) << ": confidence " << o.selected.confidence_threshold
                          << ", sd " << o.selected.sd_threshold << " (" << o.points.size()
                          << " grid points, " << o.front.size() << " on front)\n";
                if (!o.warning.empty()) std::cerr << "warning: " << o.warning << "\n";
            }
            return hitl::kExitOk;
        }
        if (*apply) {
            hitl::Pipeline pipeline(load(apply_flags));
            if (apply_conf || apply_sd) {
                if (!apply_conf || !apply_sd)
                    throw hitl::ConfigError("--confidence and --sd go together");
                std::map<hitl::TaskKind, hitl::ThresholdPair> thr;
                for (auto task : pipeline.config().tasks) thr[task] = hitl::ThresholdPair(*apply_conf, *apply_sd);
                return finish(pipeline.run_apply(thr));
            }
            return finish(pipeline.run_apply());
        }
        if (*sensitivity) {
            auto config = load(sens_flags);
            if (sens_mode == "temperature") config.sensitivity.mode = hitl::SensitivityConfig::Mode::Temperature;
            if (sens_mode == "prompt") config.sensitivity.mode = hitl::SensitivityConfig::Mode::Prompt;
            hitl::Pipeline pipeline(std::move(config));
            const auto run = pipeline.run_sensitivity();
            for (const auto& row : run.stats.rows)
                std::cout << row.annotator_id << " " << hitl::to_string(row.task) << ": entropy "
                          << row.mean_entropy << ", sd " << row.mean_sd << " over " << row.units
                          << " units x " << row.runs << " runs\n";
            if (run.dropped) std::cerr << run.dropped << " cell(s) dropped for missing runs\n";
            return hitl::kExitOk;
        }
        if (*report) {
            hitl::Pipeline pipeline(load(report_flags));
            return finish(pipeline.report());
        }
        if (*serve) return cmd_review_serve(serve_opts, serve_log);
    } catch (const hitl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return hitl::kExitConfig;
    } catch (const hitl::UpstreamError& e) {
        std::cerr << "annotator failure: " << e.what() << "\n";
        return hitl::kExitUpstream;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return hitl::kExitFailure;
    }
    return hitl::kExitFailure;
}
