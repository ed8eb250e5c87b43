#include "hitl/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "hitl/rng.hpp"

namespace hitl {

using json = nlohmann::json;

double RunConfig::kw_min_for(TaskKind task) const {
    if (auto it = kw_min_per_task.find(task); it != kw_min_per_task.end()) return it->second;
    return kw_min;
}

std::filesystem::path RunConfig::effective_cache_dir() const {
    return cache_dir.empty() ? output_dir / "cache" : cache_dir;
}

std::filesystem::path RunConfig::effective_review_log() const {
    return review_log.empty() ? output_dir / "review" / "queue.log" : review_log;
}

std::string RunConfig::hash() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(source.dump())));
    return buf;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "corpus", "synthetic", "tasks", "annotators", "prompt", "generation", "subset",
        "kw_min", "output_dir", "simulate_review", "cache", "review", "sensitivity"};
    return keys;
}

}  // namespace

SimProfile parse_sim_profile(const json& j) {
    SimProfile p;
    p.hit_rate = j.value("hit_rate", p.hit_rate);
    if (j.contains("error_spread")) {
        const auto& es = j.at("error_spread");
        if (es.is_array()) {
            if (es.size() != 4)
                throw ConfigError("error_spread array needs 4 weights (+1, -1, +2, -2)");
            for (std::size_t k = 0; k < 4; ++k) p.error_spread[k] = es[k].get<double>();
        } else {
            p.error_spread = {es.value("+1", 0.0), es.value("-1", 0.0), es.value("+2", 0.0),
                              es.value("-2", 0.0)};
        }
    }
    p.conf_correct_mean = j.value("conf_correct_mean", p.conf_correct_mean);
    p.conf_wrong_mean = j.value("conf_wrong_mean", p.conf_wrong_mean);
    p.conf_sd = j.value("conf_sd", p.conf_sd);
    p.seed = j.value("seed", p.seed);
    p.setting_sensitive = j.value("setting_sensitive", p.setting_sensitive);
    return p;
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("config must be an object");
    for (const auto& [key, _] : doc.items())
        if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");

    RunConfig c;
    c.source = doc;
    try {
        c.corpus = resolve(base_dir, doc.value("corpus", ""));
        if (doc.contains("synthetic")) {
            const auto& s = doc.at("synthetic");
            SynthSpec spec;
            spec.units = s.value("units", spec.units);
            spec.min_panes = s.value("min_panes", spec.min_panes);
            spec.max_panes = s.value("max_panes", spec.max_panes);
            spec.min_options = s.value("min_options", spec.min_options);
            spec.max_options = s.value("max_options", spec.max_options);
            spec.seed = s.value("seed", spec.seed);
            if (s.contains("label_prior")) {
                const auto prior = s.at("label_prior").get<std::vector<double>>();
                if (prior.size() != kNumLabels)
                    throw ConfigError("synthetic.label_prior needs 5 weights");
                std::copy(prior.begin(), prior.end(), spec.label_prior.begin());
            }
            c.synthetic = spec;
        }
        if (c.corpus.empty() && !c.synthetic)
            throw ConfigError("config needs either 'corpus' or 'synthetic'");

        if (doc.contains("tasks")) {
            for (const auto& t : doc.at("tasks")) c.tasks.push_back(parse_task(t.get<std::string>()));
        } else {
            c.tasks.assign(kAllTasks.begin(), kAllTasks.end());
        }
        if (c.tasks.empty()) throw ConfigError("no tasks configured");

        if (!doc.contains("annotators") || doc.at("annotators").empty())
            throw ConfigError("at least one annotator is required");
        std::set<std::string> ids;
        for (const auto& a : doc.at("annotators")) {
            AnnotatorSpec spec;
            const auto type = a.value("type", "simulated");
            if (type == "simulated") {
                spec.kind = AnnotatorSpec::Kind::Simulated;
                spec.id = a.at("id").get<std::string>();
                spec.sim = parse_sim_profile(a);
            } else if (type == "remote") {
                spec.kind = AnnotatorSpec::Kind::Remote;
                spec.remote = ProviderConfig::from_json(a);
                spec.id = spec.remote.id;
            } else {
                throw ConfigError("unknown annotator type '" + type + "'");
            }
            if (!ids.insert(spec.id).second) throw ConfigError("duplicate annotator id " + spec.id);
            c.annotators.push_back(std::move(spec));
        }

        if (doc.contains("prompt")) {
            const auto& p = doc.at("prompt");
            c.prompt_mode = parse_prompt_mode(p.value("mode", "zss"));
            c.transformation = parse_transformation(p.value("variant", "baseline"));
            c.shuffle_seed = p.value("shuffle_seed", c.shuffle_seed);
            c.templates_dir = resolve(base_dir, p.value("templates_dir", ""));
        }
        if (doc.contains("generation")) {
            const auto& g = doc.at("generation");
            c.params.temperature = g.value("temperature", c.params.temperature);
            c.params.max_tokens = g.value("max_tokens", c.params.max_tokens);
        }
        if (c.params.temperature < 0) throw ConfigError("temperature must be >= 0");
        if (c.params.max_tokens <= 0) throw ConfigError("max_tokens must be > 0");

        if (doc.contains("subset")) {
            const auto& s = doc.at("subset");
            c.subset_fraction = s.value("fraction", c.subset_fraction);
            c.subset_seed = s.value("seed", c.subset_seed);
        }
        if (!(c.subset_fraction > 0.0 && c.subset_fraction <= 1.0))
            throw ConfigError("subset.fraction must be in (0,1]");

        if (doc.contains("kw_min")) {
            const auto& k = doc.at("kw_min");
            if (k.is_number()) {
                c.kw_min = k.get<double>();
            } else {
                c.kw_min = k.value("default", c.kw_min);
                for (const auto& [name, v] : k.items())
                    if (name != "default") c.kw_min_per_task[parse_task(name)] = v.get<double>();
            }
        }

        c.output_dir = resolve(base_dir, doc.value("output_dir", c.output_dir.string()));
        c.simulate_review = doc.value("simulate_review", c.simulate_review);
        if (doc.contains("cache")) {
            const auto& k = doc.at("cache");
            c.use_cache = k.value("enabled", c.use_cache);
            c.cache_dir = resolve(base_dir, k.value("dir", ""));
        }
        if (doc.contains("review")) {
            const auto& r = doc.at("review");
            c.review_url = r.value("url", "");
            c.review_token = r.value("token", "");
            c.review_log = resolve(base_dir, r.value("log", ""));
        }
        if (doc.contains("sensitivity")) {
            const auto& s = doc.at("sensitivity");
            const auto mode = s.value("mode", "temperature");
            if (mode == "temperature") c.sensitivity.mode = SensitivityConfig::Mode::Temperature;
            else if (mode == "prompt") c.sensitivity.mode = SensitivityConfig::Mode::Prompt;
            else throw ConfigError("sensitivity.mode must be 'temperature' or 'prompt'");
            if (s.contains("temperatures"))
                c.sensitivity.temperatures = s.at("temperatures").get<std::vector<double>>();
            if (s.contains("token_limits"))
                c.sensitivity.token_limits = s.at("token_limits").get<std::vector<int>>();
            c.sensitivity.all_token_limits = s.value("all_token_limits", false);
            c.sensitivity.subset_only = s.value("subset_only", false);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return parse_config(doc, path.parent_path());
}

}  // namespace hitl
