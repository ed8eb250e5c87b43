#include "hitl/annotators.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>
#include <thread>

#include "hitl/rng.hpp"

namespace hitl {

ParseResult parse_response(std::string_view raw, std::size_t expected_items) {
    static const std::regex trailer(
        R"(LABEL\s*=\s*([+-]?\d+)\s*,?\s*CONFIDENCE\s*=\s*([+-]?\d+(?:\.\d+)?)\s*%?)");
    ParseResult result;
    const std::string text(raw);
    std::vector<std::pair<std::string, std::string>> found;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), trailer);
         it != std::sregex_iterator(); ++it)
        found.emplace_back((*it)[1].str(), (*it)[2].str());

    if (found.empty()) {
        result.error = "no trailer found";
        return result;
    }
    if (found.size() != expected_items) {
        result.error = "expected " + std::to_string(expected_items) + " trailer(s), found " +
                       std::to_string(found.size());
        return result;
    }
    for (std::size_t i = 0; i < found.size(); ++i) {
        const auto& [label_text, conf_text] = found[i];
        long long label = 0;
        auto [lp, lec] = std::from_chars(label_text.data() + (label_text[0] == '+'),
                                         label_text.data() + label_text.size(), label);
        if (lec != std::errc() || !valid_label(static_cast<int>(label)) ||
            label != static_cast<int>(label)) {
            result.items.clear();
            result.error = "item " + std::to_string(i + 1) + ": label " + label_text +
                           " outside [1,5]";
            return result;
        }
        double conf = 0.0;
        auto [cp, cec] = std::from_chars(conf_text.data() + (conf_text[0] == '+'),
                                         conf_text.data() + conf_text.size(), conf);
        if (cec != std::errc() || !(conf >= 0.0 && conf <= 100.0)) {
            result.items.clear();
            result.error = "item " + std::to_string(i + 1) + ": confidence " + conf_text +
                           " outside [0,100]";
            return result;
        }
        result.items.push_back({Label(static_cast<int>(label)), conf});
    }
    return result;
}

std::string format_trailer(Label label, double confidence) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, confidence);
    std::string conf(buf, ec == std::errc() ? end : buf);
    // The grammar has no exponent form; fall back to fixed notation.
    if (conf.find_first_of("eE") != std::string::npos) {
        std::snprintf(buf, sizeof buf, "%.10f", confidence);
        conf = buf;
    }
    return "LABEL=" + std::to_string(label.value()) + " CONFIDENCE=" + conf;
}

// ---------------------------------------------------------------------------

SimDraw sim_predict(const SimProfile& profile, Label gold, std::uint64_t position) {
    Rng rng(hash_combine(profile.seed, position));
    const bool hit = rng.uniform() < profile.hit_rate;
    int label = gold.value();
    if (!hit) {
        const double mass =
            std::accumulate(profile.error_spread.begin(), profile.error_spread.end(), 0.0);
        double u = rng.uniform() * mass;
        int offset = kSimOffsets.back();
        for (std::size_t k = 0; k < kSimOffsets.size(); ++k) {
            if (u < profile.error_spread[k]) {
                offset = kSimOffsets[k];
                break;
            }
            u -= profile.error_spread[k];
        }
        label = gold.value() + offset;
        if (!valid_label(label)) label = gold.value() - offset;
    } else {
        rng.uniform();  // keep the stream aligned between hit and miss draws
    }
    const double mean = hit ? profile.conf_correct_mean : profile.conf_wrong_mean;
    const double conf = std::clamp(rng.normal(mean, profile.conf_sd), 0.0, 100.0);
    return {Label(label), conf};
}

SimulatedAnnotator::SimulatedAnnotator(std::string id, SimProfile profile, GoldLookup gold)
    : id_(std::move(id)), profile_(profile), gold_(std::move(gold)) {
    if (!(profile_.hit_rate >= 0.0 && profile_.hit_rate <= 1.0))
        throw ConfigError("annotator " + id_ + ": hit_rate outside [0,1]");
    if (profile_.conf_sd < 0.0) throw ConfigError("annotator " + id_ + ": negative conf_sd");
    for (double w : profile_.error_spread)
        if (w < 0.0) throw ConfigError("annotator " + id_ + ": negative error_spread weight");
    if (profile_.hit_rate < 1.0 &&
        std::accumulate(profile_.error_spread.begin(), profile_.error_spread.end(), 0.0) <= 0.0)
        throw ConfigError("annotator " + id_ + ": error_spread has no mass");
}

std::uint64_t SimulatedAnnotator::stream_position(const UnitId& unit, TaskKind task,
                                                  const PromptText& prompt,
                                                  const GenerationParams& params) const {
    std::uint64_t h = fnv1a64(unit);
    h = hash_combine(h, fnv1a64(to_string(task)));
    if (profile_.setting_sensitive) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &params.temperature, sizeof bits);
        h = hash_combine(h, bits);
        h = hash_combine(h, fnv1a64(prompt.variant_id));
        h = hash_combine(h, static_cast<std::uint64_t>(params.max_tokens));
    }
    return h;
}

std::vector<ItemResult> SimulatedAnnotator::annotate(const PromptText& prompt,
                                                     const GenerationParams& params) {
    std::vector<ItemResult> out;
    std::vector<std::optional<SimDraw>> draws;
    std::string raw;
    for (const auto& unit : prompt.unit_ids) {
        auto gold = gold_(unit, prompt.task);
        if (!gold) {
            draws.emplace_back();
            continue;
        }
        draws.push_back(sim_predict(profile_, *gold, stream_position(unit, prompt.task, prompt, params)));
        raw += format_trailer(draws.back()->label, draws.back()->confidence) + "\n";
    }
    for (std::size_t i = 0; i < prompt.unit_ids.size(); ++i) {
        ItemResult r{prompt.unit_ids[i], std::nullopt, {}};
        if (!draws[i]) {
            r.failure = "no gold label to simulate from";
        } else {
            // Round-trip through the parser so simulated and remote predictions
            // obey the same grammar.
            const auto line = format_trailer(draws[i]->label, draws[i]->confidence);
            const auto parsed = parse_response(line, 1);
            if (!parsed.ok()) {
                r.failure = parsed.error;
            } else {
                r.prediction = AnnotatorPrediction{id_, prompt.unit_ids[i], prompt.task,
                                                   parsed.items[0].label,
                                                   parsed.items[0].confidence, raw, params};
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string ResponseCache::key(const std::string& annotator_id, const std::string& prompt,
                               const GenerationParams& params) {
    std::uint64_t h = fnv1a64(annotator_id);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(prompt, h);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%016llx-t%g-m%d", static_cast<unsigned long long>(h),
                  params.temperature, params.max_tokens);
    return buf;
}

std::filesystem::path ResponseCache::path_for(const std::string& annotator_id,
                                              const std::string& key) const {
    return dir_ / annotator_id / (key + ".txt");
}

std::optional<std::string> ResponseCache::get(const std::string& annotator_id,
                                              const std::string& key) const {
    std::ifstream in(path_for(annotator_id, key), std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ResponseCache::put(const std::string& annotator_id, const std::string& key,
                        const std::string& response) const {
    const auto path = path_for(annotator_id, key);
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        out << response;
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_minute, double burst)
    : rate_per_sec_(rate_per_minute / 60.0),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(Clock::now()) {}

double TokenBucket::try_acquire(Clock::time_point now) {
    std::lock_guard lock(mu_);
    if (rate_per_sec_ <= 0.0) return 0.0;
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    if (elapsed > 0) {
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_per_sec_);
        last_ = now;
    }
    if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return 0.0;
    }
    return (1.0 - tokens_) / rate_per_sec_;
}

void TokenBucket::acquire() {
    for (;;) {
        const double wait = try_acquire(Clock::now());
        if (wait <= 0.0) return;
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
}

std::vector<std::vector<std::vector<ItemResult>>> dispatch(
    std::span<const std::shared_ptr<Annotator>> annotators, std::span<const AnnotationJob> jobs) {
    std::vector<std::vector<std::vector<ItemResult>>> results(annotators.size());
    for (auto& r : results) r.resize(jobs.size());

    std::vector<std::jthread> threads;
    std::vector<std::unique_ptr<TokenBucket>> buckets;
    std::vector<std::unique_ptr<std::atomic<std::size_t>>> cursors;
    std::vector<std::exception_ptr> errors(annotators.size());
    std::mutex error_mu;

    for (std::size_t a = 0; a < annotators.size(); ++a) {
        auto& annotator = *annotators[a];
        int workers = annotator.max_concurrency();
        if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
        workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                         std::max<std::size_t>(1, jobs.size())));
        buckets.push_back(std::make_unique<TokenBucket>(annotator.rate_per_minute(), workers));
        cursors.push_back(std::make_unique<std::atomic<std::size_t>>(0));
        auto* bucket = buckets.back().get();
        auto* cursor = cursors.back().get();
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&, a, bucket, cursor] {
                try {
                    for (;;) {
                        const std::size_t j = cursor->fetch_add(1);
                        if (j >= jobs.size()) return;
                        bucket->acquire();
                        auto items = annotators[a]->annotate(*jobs[j].prompt, jobs[j].params);
                        if (items.size() != jobs[j].prompt->unit_ids.size())
                            throw UpstreamError("annotator " + annotators[a]->id() +
                                                " returned the wrong number of items");
                        results[a][j] = std::move(items);
                    }
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!errors[a]) errors[a] = std::current_exception();
                    cursor->store(jobs.size());
                }
            });
        }
    }
    threads.clear();  // joins
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

}  // namespace hitl
