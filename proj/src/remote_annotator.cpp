#include "hitl/remote_annotator.hpp"

#include <cstdlib>

#include <httplib.h>

namespace hitl {

using json = nlohmann::json;

json ProviderConfig::default_request_template() {
    return json{{"model", "{model}"},
                {"messages", json::array({json{{"role", "user"}, {"content", "{prompt}"}}})},
                {"temperature", "{temperature}"},
                {"max_tokens", "{max_tokens}"}};
}

ProviderConfig ProviderConfig::from_json(const json& j) {
    ProviderConfig c;
    try {
        c.id = j.at("id").get<std::string>();
        c.base_url = j.at("base_url").get<std::string>();
        c.model = j.value("model", "");
        c.auth_env = j.value("auth_env", "");
        c.auth_header = j.value("auth_header", c.auth_header);
        c.auth_prefix = j.value("auth_prefix", c.auth_prefix);
        c.request_template = j.contains("request_template") ? j.at("request_template")
                                                            : default_request_template();
        c.response_path = j.value("response_path", c.response_path);
        c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
        c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
        c.rate_per_minute = j.value("rate_per_minute", c.rate_per_minute);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("provider config: ") + e.what());
    }
    if (c.id.empty()) throw ConfigError("provider config: empty id");
    if (c.timeout_ms <= 0) throw ConfigError("provider " + c.id + ": timeout_ms must be positive");
    if (c.rate_per_minute < 0) throw ConfigError("provider " + c.id + ": negative rate_per_minute");
    split_url(c.base_url);
    return c;
}

UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("url without scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

namespace {

void fill_placeholders(json& node, const ProviderConfig& config, const PromptText& prompt,
                       const GenerationParams& params) {
    if (node.is_string()) {
        const auto& s = node.get_ref<const std::string&>();
        if (s == "{prompt}") node = prompt.text;
        else if (s == "{model}") node = config.model;
        else if (s == "{temperature}") node = params.temperature;
        else if (s == "{max_tokens}") node = params.max_tokens;
        return;
    }
    if (node.is_array() || node.is_object())
        for (auto& child : node) fill_placeholders(child, config, prompt, params);
}

}  // namespace

json build_request_body(const ProviderConfig& config, const PromptText& prompt,
                        const GenerationParams& params) {
    json body = config.request_template;
    fill_placeholders(body, config, prompt, params);
    return body;
}

std::optional<std::string> extract_text(const json& response, const std::string& path) {
    const json* node = &response;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find('/', start);
        if (end == std::string::npos) end = path.size();
        const std::string seg = path.substr(start, end - start);
        if (!seg.empty()) {
            if (node->is_array()) {
                std::size_t idx = 0;
                try {
                    idx = std::stoul(seg);
                } catch (const std::exception&) {
                    return std::nullopt;
                }
                if (idx >= node->size()) return std::nullopt;
                node = &(*node)[idx];
            } else if (node->is_object()) {
                auto it = node->find(seg);
                if (it == node->end()) return std::nullopt;
                node = &*it;
            } else {
                return std::nullopt;
            }
        }
        start = end + 1;
    }
    if (!node->is_string()) return std::nullopt;
    return node->get<std::string>();
}

HttpResponse HttpTransport::post(const std::string& url,
                                 const std::map<std::string, std::string>& headers,
                                 const std::string& body, int timeout_ms) {
    HttpResponse out;
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    const auto sec = timeout_ms / 1000;
    const auto usec = (timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(parts.path, h, body, "application/json");
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.transport_ok = true;
    out.status = res->status;
    out.body = res->body;
    return out;
}

RemoteAnnotator::RemoteAnnotator(ProviderConfig config, std::shared_ptr<Transport> transport,
                                 std::shared_ptr<const ResponseCache> cache)
    : config_(std::move(config)), transport_(std::move(transport)), cache_(std::move(cache)) {
    if (!transport_) throw ConfigError("provider " + config_.id + ": no transport");
    if (!config_.auth_env.empty()) {
        const char* value = std::getenv(config_.auth_env.c_str());
        if (value == nullptr || *value == '\0')
            throw ConfigError("provider " + config_.id + ": environment variable " +
                              config_.auth_env + " is not set");
        credential_ = value;
    }
}

std::vector<ItemResult> RemoteAnnotator::annotate(const PromptText& prompt,
                                                  const GenerationParams& params) {
    const std::size_t expected = prompt.unit_ids.size();
    auto to_results = [&](const ParseResult& parsed, const std::string& raw) {
        std::vector<ItemResult> out;
        for (std::size_t i = 0; i < expected; ++i)
            out.push_back({prompt.unit_ids[i],
                           AnnotatorPrediction{config_.id, prompt.unit_ids[i], prompt.task,
                                               parsed.items[i].label, parsed.items[i].confidence,
                                               raw, params},
                           {}});
        return out;
    };

    const auto key = ResponseCache::key(config_.id, prompt.text, params);
    if (cache_) {
        if (auto cached = cache_->get(config_.id, key)) {
            auto parsed = parse_response(*cached, expected);
            if (parsed.ok()) return to_results(parsed, *cached);
        }
    }

    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!credential_.empty()) headers[config_.auth_header] = config_.auth_prefix + credential_;
    const std::string body = build_request_body(config_, prompt, params).dump();

    std::string failure;
    constexpr int kAttempts = 2;  // one retry
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        auto res = transport_->post(config_.base_url, headers, body, config_.timeout_ms);
        if (!res.transport_ok) {
            failure = "transport: " + res.error;
            continue;
        }
        if (res.status < 200 || res.status >= 300) {
            failure = "http status " + std::to_string(res.status);
            continue;
        }
        json doc = json::parse(res.body, nullptr, false);
        if (doc.is_discarded()) {
            failure = "response is not JSON";
            continue;
        }
        auto text = extract_text(doc, config_.response_path);
        if (!text) {
            failure = "response lacks " + config_.response_path;
            continue;
        }
        auto parsed = parse_response(*text, expected);
        if (!parsed.ok()) {
            failure = "unparseable: " + parsed.error;
            continue;
        }
        if (cache_) cache_->put(config_.id, key, *text);
        return to_results(parsed, *text);
    }

    std::vector<ItemResult> out;
    for (const auto& id : prompt.unit_ids) out.push_back({id, std::nullopt, failure});
    return out;
}

}  // namespace hitl
