#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hitl/annotators.hpp"

namespace hitl {

// Declarative description of an HTTP completion endpoint. New providers only
// need a new entry, never code.
struct ProviderConfig {
    std::string id;
    std::string base_url;  // full URL the request is POSTed to
    std::string model;
    std::string auth_env;  // environment variable holding the credential; empty = none
    std::string auth_header = "Authorization";
    std::string auth_prefix = "Bearer ";
    // JSON body; string values "{prompt}", "{model}", "{temperature}" and
    // "{max_tokens}" are replaced (the last two by numbers).
    nlohmann::json request_template;
    // Slash-separated path to the completion text, numeric segments index arrays.
    std::string response_path = "choices/0/message/content";
    int timeout_ms = 60000;
    int max_concurrency = 4;
    double rate_per_minute = 60.0;

    static ProviderConfig from_json(const nlohmann::json& j);
    static nlohmann::json default_request_template();
};

struct HttpResponse {
    bool transport_ok = false;
    int status = 0;
    std::string body;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url,
                              const std::map<std::string, std::string>& headers,
                              const std::string& body, int timeout_ms) = 0;
};

// cpp-httplib backed transport.
class HttpTransport final : public Transport {
public:
    HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                      const std::string& body, int timeout_ms) override;
};

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;
};
UrlParts split_url(const std::string& url);

nlohmann::json build_request_body(const ProviderConfig& config, const PromptText& prompt,
                                  const GenerationParams& params);
std::optional<std::string> extract_text(const nlohmann::json& response, const std::string& path);

class RemoteAnnotator final : public Annotator {
public:
    RemoteAnnotator(ProviderConfig config, std::shared_ptr<Transport> transport,
                    std::shared_ptr<const ResponseCache> cache = nullptr);

    const std::string& id() const override { return config_.id; }
    std::vector<ItemResult> annotate(const PromptText& prompt,
                                     const GenerationParams& params) override;
    int max_concurrency() const override { return std::max(1, config_.max_concurrency); }
    double rate_per_minute() const override { return config_.rate_per_minute; }

private:
    ProviderConfig config_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<const ResponseCache> cache_;
    std::string credential_;
};

}  // namespace hitl
