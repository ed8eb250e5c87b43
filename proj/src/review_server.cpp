#include "hitl/review_server.hpp"

#include <httplib.h>

namespace hitl {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void send(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send(res, status, ojson{{"error", message}});
}

int status_for(ReviewError::Kind kind) {
    switch (kind) {
        case ReviewError::Kind::NotFound: return 404;
        case ReviewError::Kind::AlreadyReviewed: return 409;
        case ReviewError::Kind::Conflict: return 409;
        case ReviewError::Kind::InvalidLabel: return 422;
    }
    return 500;
}

ojson progress_json(const ReviewProgress& p) {
    return ojson{{"pending", p.pending},
                 {"reviewed", p.reviewed},
                 {"accepted", p.accepted},
                 {"her_so_far", p.her_so_far ? ojson(*p.her_so_far) : ojson()}};
}

}  // namespace

ReviewServer::ReviewServer(ReviewStore& store, ReviewServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
    auto& srv = *server_;

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (options_.bearer_token.empty() || req.path.rfind("/api/", 0) != 0)
            return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("Authorization") == "Bearer " + options_.bearer_token)
            return httplib::Server::HandlerResponse::Unhandled;
        send_error(res, 401, "missing or invalid bearer token");
        return httplib::Server::HandlerResponse::Handled;
    });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                 std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const ReviewError& e) {
            send_error(res, status_for(e.kind()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, std::string("malformed request: ") + e.what());
        } catch (const RangeError& e) {
            send_error(res, 422, e.what());
        } catch (const Error& e) {
            send_error(res, 422, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    });

    srv.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
        std::optional<TaskKind> task;
        if (req.has_param("task") && !req.get_param_value("task").empty()) {
            task = try_parse_task(req.get_param_value("task"));
            if (!task) return send_error(res, 422, "unknown task " + req.get_param_value("task"));
        }
        std::size_t limit = 50;
        if (req.has_param("limit")) {
            try {
                const long v = std::stol(req.get_param_value("limit"));
                if (v < 0) throw std::out_of_range("negative");
                limit = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                return send_error(res, 422, "limit must be a non-negative integer");
            }
        }
        ojson items = ojson::array();
        for (const auto& item : store_.next_pending(task, limit)) items.push_back(to_json(item));
        send(res, 200, ojson{{"items", std::move(items)}, {"progress", progress_json(store_.progress())}});
    });

    srv.Get(R"(/api/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        auto item = store_.get(id);
        if (!item) return send_error(res, 404, "unknown item " + id);
        send(res, 200, to_json(*item));
    });

    srv.Post(R"(/api/items/([^/]+)/review)", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
        const auto id = req.matches[1].str();
        const json body = json::parse(req.body);
        if (!body.contains("label") || !body.at("label").is_number_integer())
            return send_error(res, 422, "label must be an integer 1-5");
        const auto reviewer = body.value("reviewer_id", std::string("anonymous"));
        send(res, 200, to_json(store_.submit_review(id, body.at("label").get<int>(), reviewer)));
    });

    srv.Post(R"(/api/items/([^/]+)/lease)", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
        const auto id = req.matches[1].str();
        const json body = json::parse(req.body);
        send(res, 200, to_json(store_.lease(id, body.at("reviewer_id").get<std::string>(),
                                            body.value("until", std::string()))));
    });

    srv.Post("/api/items", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        std::vector<ReviewItem> items;
        for (const auto& j : body.value("items", json::array()))
            items.push_back(review_item_from_json(j));
        const auto added = store_.enqueue(items);
        if (body.contains("batch"))
            store_.register_accepted(body.at("batch").get<std::string>(),
                                     body.value("accepted", std::size_t{0}));
        send(res, 200, ojson{{"accepted", added}, {"progress", progress_json(store_.progress())}});
    });

    srv.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
        send(res, 200, progress_json(store_.progress()));
    });

    if (!options_.static_dir.empty()) {
        if (!srv.set_mount_point("/", options_.static_dir.string()))
            throw ConfigError("static directory " + options_.static_dir.string() + " not found");
    }
}

int ReviewServer::bind() {
    if (options_.port == 0)
        port_ = server_->bind_to_any_port(options_.host);
    else
        port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
    if (port_ < 0) throw Error("cannot bind review server to " + options_.host + ":" +
                               std::to_string(options_.port));
    return port_;
}

int ReviewServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void ReviewServer::run() {
    bind();
    server_->listen_after_bind();
}

void ReviewServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace hitl
