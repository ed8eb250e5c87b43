#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "hitl/review_store.hpp"

namespace httplib {
class Server;
}

namespace hitl {

struct ReviewServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::string bearer_token;  // empty disables auth
    std::filesystem::path static_dir;  // review UI bundle, served at /
};

// HTTP front of a ReviewStore:
//   GET  /api/queue?task=&limit=      pending items in enqueue order
//   GET  /api/items/{id}
//   POST /api/items/{id}/review       {label, reviewer_id}
//   POST /api/items/{id}/lease        {reviewer_id, until}
//   POST /api/items                   {batch, accepted, items[]}  (pipeline enqueue)
//   GET  /api/progress
// Errors are {"error": "..."} with 400/401/404/409/422.
class ReviewServer {
public:
    ReviewServer(ReviewStore& store, ReviewServerOptions options);
    ~ReviewServer();

    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Serves on the calling thread until stop() is called from elsewhere.
    void run();
    void stop();

    int port() const { return port_; }

private:
    void install_routes();
    int bind();

    ReviewStore& store_;
    ReviewServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace hitl
