#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitl/ensemble.hpp"
#include "hitl/types.hpp"

namespace hitl {

enum class ReviewStatus { Pending, Reviewed };

std::string_view to_string(ReviewStatus s);

struct ModelVote {
    std::string annotator_id;
    Label label;
    double confidence = 0.0;

    friend bool operator==(const ModelVote&, const ModelVote&) = default;
};

struct ReviewItem {
    std::string item_id;
    UnitId unit_id;
    TaskKind task = TaskKind::Quality;
    std::string query;
    std::string question;
    std::vector<std::string> options;
    std::optional<Label> aggregated_label;
    double mean_confidence = 0.0;
    double confidence_sd = 0.0;
    std::vector<ModelVote> predictions;
    HitlDecision reason = HitlDecision::FlagLowConfidence;

    ReviewStatus status = ReviewStatus::Pending;
    std::optional<Label> human_label;
    std::optional<std::string> reviewer_id;
    std::optional<std::string> reviewed_at;
    // Advisory claim; never blocks another reviewer.
    std::optional<std::string> lease_holder;
    std::optional<std::string> lease_until;

    static std::string make_id(TaskKind task, const UnitId& unit) {
        return std::string(to_string(task)) + ":" + unit;
    }
};

nlohmann::ordered_json to_json(const ReviewItem& item);
ReviewItem review_item_from_json(const nlohmann::json& j);
// Fields fixed at enqueue time; equal content means a re-enqueue is a no-op.
nlohmann::ordered_json content_json(const ReviewItem& item);

struct ReviewProgress {
    std::size_t pending = 0;
    std::size_t reviewed = 0;
    std::size_t accepted = 0;  // auto-accepted units registered by the pipeline
    std::optional<double> her_so_far;  // over accepted + flagged; nullopt when empty
};

class ReviewError : public Error {
public:
    enum class Kind { NotFound, AlreadyReviewed, InvalidLabel, Conflict };
    ReviewError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Append-only, replayable review queue. Mutations are serialised through one
// writer and appended to the log before they become visible; readers work on
// immutable snapshots.
class ReviewStore {
public:
    using Clock = std::function<std::string()>;

    // Opens (or creates) the log at `path` and replays it. An empty path keeps
    // the store in memory only.
    explicit ReviewStore(std::filesystem::path path = {}, Clock clock = {});
    ~ReviewStore();

    ReviewStore(const ReviewStore&) = delete;
    ReviewStore& operator=(const ReviewStore&) = delete;

    // Returns how many items were newly added. Throws ReviewError(Conflict) when
    // an id exists with different content; nothing is written in that case.
    std::size_t enqueue(const std::vector<ReviewItem>& items);

    // Records how many units a pipeline batch auto-accepted; re-registering a
    // batch replaces its previous count.
    void register_accepted(const std::string& batch, std::size_t count);

    std::vector<ReviewItem> next_pending(std::optional<TaskKind> task, std::size_t limit) const;
    std::optional<ReviewItem> get(const std::string& item_id) const;
    std::vector<ReviewItem> all() const;

    ReviewItem submit_review(const std::string& item_id, int label, const std::string& reviewer_id);
    ReviewItem lease(const std::string& item_id, const std::string& reviewer_id,
                     const std::string& until);

    ReviewProgress progress() const;

    const std::filesystem::path& path() const { return path_; }

    static std::string utc_now();

private:
    struct State {
        std::vector<ReviewItem> items;  // enqueue order
        std::unordered_map<std::string, std::size_t> index;
        std::map<std::string, std::size_t> accepted;
    };

    std::shared_ptr<const State> snapshot() const;
    void publish(std::shared_ptr<const State> next);
    void append(const nlohmann::ordered_json& record);
    static void apply(State& state, const nlohmann::json& record);

    std::filesystem::path path_;
    Clock clock_;
    std::FILE* log_ = nullptr;

    std::mutex write_mu_;
    mutable std::mutex snapshot_mu_;
    std::shared_ptr<const State> state_;
};

}  // namespace hitl
