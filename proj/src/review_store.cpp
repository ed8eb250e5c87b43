#include "hitl/review_store.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <unistd.h>

namespace hitl {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

std::string_view to_string(ReviewStatus s) {
    return s == ReviewStatus::Pending ? "pending" : "reviewed";
}

namespace {

template <typename T>
ojson opt(const std::optional<T>& v) {
    return v ? ojson(*v) : ojson();
}

ojson opt_label(const std::optional<Label>& v) { return v ? ojson(v->value()) : ojson(); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

std::optional<Label> opt_label_from(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return Label(it->get<int>());
}

}  // namespace

ojson content_json(const ReviewItem& item) {
    ojson j;
    j["item_id"] = item.item_id;
    j["unit_id"] = item.unit_id;
    j["task"] = to_string(item.task);
    j["query"] = item.query;
    j["question"] = item.question;
    j["options"] = item.options;
    j["aggregated_label"] = opt_label(item.aggregated_label);
    j["mean_confidence"] = item.mean_confidence;
    j["confidence_sd"] = item.confidence_sd;
    ojson preds = ojson::array();
    for (const auto& p : item.predictions)
        preds.push_back(ojson{{"annotator_id", p.annotator_id},
                              {"label", p.label.value()},
                              {"confidence", p.confidence}});
    j["predictions"] = std::move(preds);
    j["reason"] = to_string(item.reason);
    return j;
}

ojson to_json(const ReviewItem& item) {
    ojson j = content_json(item);
    j["status"] = to_string(item.status);
    j["human_label"] = opt_label(item.human_label);
    j["reviewer_id"] = opt(item.reviewer_id);
    j["reviewed_at"] = opt(item.reviewed_at);
    j["lease_holder"] = opt(item.lease_holder);
    j["lease_until"] = opt(item.lease_until);
    return j;
}

ReviewItem review_item_from_json(const json& j) {
    try {
        ReviewItem item;
        item.unit_id = j.at("unit_id").get<std::string>();
        item.task = parse_task(j.at("task").get<std::string>());
        item.item_id = j.contains("item_id") ? j.at("item_id").get<std::string>()
                                             : ReviewItem::make_id(item.task, item.unit_id);
        item.query = j.value("query", "");
        item.question = j.value("question", "");
        item.options = j.value("options", std::vector<std::string>{});
        item.aggregated_label = opt_label_from(j, "aggregated_label");
        item.mean_confidence = j.value("mean_confidence", 0.0);
        item.confidence_sd = j.value("confidence_sd", 0.0);
        if (auto it = j.find("predictions"); it != j.end())
            for (const auto& p : *it)
                item.predictions.push_back({p.at("annotator_id").get<std::string>(),
                                            Label(p.at("label").get<int>()),
                                            p.at("confidence").get<double>()});
        item.reason = parse_decision(j.value("reason", "flag_low_confidence"));
        if (j.value("status", "pending") == "reviewed") item.status = ReviewStatus::Reviewed;
        item.human_label = opt_label_from(j, "human_label");
        item.reviewer_id = opt_string(j, "reviewer_id");
        item.reviewed_at = opt_string(j, "reviewed_at");
        item.lease_holder = opt_string(j, "lease_holder");
        item.lease_until = opt_string(j, "lease_until");
        if ((item.status == ReviewStatus::Reviewed) != item.human_label.has_value())
            throw InvariantError("item " + item.item_id +
                                 ": reviewed status and human label disagree");
        return item;
    } catch (const json::exception& e) {
        throw ParseError(std::string("review item: ") + e.what());
    }
}

std::string ReviewStore::utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ReviewStore::ReviewStore(std::filesystem::path path, Clock clock)
    : path_(std::move(path)), clock_(clock ? std::move(clock) : Clock(&ReviewStore::utc_now)) {
    auto state = std::make_shared<State>();
    if (!path_.empty()) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        std::ifstream in(path_);
        std::string line;
        std::size_t n = 0;
        std::uintmax_t good_bytes = 0;
        bool torn = false;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) {
                good_bytes += 1;
                continue;
            }
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) {
                // A torn final write from a crash; anything after it is unreachable.
                if (in.peek() == EOF) {
                    torn = true;
                    break;
                }
                throw ParseError(n, "corrupt review log record in " + path_.string());
            }
            apply(*state, rec);
            good_bytes += line.size() + 1;
        }
        in.close();
        if (torn) std::filesystem::resize_file(path_, good_bytes);
        log_ = std::fopen(path_.c_str(), "ab");
        if (!log_) throw Error("cannot open review log " + path_.string());
    }
    state_ = std::move(state);
}

ReviewStore::~ReviewStore() {
    if (log_) std::fclose(log_);
}

std::shared_ptr<const ReviewStore::State> ReviewStore::snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return state_;
}

void ReviewStore::publish(std::shared_ptr<const State> next) {
    std::lock_guard lock(snapshot_mu_);
    state_ = std::move(next);
}

void ReviewStore::append(const ojson& record) {
    if (!log_) return;
    const std::string line = record.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0)
        throw Error("failed to append to review log " + path_.string());
    ::fsync(::fileno(log_));
}

void ReviewStore::apply(State& state, const json& record) {
    const auto op = record.at("op").get<std::string>();
    if (op == "enqueue") {
        auto item = review_item_from_json(record.at("item"));
        item.status = ReviewStatus::Pending;
        if (state.index.contains(item.item_id)) return;
        state.index.emplace(item.item_id, state.items.size());
        state.items.push_back(std::move(item));
    } else if (op == "accepted") {
        state.accepted[record.at("batch").get<std::string>()] = record.at("count").get<std::size_t>();
    } else if (op == "review") {
        auto& item = state.items.at(state.index.at(record.at("item_id").get<std::string>()));
        item.status = ReviewStatus::Reviewed;
        item.human_label = Label(record.at("label").get<int>());
        item.reviewer_id = record.at("reviewer_id").get<std::string>();
        item.reviewed_at = record.at("reviewed_at").get<std::string>();
        item.lease_holder.reset();
        item.lease_until.reset();
    } else if (op == "lease") {
        auto& item = state.items.at(state.index.at(record.at("item_id").get<std::string>()));
        item.lease_holder = record.at("reviewer_id").get<std::string>();
        item.lease_until = record.at("until").get<std::string>();
    } else {
        throw ParseError("unknown review log op '" + op + "'");
    }
}

std::size_t ReviewStore::enqueue(const std::vector<ReviewItem>& items) {
    std::lock_guard lock(write_mu_);
    auto current = snapshot();
    std::vector<const ReviewItem*> fresh;
    std::unordered_map<std::string, const ReviewItem*> batch;
    for (const auto& item : items) {
        if (auto it = current->index.find(item.item_id); it != current->index.end()) {
            if (content_json(current->items[it->second]) != content_json(item))
                throw ReviewError(ReviewError::Kind::Conflict,
                                  "item " + item.item_id + " already exists with different content");
            continue;
        }
        if (auto [it, inserted] = batch.emplace(item.item_id, &item); !inserted) {
            if (content_json(*it->second) != content_json(item))
                throw ReviewError(ReviewError::Kind::Conflict,
                                  "item " + item.item_id + " appears twice with different content");
            continue;
        }
        fresh.push_back(&item);
    }
    if (fresh.empty()) return 0;
    auto next = std::make_shared<State>(*current);
    for (const auto* item : fresh) {
        ojson rec{{"op", "enqueue"}, {"item", content_json(*item)}};
        append(rec);
        apply(*next, rec);
    }
    publish(std::move(next));
    return fresh.size();
}

void ReviewStore::register_accepted(const std::string& batch, std::size_t count) {
    std::lock_guard lock(write_mu_);
    auto current = snapshot();
    if (auto it = current->accepted.find(batch); it != current->accepted.end() && it->second == count)
        return;
    ojson rec{{"op", "accepted"}, {"batch", batch}, {"count", count}};
    append(rec);
    auto next = std::make_shared<State>(*current);
    apply(*next, rec);
    publish(std::move(next));
}

std::vector<ReviewItem> ReviewStore::next_pending(std::optional<TaskKind> task,
                                                  std::size_t limit) const {
    auto s = snapshot();
    std::vector<ReviewItem> out;
    for (const auto& item : s->items) {
        if (out.size() >= limit) break;
        if (item.status != ReviewStatus::Pending) continue;
        if (task && item.task != *task) continue;
        out.push_back(item);
    }
    return out;
}

std::optional<ReviewItem> ReviewStore::get(const std::string& item_id) const {
    auto s = snapshot();
    auto it = s->index.find(item_id);
    if (it == s->index.end()) return std::nullopt;
    return s->items[it->second];
}

std::vector<ReviewItem> ReviewStore::all() const { return snapshot()->items; }

ReviewItem ReviewStore::submit_review(const std::string& item_id, int label,
                                      const std::string& reviewer_id) {
    if (!valid_label(label))
        throw ReviewError(ReviewError::Kind::InvalidLabel,
                          "label " + std::to_string(label) + " outside [1,5]");
    std::lock_guard lock(write_mu_);
    auto current = snapshot();
    auto it = current->index.find(item_id);
    if (it == current->index.end())
        throw ReviewError(ReviewError::Kind::NotFound, "unknown item " + item_id);
    if (current->items[it->second].status == ReviewStatus::Reviewed)
        throw ReviewError(ReviewError::Kind::AlreadyReviewed, "item " + item_id + " already reviewed");
    ojson rec{{"op", "review"},
              {"item_id", item_id},
              {"label", label},
              {"reviewer_id", reviewer_id},
              {"reviewed_at", clock_()}};
    append(rec);
    auto next = std::make_shared<State>(*current);
    apply(*next, rec);
    ReviewItem updated = next->items[it->second];
    publish(std::move(next));
    return updated;
}

ReviewItem ReviewStore::lease(const std::string& item_id, const std::string& reviewer_id,
                              const std::string& until) {
    std::lock_guard lock(write_mu_);
    auto current = snapshot();
    auto it = current->index.find(item_id);
    if (it == current->index.end())
        throw ReviewError(ReviewError::Kind::NotFound, "unknown item " + item_id);
    if (current->items[it->second].status == ReviewStatus::Reviewed)
        throw ReviewError(ReviewError::Kind::AlreadyReviewed, "item " + item_id + " already reviewed");
    ojson rec{{"op", "lease"}, {"item_id", item_id}, {"reviewer_id", reviewer_id}, {"until", until}};
    append(rec);
    auto next = std::make_shared<State>(*current);
    apply(*next, rec);
    ReviewItem updated = next->items[it->second];
    publish(std::move(next));
    return updated;
}

ReviewProgress ReviewStore::progress() const {
    auto s = snapshot();
    ReviewProgress p;
    for (const auto& item : s->items)
        (item.status == ReviewStatus::Pending ? p.pending : p.reviewed) += 1;
    for (const auto& [batch, count] : s->accepted) p.accepted += count;
    const std::size_t flagged = p.pending + p.reviewed;
    const std::size_t total = flagged + p.accepted;
    if (total > 0)
        p.her_so_far = (1.0 - static_cast<double>(flagged) / static_cast<double>(total)) * 100.0;
    return p;
}

}  // namespace hitl
