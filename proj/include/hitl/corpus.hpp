#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hitl/types.hpp"

namespace hitl {

inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 5;
inline constexpr std::size_t kMinPanesPerQuery = 3;

struct ClarificationPane {
    std::string pane_id;
    std::string question;
    std::vector<std::string> options;  // order is significant

    friend bool operator==(const ClarificationPane&, const ClarificationPane&) = default;
};

struct AnnotationUnit {
    UnitId unit_id;  // equal to the pane id
    std::string query_id;
    std::string query;
    ClarificationPane pane;
    std::map<TaskKind, Label> gold;

    std::optional<Label> gold_for(TaskKind task) const;

    friend bool operator==(const AnnotationUnit&, const AnnotationUnit&) = default;
};

struct QueryGroup {
    std::string query_id;
    std::string query;
    std::vector<UnitId> unit_ids;

    friend bool operator==(const QueryGroup&, const QueryGroup&) = default;
};

struct CorpusSummary {
    std::size_t queries = 0;
    std::size_t pairs = 0;
    double panes_per_query_mean = 0.0;
    double panes_per_query_sd = 0.0;  // population SD
    std::size_t panes_per_query_min = 0;
    std::size_t panes_per_query_max = 0;
    double options_mean = 0.0;
    double options_sd = 0.0;
    std::size_t options_min = 0;
    std::size_t options_max = 0;
};

// Immutable after construction; safe to share across readers.
class Corpus {
public:
    Corpus() = default;
    // Validates every invariant and throws InvariantError on the first violation.
    Corpus(std::vector<QueryGroup> queries, std::vector<AnnotationUnit> units,
           bool strict_group_size = false);

    const std::vector<QueryGroup>& queries() const { return queries_; }
    const std::vector<AnnotationUnit>& units() const { return units_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    bool empty() const { return units_.empty(); }
    std::size_t size() const { return units_.size(); }

    const AnnotationUnit& unit(const UnitId& id) const;
    const AnnotationUnit* find(const UnitId& id) const;
    bool contains(const UnitId& id) const { return find(id) != nullptr; }
    const QueryGroup& group_of(const UnitId& id) const;

    CorpusSummary summary() const;

    friend bool operator==(const Corpus& a, const Corpus& b) {
        return a.queries_ == b.queries_ && a.units_ == b.units_;
    }

private:
    std::vector<QueryGroup> queries_;
    std::vector<AnnotationUnit> units_;
    std::vector<std::string> warnings_;
    std::unordered_map<UnitId, std::size_t> unit_index_;
    std::unordered_map<UnitId, std::size_t> group_index_;
};

struct LoadOptions {
    // Reject query groups with fewer than three panes instead of warning.
    bool strict_group_size = false;
};

Corpus parse_corpus(std::istream& in, const LoadOptions& options = {});
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});

// Canonical line-delimited form, one query group per line.
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct CorpusSplit {
    Corpus subset;
    Corpus remainder;
};

// Uniform sample without replacement; size is round-half-up(fraction * n), at
// least 1. Both halves keep the original unit order.
CorpusSplit sample_subset(const Corpus& corpus, double fraction, std::uint64_t seed);

// Builds a corpus from a tab-separated dump with a header row. Recognised
// columns: query_id, query, pane_id, question, option_1..option_5, and one
// column per task key (preference, quality, coverage, diversity, option_order).
Corpus convert_tsv(std::istream& in, const LoadOptions& options = {});

// Synthetic corpus generator used for simulation runs and fixtures.
struct SynthSpec {
    std::size_t units = 1000;
    std::size_t min_panes = 3;
    std::size_t max_panes = 8;
    std::size_t min_options = kMinOptions;
    std::size_t max_options = kMaxOptions;
    // Gold prior over labels 1..5, shared by every task.
    std::array<double, kNumLabels> label_prior{0.2, 0.2, 0.2, 0.2, 0.2};
    std::uint64_t seed = 1;
};

Corpus synthesize_corpus(const SynthSpec& spec);

}  // namespace hitl
