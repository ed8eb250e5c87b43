#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hitl/corpus.hpp"
#include "hitl/types.hpp"

namespace hitl {

enum class PromptMode { ZSS, FSS };

enum class Transformation { Baseline, Rephrased, ExampleOrderShuffled, Shortened };

std::string_view to_string(PromptMode mode);
PromptMode parse_prompt_mode(std::string_view name);
std::string_view to_string(Transformation t);
Transformation parse_transformation(std::string_view name);

inline constexpr int kDefaultMaxTokens = 1000;
inline constexpr std::array<int, 3> kDefaultTokenLimits = {250, 1000, 2000};

struct FewShotExample {
    AnnotationUnit unit;
    Label label;
};

struct PromptSetting {
    PromptMode mode = PromptMode::ZSS;
    std::vector<FewShotExample> few_shot_examples;  // used only in FSS
};

struct PromptVariant {
    std::string variant_id;
    Transformation transformation = Transformation::Baseline;
    int max_tokens = kDefaultMaxTokens;
    std::uint64_t shuffle_seed = 0;

    static PromptVariant baseline(int max_tokens = kDefaultMaxTokens);
};

struct PromptText {
    std::string text;
    TaskKind task = TaskKind::Quality;
    std::vector<UnitId> unit_ids;  // one per rated item, in rating order
    std::string variant_id;
    int max_tokens = kDefaultMaxTokens;
};

// A prompt template is a set of named sections. Files use `[section]` header
// lines; the recognised sections are instruction, rephrased, rationale, scale,
// examples, query, pane, and output. Placeholders: {query} {question}
// {options} {examples} {index} {n_items}.
class PromptTemplate {
public:
    static PromptTemplate parse(std::string_view text);

    bool has(const std::string& section) const { return sections_.contains(section); }
    const std::string& section(const std::string& name) const;
    const std::map<std::string, std::string>& sections() const { return sections_; }

private:
    std::map<std::string, std::string> sections_;
};

class TemplateSet {
public:
    // Compiled-in copies of the files under templates/.
    static TemplateSet builtin();
    // Built-in set with any `<task>.<zss|fss>.tmpl` file in `dir` overriding it.
    static TemplateSet with_overrides(const std::filesystem::path& dir);

    const PromptTemplate& get(TaskKind task, PromptMode mode) const;
    void set(TaskKind task, PromptMode mode, PromptTemplate tmpl);

private:
    std::map<std::pair<TaskKind, PromptMode>, PromptTemplate> templates_;
};

std::string render_options(const std::vector<std::string>& options);

// `items` is one unit for pair-wise tasks, or every pane of one query for
// Preference. Throws InvariantError on arity mismatch or an empty FSS example list.
PromptText build_prompt(TaskKind task, std::span<const AnnotationUnit> items,
                        const PromptSetting& setting, const PromptVariant& variant,
                        const TemplateSet& templates = TemplateSet::builtin());

// Baseline plus the three transformations, each crossed with every token limit.
std::vector<PromptVariant> enumerate_variants(
    const PromptSetting& setting,
    std::span<const int> token_limits = kDefaultTokenLimits,
    std::uint64_t shuffle_seed = 0);

// One example per label value 1..5 where the pool has one (first in pool order).
std::vector<FewShotExample> select_few_shot(TaskKind task, std::span<const AnnotationUnit> pool);

}  // namespace hitl
