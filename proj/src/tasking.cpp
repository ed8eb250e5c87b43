#include "hitl/tasking.hpp"

#include <fstream>
#include <sstream>

#include "builtin_templates.hpp"
#include "hitl/rng.hpp"

namespace hitl {

std::string_view to_string(PromptMode mode) { return mode == PromptMode::ZSS ? "zss" : "fss"; }

PromptMode parse_prompt_mode(std::string_view name) {
    if (name == "zss" || name == "ZSS") return PromptMode::ZSS;
    if (name == "fss" || name == "FSS") return PromptMode::FSS;
    throw ConfigError("unknown prompt mode '" + std::string(name) + "'");
}

std::string_view to_string(Transformation t) {
    switch (t) {
        case Transformation::Baseline: return "baseline";
        case Transformation::Rephrased: return "rephrased";
        case Transformation::ExampleOrderShuffled: return "shuffled";
        case Transformation::Shortened: return "shortened";
    }
    return "unknown";
}

Transformation parse_transformation(std::string_view name) {
    for (auto t : {Transformation::Baseline, Transformation::Rephrased,
                   Transformation::ExampleOrderShuffled, Transformation::Shortened})
        if (to_string(t) == name) return t;
    throw ConfigError("unknown prompt transformation '" + std::string(name) + "'");
}

PromptVariant PromptVariant::baseline(int max_tokens) {
    return {"baseline@" + std::to_string(max_tokens), Transformation::Baseline, max_tokens, 0};
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
    PromptTemplate t;
    std::string current;
    std::string body;
    auto flush = [&] {
        if (current.empty()) return;
        while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
        t.sections_[current] = body;
        body.clear();
    };
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() >= 3 && line.front() == '[' && line.back() == ']' &&
            line.find(' ') == std::string::npos) {
            flush();
            current = line.substr(1, line.size() - 2);
            continue;
        }
        if (current.empty()) continue;  // preamble
        body += line;
        body += '\n';
    }
    flush();
    for (const char* required : {"instruction", "scale", "query", "pane", "output"})
        if (!t.has(required))
            throw ConfigError(std::string("prompt template lacks section [") + required + "]");
    return t;
}

const std::string& PromptTemplate::section(const std::string& name) const {
    auto it = sections_.find(name);
    if (it == sections_.end()) throw ConfigError("prompt template lacks section [" + name + "]");
    return it->second;
}

TemplateSet TemplateSet::builtin() {
    static const TemplateSet cached = [] {
        TemplateSet s;
        for (auto task : kAllTasks)
            for (auto mode : {PromptMode::ZSS, PromptMode::FSS}) {
                const auto key = std::string(to_string(task)) + "." + std::string(to_string(mode));
                const auto& sources = detail::builtin_template_sources();
                auto it = sources.find(key);
                if (it == sources.end()) throw ConfigError("no built-in template " + key);
                s.set(task, mode, PromptTemplate::parse(it->second));
            }
        return s;
    }();
    return cached;
}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& dir) {
    TemplateSet s = builtin();
    if (!std::filesystem::is_directory(dir))
        throw ConfigError("template directory " + dir.string() + " does not exist");
    for (auto task : kAllTasks)
        for (auto mode : {PromptMode::ZSS, PromptMode::FSS}) {
            const auto file = dir / (std::string(to_string(task)) + "." +
                                     std::string(to_string(mode)) + ".tmpl");
            if (!std::filesystem::exists(file)) continue;
            std::ifstream in(file);
            std::stringstream ss;
            ss << in.rdbuf();
            s.set(task, mode, PromptTemplate::parse(ss.str()));
        }
    return s;
}

const PromptTemplate& TemplateSet::get(TaskKind task, PromptMode mode) const {
    auto it = templates_.find({task, mode});
    if (it == templates_.end())
        throw ConfigError("no template for " + std::string(to_string(task)) + "." +
                          std::string(to_string(mode)));
    return it->second;
}

void TemplateSet::set(TaskKind task, PromptMode mode, PromptTemplate tmpl) {
    templates_.insert_or_assign({task, mode}, std::move(tmpl));
}

namespace {

std::string substitute(const std::string& text, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            const auto close = text.find('}', i + 1);
            if (close != std::string::npos) {
                auto it = vars.find(text.substr(i + 1, close - i - 1));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += text[i++];
    }
    return out;
}

std::string render_examples(const std::vector<FewShotExample>& examples) {
    std::string out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        if (i) out += "\n\n";
        out += "Example " + std::to_string(i + 1) + "\n";
        out += "Query: " + ex.unit.query + "\n";
        out += "Question: " + ex.unit.pane.question + "\n";
        out += "Options (left to right): " + render_options(ex.unit.pane.options) + "\n";
        out += "Label: " + std::to_string(ex.label.value());
    }
    return out;
}

void check_arity(TaskKind task, std::span<const AnnotationUnit> items) {
    if (items.empty()) throw InvariantError("prompt target has no units");
    if (!is_listwise(task)) {
        if (items.size() != 1)
            throw InvariantError(std::string(to_string(task)) +
                                 " is pair-wise and takes exactly one unit, got " +
                                 std::to_string(items.size()));
        return;
    }
    for (const auto& u : items)
        if (u.query_id != items.front().query_id)
            throw InvariantError("preference prompt mixes panes of queries " +
                                 items.front().query_id + " and " + u.query_id);
}

}  // namespace

std::string render_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += " | ";
        out += "[" + std::to_string(i + 1) + "] " + options[i];
    }
    return out;
}

PromptText build_prompt(TaskKind task, std::span<const AnnotationUnit> items,
                        const PromptSetting& setting, const PromptVariant& variant,
                        const TemplateSet& templates) {
    check_arity(task, items);
    if (setting.mode == PromptMode::FSS && setting.few_shot_examples.empty())
        throw InvariantError("few-shot setting with an empty example list");

    const auto& tmpl = templates.get(task, setting.mode);

    std::vector<FewShotExample> examples;
    if (setting.mode == PromptMode::FSS) {
        examples = setting.few_shot_examples;
        if (variant.transformation == Transformation::ExampleOrderShuffled) {
            Rng rng(hash_combine(variant.shuffle_seed, 0xe5u));
            rng.shuffle(std::span(examples));
        }
    }

    std::map<std::string, std::string> vars{
        {"query", items.front().query},
        {"n_items", std::to_string(items.size())},
        {"examples", render_examples(examples)},
    };

    std::string description;
    if (variant.transformation == Transformation::Rephrased && tmpl.has("rephrased"))
        description = tmpl.section("rephrased");
    else
        description = tmpl.section("instruction");

    std::vector<std::string> blocks;
    std::vector<std::string> item_blocks;
    item_blocks.push_back(substitute(tmpl.section("query"), vars));
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto pane_vars = vars;
        pane_vars["index"] = std::to_string(i + 1);
        pane_vars["question"] = items[i].pane.question;
        pane_vars["options"] = render_options(items[i].pane.options);
        item_blocks.push_back(substitute(tmpl.section("pane"), pane_vars));
    }

    std::string examples_block;
    if (setting.mode == PromptMode::FSS) {
        examples_block = tmpl.has("examples")
                             ? substitute(tmpl.section("examples"), vars)
                             : "Examples:\n" + vars["examples"];
    }

    if (variant.transformation == Transformation::Rephrased) {
        // Structural change: items first, then the task description.
        blocks.insert(blocks.end(), item_blocks.begin(), item_blocks.end());
        blocks.push_back(substitute(description, vars));
        blocks.push_back(substitute(tmpl.section("scale"), vars));
        if (!examples_block.empty()) blocks.push_back(examples_block);
    } else {
        blocks.push_back(substitute(description, vars));
        if (variant.transformation != Transformation::Shortened && tmpl.has("rationale"))
            blocks.push_back(substitute(tmpl.section("rationale"), vars));
        blocks.push_back(substitute(tmpl.section("scale"), vars));
        if (!examples_block.empty()) blocks.push_back(examples_block);
        blocks.insert(blocks.end(), item_blocks.begin(), item_blocks.end());
    }
    blocks.push_back(substitute(tmpl.section("output"), vars));

    PromptText prompt;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) prompt.text += "\n\n";
        prompt.text += blocks[i];
    }
    prompt.text += '\n';
    prompt.task = task;
    for (const auto& u : items) prompt.unit_ids.push_back(u.unit_id);
    prompt.variant_id = variant.variant_id;
    prompt.max_tokens = variant.max_tokens;
    return prompt;
}

std::vector<PromptVariant> enumerate_variants(const PromptSetting& /*setting*/,
                                              std::span<const int> token_limits,
                                              std::uint64_t shuffle_seed) {
    std::vector<PromptVariant> out;
    for (auto t : {Transformation::Baseline, Transformation::Rephrased,
                   Transformation::ExampleOrderShuffled, Transformation::Shortened})
        for (int tokens : token_limits) {
            if (tokens <= 0) throw ConfigError("max_tokens must be positive");
            out.push_back({std::string(to_string(t)) + "@" + std::to_string(tokens), t, tokens,
                           shuffle_seed});
        }
    return out;
}

std::vector<FewShotExample> select_few_shot(TaskKind task, std::span<const AnnotationUnit> pool) {
    std::vector<FewShotExample> out;
    for (int v = kMinLabel; v <= kMaxLabel; ++v)
        for (const auto& u : pool)
            if (auto g = u.gold_for(task); g && g->value() == v) {
                out.push_back({u, *g});
                break;
            }
    return out;
}

}  // namespace hitl
