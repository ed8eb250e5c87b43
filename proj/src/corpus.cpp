#include "hitl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hitl/rng.hpp"

namespace hitl {

using json = nlohmann::ordered_json;

std::optional<Label> AnnotationUnit::gold_for(TaskKind task) const {
    if (auto it = gold.find(task); it != gold.end()) return it->second;
    return std::nullopt;
}

namespace {

void validate_pane(const ClarificationPane& pane) {
    if (pane.pane_id.empty()) throw InvariantError("pane with empty pane_id");
    const auto n = pane.options.size();
    if (n > kMaxOptions)
        throw InvariantError("pane " + pane.pane_id + ": options length " + std::to_string(n) +
                             " > " + std::to_string(kMaxOptions));
    if (n < kMinOptions)
        throw InvariantError("pane " + pane.pane_id + ": options length " + std::to_string(n) +
                             " < " + std::to_string(kMinOptions));
    for (std::size_t i = 0; i < n; ++i)
        if (pane.options[i].empty())
            throw InvariantError("pane " + pane.pane_id + ": option " + std::to_string(i + 1) +
                                 " is empty");
}

}  // namespace

Corpus::Corpus(std::vector<QueryGroup> queries, std::vector<AnnotationUnit> units,
               bool strict_group_size)
    : queries_(std::move(queries)), units_(std::move(units)) {
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const auto& u = units_[i];
        validate_pane(u.pane);
        if (u.unit_id != u.pane.pane_id)
            throw InvariantError("unit " + u.unit_id + ": unit_id must equal pane_id");
        if (!unit_index_.emplace(u.unit_id, i).second)
            throw InvariantError("duplicate unit_id " + u.unit_id);
    }
    std::unordered_set<std::string> query_ids;
    for (std::size_t g = 0; g < queries_.size(); ++g) {
        const auto& q = queries_[g];
        if (!query_ids.insert(q.query_id).second)
            throw InvariantError("duplicate query_id " + q.query_id);
        if (q.unit_ids.empty()) throw InvariantError("query " + q.query_id + " has no panes");
        for (const auto& id : q.unit_ids) {
            if (!unit_index_.contains(id))
                throw InvariantError("query " + q.query_id + " lists unknown unit " + id);
            if (!group_index_.emplace(id, g).second)
                throw InvariantError("unit " + id + " belongs to more than one query");
            if (units_[unit_index_.at(id)].query_id != q.query_id)
                throw InvariantError("unit " + id + " has a mismatched query_id");
        }
        if (q.unit_ids.size() < kMinPanesPerQuery) {
            std::string msg = "query " + q.query_id + " has " + std::to_string(q.unit_ids.size()) +
                              " panes (< " + std::to_string(kMinPanesPerQuery) +
                              "); list-wise preference context is reduced";
            if (strict_group_size) throw InvariantError(msg);
            warnings_.push_back(std::move(msg));
        }
    }
    if (group_index_.size() != units_.size())
        throw InvariantError("every unit must belong to exactly one query group");
}

const AnnotationUnit* Corpus::find(const UnitId& id) const {
    auto it = unit_index_.find(id);
    return it == unit_index_.end() ? nullptr : &units_[it->second];
}

const AnnotationUnit& Corpus::unit(const UnitId& id) const {
    if (const auto* u = find(id)) return *u;
    throw NotFoundError("unknown unit " + id);
}

const QueryGroup& Corpus::group_of(const UnitId& id) const {
    auto it = group_index_.find(id);
    if (it == group_index_.end()) throw NotFoundError("unknown unit " + id);
    return queries_[it->second];
}

CorpusSummary Corpus::summary() const {
    CorpusSummary s;
    s.queries = queries_.size();
    s.pairs = units_.size();
    auto describe = [](const std::vector<std::size_t>& xs, double& mean, double& sd,
                       std::size_t& lo, std::size_t& hi) {
        if (xs.empty()) return;
        const double n = static_cast<double>(xs.size());
        mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
        double ss = 0.0;
        for (auto x : xs) ss += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
        sd = std::sqrt(ss / n);
        auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
        lo = *mn;
        hi = *mx;
    };
    std::vector<std::size_t> panes, options;
    for (const auto& q : queries_) panes.push_back(q.unit_ids.size());
    for (const auto& u : units_) options.push_back(u.pane.options.size());
    describe(panes, s.panes_per_query_mean, s.panes_per_query_sd, s.panes_per_query_min,
             s.panes_per_query_max);
    describe(options, s.options_mean, s.options_sd, s.options_min, s.options_max);
    return s;
}

namespace {

std::string require_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw ParseError(line, std::string("missing or non-string field '") + key + "'");
    return it->get<std::string>();
}

std::map<TaskKind, Label> parse_gold(const json& gold, const std::string& pane_id,
                                     std::size_t line) {
    std::map<TaskKind, Label> out;
    if (!gold.is_object()) throw ParseError(line, "pane " + pane_id + ": gold must be an object");
    for (const auto& [key, value] : gold.items()) {
        auto task = try_parse_task(key);
        if (!task) throw ParseError(line, "pane " + pane_id + ": unknown gold key '" + key + "'");
        if (!value.is_number_integer())
            throw ParseError(line, "pane " + pane_id + ": gold " + key + " is not an integer");
        const auto v = value.get<long long>();
        if (!valid_label(static_cast<int>(v)) || v != static_cast<int>(v))
            throw InvariantError("pane " + pane_id + ": gold " + key + "=" + std::to_string(v) +
                                 " outside [1,5]");
        out.emplace(*task, Label(static_cast<int>(v)));
    }
    return out;
}

}  // namespace

Corpus parse_corpus(std::istream& in, const LoadOptions& options) {
    std::vector<QueryGroup> queries;
    std::vector<AnnotationUnit> units;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(line, std::string("malformed record: ") + e.what());
        }
        if (!rec.is_object()) throw ParseError(line, "record is not an object");
        QueryGroup group;
        group.query_id = require_string(rec, "query_id", line);
        group.query = require_string(rec, "query", line);
        auto panes = rec.find("panes");
        if (panes == rec.end() || !panes->is_array())
            throw ParseError(line, "missing 'panes' array");
        for (const auto& p : *panes) {
            if (!p.is_object()) throw ParseError(line, "pane is not an object");
            AnnotationUnit unit;
            unit.pane.pane_id = require_string(p, "pane_id", line);
            unit.pane.question = require_string(p, "question", line);
            auto opts = p.find("options");
            if (opts == p.end() || !opts->is_array())
                throw ParseError(line, "pane " + unit.pane.pane_id + ": missing 'options' array");
            for (const auto& o : *opts) {
                if (!o.is_string())
                    throw ParseError(line, "pane " + unit.pane.pane_id + ": non-string option");
                unit.pane.options.push_back(o.get<std::string>());
            }
            if (auto g = p.find("gold"); g != p.end() && !g->is_null())
                unit.gold = parse_gold(*g, unit.pane.pane_id, line);
            unit.unit_id = unit.pane.pane_id;
            unit.query_id = group.query_id;
            unit.query = group.query;
            try {
                validate_pane(unit.pane);
            } catch (const InvariantError& e) {
                throw InvariantError("line " + std::to_string(line) + ": " + e.what());
            }
            group.unit_ids.push_back(unit.unit_id);
            units.push_back(std::move(unit));
        }
        queries.push_back(std::move(group));
    }
    return Corpus(std::move(queries), std::move(units), options.strict_group_size);
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file " + path.string());
    return parse_corpus(in, options);
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& q : corpus.queries()) {
        json rec;
        rec["query_id"] = q.query_id;
        rec["query"] = q.query;
        json panes = json::array();
        for (const auto& id : q.unit_ids) {
            const auto& u = corpus.unit(id);
            json p;
            p["pane_id"] = u.pane.pane_id;
            p["question"] = u.pane.question;
            p["options"] = u.pane.options;
            if (!u.gold.empty()) {
                json g = json::object();
                for (auto t : kAllTasks)
                    if (auto l = u.gold_for(t)) g[std::string(to_string(t))] = l->value();
                p["gold"] = std::move(g);
            }
            panes.push_back(std::move(p));
        }
        rec["panes"] = std::move(panes);
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file " + path.string());
    out << serialize_corpus(corpus);
}

namespace {

// Restricts a corpus to the given unit ids, keeping group and unit order.
Corpus restrict_to(const Corpus& corpus, const std::unordered_set<UnitId>& keep) {
    std::vector<QueryGroup> groups;
    std::vector<AnnotationUnit> units;
    for (const auto& q : corpus.queries()) {
        QueryGroup g{q.query_id, q.query, {}};
        for (const auto& id : q.unit_ids)
            if (keep.contains(id)) g.unit_ids.push_back(id);
        if (!g.unit_ids.empty()) groups.push_back(std::move(g));
    }
    for (const auto& u : corpus.units())
        if (keep.contains(u.unit_id)) units.push_back(u);
    // Partial groups are expected here, so group size is never strict.
    return Corpus(std::move(groups), std::move(units), false);
}

}  // namespace

CorpusSplit sample_subset(const Corpus& corpus, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw RangeError("subset fraction " + std::to_string(fraction) + " outside (0,1]");
    if (corpus.empty()) throw InvariantError("cannot sample from an empty corpus");

    const std::size_t n = corpus.size();
    auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
    k = std::clamp<std::size_t>(k, 1, n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hash_combine(seed, 0x5u));
    rng.shuffle(std::span(order));

    std::unordered_set<UnitId> in_subset, in_remainder;
    for (std::size_t i = 0; i < n; ++i)
        (i < k ? in_subset : in_remainder).insert(corpus.units()[order[i]].unit_id);
    return {restrict_to(corpus, in_subset), restrict_to(corpus, in_remainder)};
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, '\t')) out.push_back(cell);
    if (!line.empty() && line.back() == '\t') out.emplace_back();
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

Corpus convert_tsv(std::istream& in, const LoadOptions& options) {
    std::string text;
    std::size_t line = 1;
    if (!std::getline(in, text)) throw ParseError(1, "empty input, header row expected");
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto header = split_tabs(text);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[lower(header[i])] = i;
    for (const char* required : {"query", "question", "option_1", "option_2"})
        if (!col.contains(required))
            throw ParseError(1, std::string("header lacks required column '") + required + "'");

    std::vector<QueryGroup> groups;
    std::map<std::string, std::size_t> group_of_key;
    std::vector<AnnotationUnit> units;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.empty()) continue;
        const auto cells = split_tabs(text);
        auto get = [&](const std::string& name) -> std::string {
            auto it = col.find(name);
            if (it == col.end() || it->second >= cells.size()) return {};
            return cells[it->second];
        };
        const std::string query = get("query");
        if (query.empty()) throw ParseError(line, "empty query");
        std::string query_id = get("query_id");
        const std::string key = query_id.empty() ? query : query_id;
        auto [it, fresh] = group_of_key.emplace(key, groups.size());
        if (fresh) {
            if (query_id.empty()) query_id = "q" + std::to_string(groups.size() + 1);
            groups.push_back({query_id, query, {}});
        }
        auto& group = groups[it->second];

        AnnotationUnit unit;
        unit.pane.pane_id = get("pane_id");
        if (unit.pane.pane_id.empty()) unit.pane.pane_id = "p" + std::to_string(units.size() + 1);
        unit.pane.question = get("question");
        for (std::size_t k = 1; k <= kMaxOptions + 1; ++k) {
            auto opt = get("option_" + std::to_string(k));
            if (!opt.empty()) unit.pane.options.push_back(std::move(opt));
        }
        for (auto t : kAllTasks) {
            const auto cell = get(std::string(to_string(t)));
            if (cell.empty()) continue;
            int v = 0;
            try {
                std::size_t used = 0;
                v = std::stoi(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ParseError(line, "non-integer " + std::string(to_string(t)) + " label '" +
                                           cell + "'");
            }
            if (!valid_label(v))
                throw InvariantError("line " + std::to_string(line) + ": " +
                                     std::string(to_string(t)) + " label " + std::to_string(v) +
                                     " outside [1,5]");
            unit.gold.emplace(t, Label(v));
        }
        unit.unit_id = unit.pane.pane_id;
        unit.query_id = group.query_id;
        unit.query = group.query;
        try {
            validate_pane(unit.pane);
        } catch (const InvariantError& e) {
            throw InvariantError("line " + std::to_string(line) + ": " + e.what());
        }
        group.unit_ids.push_back(unit.unit_id);
        units.push_back(std::move(unit));
    }
    return Corpus(std::move(groups), std::move(units), options.strict_group_size);
}

Corpus synthesize_corpus(const SynthSpec& spec) {
    if (spec.units == 0) throw ConfigError("synthetic corpus needs at least one unit");
    if (spec.min_panes == 0 || spec.min_panes > spec.max_panes)
        throw ConfigError("invalid pane-count range");
    if (spec.min_options < kMinOptions || spec.max_options > kMaxOptions ||
        spec.min_options > spec.max_options)
        throw ConfigError("invalid option-count range");
    const double mass = std::accumulate(spec.label_prior.begin(), spec.label_prior.end(), 0.0);
    if (!(mass > 0.0)) throw ConfigError("label prior has no mass");

    Rng rng(hash_combine(spec.seed, 0x51u));
    auto draw_label = [&]() {
        double u = rng.uniform() * mass;
        for (std::size_t k = 0; k < kNumLabels; ++k) {
            if (u < spec.label_prior[k]) return Label(static_cast<int>(k) + kMinLabel);
            u -= spec.label_prior[k];
        }
        return Label(kMaxLabel);
    };
    auto draw_range = [&](std::size_t lo, std::size_t hi) {
        return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
    };

    std::vector<QueryGroup> groups;
    std::vector<AnnotationUnit> units;
    std::size_t q = 0;
    while (units.size() < spec.units) {
        ++q;
        const std::size_t left = spec.units - units.size();
        std::size_t panes = std::min(draw_range(spec.min_panes, spec.max_panes), left);
        QueryGroup group{"q" + std::to_string(q), "synthetic query " + std::to_string(q), {}};
        for (std::size_t p = 0; p < panes; ++p) {
            AnnotationUnit u;
            u.pane.pane_id = group.query_id + "-p" + std::to_string(p + 1);
            u.pane.question = "What would you like to know about " + group.query + "?";
            const std::size_t n_opts = draw_range(spec.min_options, spec.max_options);
            for (std::size_t o = 0; o < n_opts; ++o)
                u.pane.options.push_back("aspect " + std::to_string(p + 1) + "." +
                                         std::to_string(o + 1));
            for (auto t : kAllTasks) u.gold.emplace(t, draw_label());
            u.unit_id = u.pane.pane_id;
            u.query_id = group.query_id;
            u.query = group.query;
            group.unit_ids.push_back(u.unit_id);
            units.push_back(std::move(u));
        }
        groups.push_back(std::move(group));
    }
    return Corpus(std::move(groups), std::move(units), false);
}

}  // namespace hitl
