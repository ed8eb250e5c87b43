#include "hitl/types.hpp"

namespace hitl {

std::string_view to_string(TaskKind task) {
    switch (task) {
        case TaskKind::Preference: return "preference";
        case TaskKind::Quality: return "quality";
        case TaskKind::Coverage: return "coverage";
        case TaskKind::Diversity: return "diversity";
        case TaskKind::OptionOrder: return "option_order";
    }
    return "unknown";
}

std::optional<TaskKind> try_parse_task(std::string_view name) {
    for (auto t : kAllTasks)
        if (to_string(t) == name) return t;
    return std::nullopt;
}

TaskKind parse_task(std::string_view name) {
    if (auto t = try_parse_task(name)) return *t;
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

}  // namespace hitl
