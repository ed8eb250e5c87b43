#pragma once

#include <map>
#include <string>
#include <string_view>

namespace hitl::detail {

// Keyed by "<task>.<mode>", e.g. "quality.fss". Generated from templates/ at build time.
const std::map<std::string, std::string_view>& builtin_template_sources();

}  // namespace hitl::detail
