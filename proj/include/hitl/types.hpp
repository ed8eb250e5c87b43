#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hitl {

// Error hierarchy. Every module throws one of these; the CLI maps them to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& reason)
        : Error("line " + std::to_string(line) + ": " + reason), line_(line) {}
    explicit ParseError(const std::string& reason) : Error(reason) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class UpstreamError : public Error {
public:
    using Error::Error;
};

enum class TaskKind { Preference, Quality, Coverage, Diversity, OptionOrder };

inline constexpr std::array<TaskKind, 5> kAllTasks = {
    TaskKind::Preference, TaskKind::Quality, TaskKind::Coverage, TaskKind::Diversity,
    TaskKind::OptionOrder};

// Preference is rated over a whole query group; every other task rates one pane.
constexpr bool is_listwise(TaskKind task) { return task == TaskKind::Preference; }

std::string_view to_string(TaskKind task);
// Accepts the corpus keys (preference, quality, coverage, diversity, option_order).
TaskKind parse_task(std::string_view name);
std::optional<TaskKind> try_parse_task(std::string_view name);

inline constexpr int kMinLabel = 1;
inline constexpr int kMaxLabel = 5;
inline constexpr int kNumLabels = kMaxLabel - kMinLabel + 1;

// Ordinal label on the five-level scale.
class Label {
public:
    constexpr Label() = default;
    explicit Label(int value) : value_(value) {
        if (value < kMinLabel || value > kMaxLabel)
            throw RangeError("label " + std::to_string(value) + " outside [1,5]");
    }

    constexpr int value() const { return value_; }
    constexpr std::size_t index() const { return static_cast<std::size_t>(value_ - kMinLabel); }

    friend constexpr auto operator<=>(const Label&, const Label&) = default;

private:
    int value_ = kMinLabel;
};

inline bool valid_label(int value) { return value >= kMinLabel && value <= kMaxLabel; }

using UnitId = std::string;

}  // namespace hitl
