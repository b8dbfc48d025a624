#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace kgr {

// Calendar date; ordering is chronological.
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const Date&) const = default;

    // Accepts YYYY-MM-DD, optionally followed by a time part ("T..." or " ...").
    static std::optional<Date> parse(std::string_view text);
    std::string to_string() const;
};

}  // namespace kgr
