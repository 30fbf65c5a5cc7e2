#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace xmixup {

/// Shortest text for `value` with 17 significant digits; round-trips exactly.
std::string format_double(double value);

/// Strict parse of a whole field; returns false on any trailing garbage.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace xmixup
