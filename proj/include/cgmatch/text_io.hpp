#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cgmatch::text_io {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace cgmatch::text_io
