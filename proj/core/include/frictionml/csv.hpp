#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace frictionml::csv {

// Splits one CSV line on ',' (no quoting; the project formats never quote).
std::vector<std::string_view> split(std::string_view line);

std::string_view trim(std::string_view s);

// Shortest round-trip representation; "nan" never appears, missing values
// are written as the empty string.
std::string format_double(double v);

// Fixed-point with the given number of decimals.
std::string format_fixed(double v, int decimals);

// Parses a full double token; throws std::invalid_argument on junk.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string join(const std::vector<std::string>& parts, char sep = ',');

}  // namespace frictionml::csv
