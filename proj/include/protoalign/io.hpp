#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protoalign {

/// Shortest-safe decimal form with 17 significant digits; parses back to
/// the identical double.
std::string format_real(double x);
double parse_real(std::string_view text);
long long parse_integer(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

std::string read_file(const std::string& path);
/// Truncates and writes; throws Error when the path is not writable.
void write_file(const std::string& path, std::string_view contents);

}  // namespace protoalign
