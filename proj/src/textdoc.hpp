#pragma once

// Line-oriented text documents shared by the model and policy formats.
// One record per line, whitespace-separated tokens, '#' starts a comment line.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace trustcal::textdoc {

struct Line {
  std::size_t number = 0;
  std::string raw;
  std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::string_view text);

/// Shortest decimal with 17 significant digits ("%.17g").
std::string format_double(double v);
/// Throws Parse on malformed or trailing garbage.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

/// `categories <dim> <names...>` lines for every categorical dimension.
std::string categories_block();
/// Compares one `categories` line against the built-in sets. Returns false
/// when the line is not a categories line. Throws SchemaMismatch on
/// disagreement.
bool check_categories(const Line& line);
/// Throws SchemaMismatch unless all category dimensions were seen.
void require_all_categories(std::size_t seen);

/// Checks that the first record is the schema tag. Throws SchemaMismatch for
/// a different version and Parse otherwise.
void expect_schema(const std::vector<Line>& lines, std::string_view schema);

[[noreturn]] void parse_error(const Line& line, const std::string& what);

/// Everything after the first token, verbatim.
std::string rest_of_line(const Line& line);

}  // namespace trustcal::textdoc
