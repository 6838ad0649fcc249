#include "textdoc.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "error.hpp"
#include "types.hpp"

namespace trustcal::textdoc {

namespace {

struct CategorySet {
  const char* dimension;
  std::vector<std::string> names;
};

const std::vector<CategorySet>& category_sets() {
  static const std::vector<CategorySet> sets = [] {
    std::vector<CategorySet> out;
    auto add = [&](const char* dim, std::size_t n, auto namer) {
      CategorySet cs{dim, {}};
      for (std::size_t i = 0; i < n; ++i) cs.names.emplace_back(namer(i));
      out.push_back(std::move(cs));
    };
    add("trust", kTrustLevels, [](std::size_t i) { return name(static_cast<Trust>(i)); });
    add("workload", kWorkloadLevels, [](std::size_t i) { return name(static_cast<Workload>(i)); });
    add("transparency", kTransparencyLevels,
        [](std::size_t i) { return name(static_cast<Transparency>(i)); });
    add("reliability", kReliabilityLevels,
        [](std::size_t i) { return name(static_cast<Reliability>(i)); });
    add("traffic", kTrafficLevels, [](std::size_t i) { return name(static_cast<Traffic>(i)); });
    add("pedestrians", kPedestrianLevels,
        [](std::size_t i) { return name(static_cast<Pedestrians>(i)); });
    add("reliance", kRelianceLevels, [](std::size_t i) { return name(static_cast<Reliance>(i)); });
    add("gaze", kGazeLevels, [](std::size_t i) { return name(static_cast<Gaze>(i)); });
    return out;
  }();
  return sets;
}

}  // namespace

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    auto raw = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    ++number;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    Line line{number, std::string(raw), {}};
    std::size_t i = 0;
    while (i < raw.size()) {
      while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t')) ++i;
      std::size_t j = i;
      while (j < raw.size() && raw[j] != ' ' && raw[j] != '\t') ++j;
      if (j > i) line.tokens.emplace_back(raw.substr(i, j - i));
      i = j;
    }
    if (!line.tokens.empty() && line.tokens.front()[0] != '#') lines.push_back(std::move(line));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return lines;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s) {
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    fail(ErrorCode::Parse, "malformed number '" + tmp + "'");
  }
  return v;
}

long long parse_int(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::Parse, "malformed integer '" + std::string(s) + "'");
  }
  return v;
}

std::string categories_block() {
  std::string out;
  for (const auto& cs : category_sets()) {
    out += "categories ";
    out += cs.dimension;
    for (const auto& n : cs.names) {
      out += ' ';
      out += n;
    }
    out += '\n';
  }
  return out;
}

bool check_categories(const Line& line) {
  if (line.tokens.empty() || line.tokens[0] != "categories") return false;
  if (line.tokens.size() < 2) parse_error(line, "categories line needs a dimension");
  for (const auto& cs : category_sets()) {
    if (line.tokens[1] != cs.dimension) continue;
    std::vector<std::string> got(line.tokens.begin() + 2, line.tokens.end());
    if (got != cs.names) {
      fail(ErrorCode::SchemaMismatch, "line " + std::to_string(line.number) +
                                          ": category set for '" + cs.dimension +
                                          "' does not match this build");
    }
    return true;
  }
  fail(ErrorCode::SchemaMismatch,
       "line " + std::to_string(line.number) + ": unknown category dimension '" +
           line.tokens[1] + "'");
}

void require_all_categories(std::size_t seen) {
  if (seen != category_sets().size()) {
    fail(ErrorCode::SchemaMismatch, "document does not declare every category set");
  }
}

void expect_schema(const std::vector<Line>& lines, std::string_view schema) {
  if (lines.empty()) fail(ErrorCode::Parse, "empty document");
  const auto& tag = lines.front().tokens.front();
  if (tag == schema) return;
  auto slash = schema.find('/');
  if (tag.compare(0, slash + 1, schema.substr(0, slash + 1)) == 0) {
    fail(ErrorCode::SchemaMismatch,
         "unsupported schema version '" + tag + "', expected '" + std::string(schema) + "'");
  }
  fail(ErrorCode::Parse, "not a " + std::string(schema) + " document");
}

void parse_error(const Line& line, const std::string& what) {
  fail(ErrorCode::Parse, "line " + std::to_string(line.number) + ": " + what);
}

std::string rest_of_line(const Line& line) {
  auto pos = line.raw.find(line.tokens.front());
  pos += line.tokens.front().size();
  while (pos < line.raw.size() && (line.raw[pos] == ' ' || line.raw[pos] == '\t')) ++pos;
  return line.raw.substr(pos);
}

}  // namespace trustcal::textdoc
